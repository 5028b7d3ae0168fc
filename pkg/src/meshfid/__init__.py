"""Rendering-free fidelity evaluation toolkit for textured 3D meshes."""

__version__ = "0.1.0"

from .meshio import ColoredMesh, ColoredPointCloud, load_mesh, normalize, sample_points
from .metrics import MetricConfig, MetricResult, run_all
from .model import TgeConfig, default_config, init_params, predict, toy_config
from .stats import krocc, plcc, srocc

__all__ = [
    "ColoredMesh",
    "ColoredPointCloud",
    "load_mesh",
    "normalize",
    "sample_points",
    "MetricConfig",
    "MetricResult",
    "run_all",
    "TgeConfig",
    "default_config",
    "toy_config",
    "init_params",
    "predict",
    "plcc",
    "srocc",
    "krocc",
]
