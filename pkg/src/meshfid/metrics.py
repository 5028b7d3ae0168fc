"""Classical full-reference baselines: Chamfer distance, voxel IoU,
F-score, point-to-surface, normal difference, unidirectional Hausdorff.

All metrics operate on shapes normalized by the *reference* mesh transform,
so scale errors in the input are penalized rather than silently removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import build_index
from .meshio import (
    ColoredMesh,
    ColoredPointCloud,
    DegenerateMeshError,
    MeshError,
    face_areas,
    normalize,
    sample_points,
)

__all__ = [
    "MetricResult",
    "MetricConfig",
    "chamfer",
    "iou_voxel",
    "fscore",
    "p2s",
    "normal_difference",
    "uhd",
    "run_all",
    "METRIC_ORIENTATIONS",
]

# orientation: True = higher is better
METRIC_ORIENTATIONS = {
    "cd": False,
    "iou": True,
    "fscore": True,
    "p2s": False,
    "nd": False,
    "uhd": False,
}


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    higher_better: bool
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"{self.name}: non-finite metric value")

    def to_dict(self) -> dict:
        return {
            "metric": self.name,
            "value": self.value,
            "orientation": "higher" if self.higher_better else "lower",
            "params": self.params,
        }


@dataclass(frozen=True)
class MetricConfig:
    n_points: int = 2048
    seed: int = 0
    iou_resolution: int = 64
    iou_seed: int = 1
    fscore_tau: float | None = None  # None -> 1% of reference bbox diagonal
    metrics: tuple = ("cd", "iou", "fscore", "p2s", "nd", "uhd")


def _nn_sq_dists(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Squared distance from each src point to its nearest dst point."""
    idx = build_index(dst)
    _, nn = idx.tree.query(src, k=1)
    diff = dst[nn] - src
    return (diff * diff).sum(axis=1)


def _nn_indices(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    idx = build_index(dst)
    _, nn = idx.tree.query(src, k=1)
    return nn


def chamfer(a: ColoredPointCloud, b: ColoredPointCloud) -> float:
    """0.5 * (mean squared NN distance a->b + b->a); symmetric."""
    d_ab = _nn_sq_dists(a.points, b.points).mean()
    d_ba = _nn_sq_dists(b.points, a.points).mean()
    return 0.5 * (d_ab + d_ba)


def uhd(a: ColoredPointCloud, b: ColoredPointCloud) -> float:
    """Max over a of Euclidean NN distance to b (input -> reference)."""
    return float(np.sqrt(_nn_sq_dists(a.points, b.points).max()))


def fscore(a: ColoredPointCloud, b: ColoredPointCloud, tau: float) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    tau_sq = tau * tau
    precision = float((_nn_sq_dists(a.points, b.points) <= tau_sq).mean())
    recall = float((_nn_sq_dists(b.points, a.points) <= tau_sq).mean())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def normal_difference(a: ColoredPointCloud, b: ColoredPointCloud) -> float:
    """Mean (1 - |cos angle|) between matched NN normals, symmetrized.
    The absolute value makes the measure orientation-agnostic."""
    if a.normals is None or b.normals is None:
        raise MeshError("normal_difference requires clouds with normals")

    def one_way(src: ColoredPointCloud, dst: ColoredPointCloud) -> float:
        nn = _nn_indices(src.points, dst.points)
        cos = np.abs((src.normals * dst.normals[nn]).sum(axis=1))
        return float((1.0 - np.clip(cos, 0.0, 1.0)).mean())

    return 0.5 * (one_way(a, b) + one_way(b, a))


def _point_triangle_sq_dist(p: np.ndarray, a, b, c) -> np.ndarray:
    """Exact squared point-to-triangle distances (Ericson closest-point)."""
    ab, ac = b - a, c - a
    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    closest = np.empty_like(p)
    closest[:] = a  # region: vertex a
    m = (d3 >= 0) & (d4 <= d3)
    closest[m] = b
    m = (d6 >= 0) & (d5 <= d6)
    closest[m] = c
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 != 0, d1 - d3, 1.0), 0.0)
    closest[m] = a + t[m, None] * ab
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 != 0, d2 - d6, 1.0), 0.0)
    closest[m] = a + t[m, None] * ac
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t = np.where(denom != 0, (d4 - d3) / np.where(denom != 0, denom, 1.0), 0.0)
    closest[m] = b + t[m, None] * (c - b)
    inside = (va > 0) & (vb > 0) & (vc > 0)
    denom = va + vb + vc
    v = vb / np.where(denom != 0, denom, 1.0)
    w = vc / np.where(denom != 0, denom, 1.0)
    closest[inside] = a + v[inside, None] * ab + w[inside, None] * ac
    diff = p - closest
    return (diff * diff).sum(axis=1)


def p2s(points: ColoredPointCloud, reference: ColoredMesh) -> float:
    """Mean exact Euclidean point-to-surface distance over reference faces."""
    areas = face_areas(reference)
    live = np.nonzero(areas > 0)[0]
    if live.size == 0:
        raise DegenerateMeshError("reference has no nondegenerate triangle")
    p = points.points
    best = np.full(p.shape[0], np.inf)
    verts = reference.vertices
    for fi in live:
        ia, ib, ic = reference.faces[fi]
        np.minimum(best, _point_triangle_sq_dist(p, verts[ia], verts[ib], verts[ic]), out=best)
    return float(np.sqrt(best).mean())


def voxelize_surface(mesh: ColoredMesh, resolution: int, n_samples: int, seed: int) -> set:
    """Occupied shell voxels of a normalized mesh on a [-1,1]^3 grid."""
    cloud = sample_points(mesh, n_samples, seed=seed)
    ijk = np.floor((cloud.points + 1.0) * 0.5 * resolution).astype(np.int64)
    np.clip(ijk, 0, resolution - 1, out=ijk)
    return set(map(tuple, ijk))


def iou_voxel(a: ColoredMesh, b: ColoredMesh, resolution: int = 64, seed: int = 1) -> float:
    """Surface-occupancy IoU on a shared [-1,1]^3 grid; both meshes must
    already be normalized into that cube."""
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    n_samples = 8 * resolution * resolution
    occ_a = voxelize_surface(a, resolution, n_samples, seed)
    occ_b = voxelize_surface(b, resolution, n_samples, seed)
    union = len(occ_a | occ_b)
    if union == 0:
        raise DegenerateMeshError("zero voxel union")
    return len(occ_a & occ_b) / union


def run_all(input_mesh: ColoredMesh, reference: ColoredMesh, config: MetricConfig = MetricConfig()) -> list[MetricResult]:
    """Evaluate the configured metrics with both shapes normalized by the
    reference transform and sampled with the configured count/seed."""
    _, transform = normalize(reference)
    ref_n = transform.apply_mesh(reference)
    in_n = transform.apply_mesh(input_mesh)
    need_normals = "nd" in config.metrics
    cloud_in = sample_points(in_n, config.n_points, seed=config.seed, with_normals=need_normals)
    cloud_ref = sample_points(ref_n, config.n_points, seed=config.seed, with_normals=need_normals)

    tau = config.fscore_tau
    if tau is None:
        bbox = ref_n.vertices.max(axis=0) - ref_n.vertices.min(axis=0)
        tau = 0.01 * float(np.linalg.norm(bbox))

    results = []
    common = {"n_points": config.n_points, "seed": config.seed}
    for name in config.metrics:
        if name == "cd":
            value = chamfer(cloud_in, cloud_ref)
            params = {**common, "convention": "0.5*(mean sq NN a->b + b->a)"}
        elif name == "iou":
            value = iou_voxel(in_n, ref_n, config.iou_resolution, config.iou_seed)
            params = {"resolution": config.iou_resolution, "seed": config.iou_seed, "occupancy": "surface"}
        elif name == "fscore":
            value = fscore(cloud_in, cloud_ref, tau)
            params = {**common, "tau": tau}
        elif name == "p2s":
            value = p2s(cloud_in, ref_n)
            params = dict(common)
        elif name == "nd":
            value = normal_difference(cloud_in, cloud_ref)
            params = {**common, "convention": "symmetrized 1-|cos|"}
        elif name == "uhd":
            value = uhd(cloud_in, cloud_ref)
            params = dict(common)
        else:
            raise ValueError(f"unknown metric {name!r}")
        results.append(MetricResult(name, float(value), METRIC_ORIENTATIONS[name], params))
    return results
