import numpy as np
import pytest

from meshfid.meshio import ColoredMesh


def numeric_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += step
        xm = x.copy()
        xm[idx] -= step
        g[idx] = (f(xp) - f(xm)) / (2 * step)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Relative error guarded against near-zero denominators."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def make_cube(side: float = 2.0, center=(0.0, 0.0, 0.0)) -> ColoredMesh:
    h = side / 2.0
    corners = np.array(
        [[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)], dtype=np.float64
    ) + np.asarray(center)
    colors = (corners - corners.min(axis=0)) / side
    faces = np.array([
        [0, 1, 3], [0, 3, 2],  # x = -h
        [4, 6, 7], [4, 7, 5],  # x = +h
        [0, 4, 5], [0, 5, 1],  # y = -h
        [2, 3, 7], [2, 7, 6],  # y = +h
        [0, 2, 6], [0, 6, 4],  # z = -h
        [1, 5, 7], [1, 7, 3],  # z = +h
    ])
    return ColoredMesh(corners, colors, faces, name="cube")


def random_mesh(rng: np.random.Generator, n_vertices: int = 12, n_faces: int = 16) -> ColoredMesh:
    verts = rng.normal(size=(n_vertices, 3))
    cols = rng.random((n_vertices, 3))
    faces = np.stack([rng.choice(n_vertices, size=3, replace=False) for _ in range(n_faces)])
    return ColoredMesh(verts, cols, faces, name="random")


@pytest.fixture
def cube() -> ColoredMesh:
    return make_cube()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(12345))
