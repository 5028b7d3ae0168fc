"""Textured mesh ingestion: OBJ/PLY loading, validation, normalization,
and surface sampling into colored point clouds.

Vertex colors are the canonical appearance representation; UV-textured
meshes must be pre-baked to vertex colors before ingestion.  All sampling
uses numpy's PCG64 generator so identical seeds give bit-identical clouds
on every platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ColoredMesh",
    "ColoredPointCloud",
    "NormalizationTransform",
    "MeshError",
    "MeshLoadError",
    "MissingVertexColorsError",
    "DegenerateMeshError",
    "load_mesh",
    "save_mesh",
    "normalize",
    "sample_points",
]


class MeshError(Exception):
    """Base class for mesh ingestion failures."""


class MeshLoadError(MeshError):
    """Unreadable file or unsupported format."""


class MissingVertexColorsError(MeshLoadError):
    """The file carries no per-vertex colors; caller must supply a policy."""


class DegenerateMeshError(MeshError):
    """Zero-extent or zero-area geometry where positive measure is required."""


@dataclass(frozen=True)
class ColoredMesh:
    """Triangle mesh with per-vertex RGB colors in [0,1]."""

    vertices: np.ndarray  # (n, 3) float64
    colors: np.ndarray  # (n, 3) float64 in [0,1]
    faces: np.ndarray  # (m, 3) int64
    name: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
            raise MeshError(f"vertices must be (n>=1, 3), got {v.shape}")
        if c.shape != v.shape:
            raise MeshError(f"need one color per vertex: {c.shape} vs {v.shape}")
        if c.min(initial=0.0) < 0.0 or c.max(initial=0.0) > 1.0:
            raise MeshError("color channels must lie in [0,1]")
        if f.size:
            if f.ndim != 2 or f.shape[1] != 3:
                raise MeshError(f"faces must be (m, 3) triangles, got {f.shape}")
            if f.min() < 0 or f.max() >= v.shape[0]:
                raise MeshError("face index out of range")
        else:
            f = f.reshape(0, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "colors", c)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]


@dataclass(frozen=True)
class ColoredPointCloud:
    """Points sampled from a mesh surface, with interpolated colors."""

    points: np.ndarray  # (n, 3)
    colors: np.ndarray  # (n, 3) in [0,1]
    normals: np.ndarray | None = None  # (n, 3) unit vectors
    source: str = ""
    seed: int = 0

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.float64))
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
            raise MeshError(f"points must be (n>=1, 3), got {p.shape}")
        if c.shape != p.shape:
            raise MeshError("need one color per point")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "colors", c)
        if self.normals is not None:
            nrm = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64))
            if nrm.shape != p.shape:
                raise MeshError("need one normal per point")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise MeshError("normals must have unit length within 1e-6")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class NormalizationTransform:
    """Maps original coordinates to the centered unit-radius frame:
    x' = (x + translation) * scale."""

    translation: np.ndarray  # (3,)
    scale: float

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.scale <= 0:
            raise MeshError("scale must be positive")
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) + self.translation) * self.scale

    def apply_mesh(self, mesh: ColoredMesh) -> ColoredMesh:
        return ColoredMesh(self.apply(mesh.vertices), mesh.colors, mesh.faces, mesh.name)


# ---- loading -------------------------------------------------------------


def load_mesh(path, format_hint: str | None = None) -> ColoredMesh:
    """Load an OBJ (6-float vertex lines) or PLY mesh with vertex colors.

    Polygon faces are fan-triangulated; 0-255 integer color channels are
    rescaled to [0,1].
    """
    path = Path(path)
    if not path.exists():
        raise MeshLoadError(f"no such file: {path}")
    fmt = (format_hint or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "ply":
        return _load_ply(path)
    raise MeshLoadError(f"unsupported format: {fmt!r} (expected obj or ply)")


def _fan_triangulate(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _load_obj(path: Path) -> ColoredMesh:
    vertices, colors, faces = [], [], []
    has_color = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vals = [float(x) for x in parts[1:]]
                if len(vals) == 3:
                    if has_color is True:
                        raise MeshLoadError(f"{path}:{lineno}: inconsistent vertex color presence")
                    has_color = False
                    vertices.append(vals)
                elif len(vals) >= 6:
                    if has_color is False:
                        raise MeshLoadError(f"{path}:{lineno}: inconsistent vertex color presence")
                    has_color = True
                    vertices.append(vals[:3])
                    colors.append(vals[3:6])
                else:
                    raise MeshLoadError(f"{path}:{lineno}: bad vertex line")
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise MeshLoadError(f"{path}:{lineno}: face with <3 vertices")
                faces.extend(_fan_triangulate(idx))
    if not vertices:
        raise MeshLoadError(f"{path}: no vertices")
    if not has_color:
        raise MissingVertexColorsError(f"{path}: missing vertex colors")
    col = np.array(colors, dtype=np.float64)
    if col.max(initial=0.0) > 1.0:
        col = col / 255.0  # 0-255 convention
    return ColoredMesh(np.array(vertices), col, np.array(faces, dtype=np.int64).reshape(-1, 3), name=path.stem)


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _load_ply(path: Path) -> ColoredMesh:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshLoadError(f"{path}: not a PLY file")
        fmt = None
        elements = []  # list of (name, count, [(prop_name, type, list_types|None)])
        while True:
            line = fh.readline()
            if not line:
                raise MeshLoadError(f"{path}: truncated PLY header")
            parts = line.decode("ascii").split()
            if not parts:
                continue
            if parts[0] == "comment":
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], parts[3], parts[2]))
                else:
                    elements[-1][2].append((parts[2], parts[1], None))
            elif parts[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshLoadError(f"{path}: unsupported PLY format {fmt!r}")
        data = {}
        for name, count, props in elements:
            if fmt == "ascii":
                data[name] = _read_ply_ascii_element(fh, count, props)
            else:
                data[name] = _read_ply_binary_element(fh, count, props)

    if "vertex" not in data:
        raise MeshLoadError(f"{path}: no vertex element")
    vprops, vrows = data["vertex"]
    names = [p[0] for p in vprops]
    for needed in ("x", "y", "z"):
        if needed not in names:
            raise MeshLoadError(f"{path}: vertex missing {needed}")
    if not all(ch in names for ch in ("red", "green", "blue")):
        raise MissingVertexColorsError(f"{path}: missing vertex colors")
    cols = {n: np.array([row[i] for row in vrows]) for i, n in enumerate(names)}
    vertices = np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)
    colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1).astype(np.float64)
    ctype = vprops[names.index("red")][1]
    if ctype in ("uchar", "uint8"):
        colors = colors / 255.0
    elif ctype in ("ushort", "uint16"):
        colors = colors / 65535.0

    faces = []
    if "face" in data:
        fprops, frows = data["face"]
        fnames = [p[0] for p in fprops]
        li = next((i for i, n in enumerate(fnames) if n in ("vertex_indices", "vertex_index")), None)
        if li is None:
            raise MeshLoadError(f"{path}: face element without vertex_indices")
        for row in frows:
            poly = [int(v) for v in row[li]]
            if len(poly) < 3:
                raise MeshLoadError(f"{path}: face with <3 vertices")
            faces.extend(_fan_triangulate(poly))
    return ColoredMesh(vertices, colors, np.array(faces, dtype=np.int64).reshape(-1, 3), name=path.stem)


def _read_ply_ascii_element(fh, count, props):
    rows = []
    for _ in range(count):
        toks = fh.readline().decode("ascii").split()
        row, pos = [], 0
        for _, ptype, ltype in props:
            cast = int if _PLY_TYPES[ptype][0] in "iu" else float
            if ltype is None:
                row.append(cast(toks[pos]))
                pos += 1
            else:
                n = int(toks[pos])
                pos += 1
                row.append([cast(t) for t in toks[pos : pos + n]])
                pos += n
        rows.append(row)
    return props, rows


def _read_ply_binary_element(fh, count, props):
    rows = []
    for _ in range(count):
        row = []
        for _, ptype, ltype in props:
            dt = np.dtype("<" + _PLY_TYPES[ptype])
            if ltype is None:
                row.append(np.frombuffer(fh.read(dt.itemsize), dtype=dt)[0])
            else:
                ldt = np.dtype("<" + _PLY_TYPES[ltype])
                n = int(np.frombuffer(fh.read(ldt.itemsize), dtype=ldt)[0])
                row.append(np.frombuffer(fh.read(dt.itemsize * n), dtype=dt).tolist())
        rows.append(row)
    return props, rows


# ---- saving --------------------------------------------------------------


def save_mesh(mesh: ColoredMesh, path, format: str | None = None, binary: bool = False) -> None:
    """Write OBJ or PLY.  ASCII output uses %.17g so round-trips are exact;
    binary PLY stores doubles (bit-exact round trip)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        with open(path, "w") as fh:
            for v, c in zip(mesh.vertices, mesh.colors):
                fh.write("v " + " ".join("%.17g" % x for x in (*v, *c)) + "\n")
            for f in mesh.faces:
                fh.write(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n")
        return
    if fmt != "ply":
        raise MeshLoadError(f"unsupported output format: {fmt!r}")
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x", "property double y", "property double z",
        "property double red", "property double green", "property double blue",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    if binary:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            np.hstack([mesh.vertices, mesh.colors]).astype("<f8").tofile(fh)
            for f in mesh.faces:
                fh.write(struct.pack("<Biii", 3, *[int(i) for i in f]))
    else:
        with open(path, "w") as fh:
            fh.write("\n".join(header) + "\n")
            for v, c in zip(mesh.vertices, mesh.colors):
                fh.write(" ".join("%.17g" % x for x in (*v, *c)) + "\n")
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


# ---- normalization and sampling -----------------------------------------


def normalize(mesh: ColoredMesh) -> tuple[ColoredMesh, NormalizationTransform]:
    """Center the mesh at the vertex centroid and scale the farthest vertex
    to distance 1.  Idempotent up to 1e-9."""
    centroid = mesh.vertices.mean(axis=0)
    centered = mesh.vertices - centroid
    extent = float(np.linalg.norm(centered, axis=1).max())
    if extent < 1e-12:
        raise DegenerateMeshError("all vertices coincident; cannot normalize")
    transform = NormalizationTransform(translation=-centroid, scale=1.0 / extent)
    return transform.apply_mesh(mesh), transform


def face_areas(mesh: ColoredMesh) -> np.ndarray:
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def face_normals(mesh: ColoredMesh) -> np.ndarray:
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    n = np.cross(b - a, c - a)
    lengths = np.linalg.norm(n, axis=1, keepdims=True)
    lengths[lengths == 0] = 1.0
    return n / lengths


def sample_points(mesh: ColoredMesh, n: int, seed: int = 0, with_normals: bool = False) -> ColoredPointCloud:
    """Area-weighted surface sampling with barycentric color interpolation.

    Deterministic per (mesh, n, seed): faces are drawn from PCG64(seed) and
    barycentric coordinates from the same stream.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    if mesh.n_faces < 1:
        raise DegenerateMeshError("mesh has no faces to sample")
    areas = face_areas(mesh)
    total = areas.sum()
    if total <= 0:
        raise DegenerateMeshError("all faces degenerate (zero total area)")
    rng = np.random.Generator(np.random.PCG64(seed))
    face_idx = rng.choice(mesh.n_faces, size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    w0 = 1.0 - s
    w1 = s * (1.0 - r2)
    w2 = s * r2
    tri = mesh.faces[face_idx]
    va, vb, vc = mesh.vertices[tri[:, 0]], mesh.vertices[tri[:, 1]], mesh.vertices[tri[:, 2]]
    ca, cb, cc = mesh.colors[tri[:, 0]], mesh.colors[tri[:, 1]], mesh.colors[tri[:, 2]]
    pts = w0[:, None] * va + w1[:, None] * vb + w2[:, None] * vc
    cols = np.clip(w0[:, None] * ca + w1[:, None] * cb + w2[:, None] * cc, 0.0, 1.0)
    normals = None
    if with_normals:
        normals = face_normals(mesh)[face_idx]
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        lengths[lengths == 0] = 1.0
        normals = normals / lengths
    return ColoredPointCloud(pts, cols, normals=normals, source=mesh.name, seed=seed)
