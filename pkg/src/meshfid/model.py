"""Siamese colored-point-set fidelity network.

Two hierarchical set-abstraction levels fuse a geometry stream and a latent
color stream per scale: each stream is PointNet-encoded over ball-query
groups, projected to a shared embedding width, refined by self-attention,
and fused by cross-attention (geometry as query) plus a feed-forward block.
A final global set-abstraction yields one descriptor per mesh; the two
descriptors are combined and mapped through an MLP head with a sigmoid to a
fidelity score in (0,1).

Grouping (FPS + ball query) depends only on point positions, so it is
precomputed once per cloud as a `GroupPlan` and reused across training
steps.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Parameter, Tensor, concat, scaled_dot_attention
from .geometry import ball_query, build_index, farthest_point_sample
from .meshio import ColoredMesh, ColoredPointCloud, normalize, sample_points

__all__ = [
    "LgsaConfig",
    "TgeConfig",
    "TgeParams",
    "default_config",
    "toy_config",
    "init_params",
    "build_plan",
    "encode_cloud",
    "encode_from_plan",
    "compare",
    "predict",
    "predict_tensor",
    "save_checkpoint",
    "load_checkpoint",
    "FingerprintMismatchError",
    "ABLATIONS",
]

ABLATIONS = ("none", "no_attention_latent", "no_attention", "no_self_attention", "no_geometry_feature")


class FingerprintMismatchError(Exception):
    """Checkpoint architecture does not match the requested config."""


@dataclass(frozen=True)
class LgsaConfig:
    """One set-abstraction level: FPS centroid count, multi-scale grouping,
    per-scale PointNet channel lists, and attention widths."""

    centroids: int
    radii: tuple
    max_samples: tuple
    geom_mlp_dims: tuple  # per scale: tuple of channel widths
    latent_mlp_dims: tuple
    out_dims: tuple  # per scale fused output width
    d_emb: int
    heads: int

    def __post_init__(self):
        n_scales = len(self.radii)
        for name in ("max_samples", "geom_mlp_dims", "latent_mlp_dims", "out_dims"):
            if len(getattr(self, name)) != n_scales:
                raise ValueError(f"{name} must have one entry per scale")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.centroids < 1:
            raise ValueError("centroids must be >= 1")
        if self.d_emb % self.heads != 0:
            raise ValueError("d_emb must be divisible by heads")
        for dims in (*self.geom_mlp_dims, *self.latent_mlp_dims):
            if any(d < 1 for d in dims):
                raise ValueError("MLP widths must be >= 1")

    @property
    def out_dim(self) -> int:
        return sum(self.out_dims)


@dataclass(frozen=True)
class TgeConfig:
    n_points: int
    level1: LgsaConfig
    level2: LgsaConfig
    final_mlp_dims: tuple
    head_dims: tuple = (1024, 512, 256)
    comparison_mode: str = "concat_diff"  # concat_diff | concat | diff
    ablation: str = "none"
    canonical_sort: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.comparison_mode not in ("concat_diff", "concat", "diff"):
            raise ValueError(f"unknown comparison_mode {self.comparison_mode!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.n_points < self.level1.centroids or self.level1.centroids < self.level2.centroids:
            raise ValueError("point counts must be nonincreasing across levels")

    @property
    def final_dim(self) -> int:
        return self.final_mlp_dims[-1]

    @property
    def latent_widths(self) -> tuple:
        # level-1 latent input is raw RGB; level-2 consumes level-1 output
        return (3, self.level1.out_dim)

    def fingerprint(self) -> str:
        arch = asdict(self)
        arch.pop("seed")  # the seed is not part of the architecture
        blob = json.dumps(arch, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_config(seed: int = 0) -> TgeConfig:
    """Canonical two-level multi-scale-grouping architecture."""
    return TgeConfig(
        n_points=1024,
        level1=LgsaConfig(
            centroids=512,
            radii=(0.1, 0.2, 0.4),
            max_samples=(16, 32, 128),
            geom_mlp_dims=((32, 32, 64), (64, 64, 96), (64, 96, 96)),
            latent_mlp_dims=((32, 32, 64), (64, 64, 96), (64, 96, 96)),
            out_dims=(64, 96, 96),  # sums to 256
            d_emb=96,
            heads=4,
        ),
        level2=LgsaConfig(
            centroids=128,
            radii=(0.2, 0.4, 0.8),
            max_samples=(32, 64, 128),
            geom_mlp_dims=((64, 64, 128), (128, 128, 192), (128, 128, 192)),
            latent_mlp_dims=((64, 64, 128), (128, 128, 192), (128, 128, 192)),
            out_dims=(128, 192, 192),  # sums to 512
            d_emb=192,
            heads=4,
        ),
        final_mlp_dims=(256, 512, 1024),
        head_dims=(1024, 512, 256),
        seed=seed,
    )


def toy_config(seed: int = 0, n_points: int = 64, ablation: str = "none") -> TgeConfig:
    """Small configuration for gradient checks and overfit runs."""
    return TgeConfig(
        n_points=n_points,
        level1=LgsaConfig(
            centroids=max(4, n_points // 4),
            radii=(0.4,),
            max_samples=(8,),
            geom_mlp_dims=((16, 16),),
            latent_mlp_dims=((16, 16),),
            out_dims=(16,),
            d_emb=16,
            heads=2,
        ),
        level2=LgsaConfig(
            centroids=max(2, n_points // 8),
            radii=(0.8,),
            max_samples=(8,),
            geom_mlp_dims=((16, 24),),
            latent_mlp_dims=((16, 24),),
            out_dims=(24,),
            d_emb=16,
            heads=2,
        ),
        final_mlp_dims=(32, 32),
        head_dims=(32, 16),
        ablation=ablation,
        seed=seed,
    )


# ---- parameter construction ---------------------------------------------


def _attn_specs(prefix: str, d_emb: int):
    for part in ("q", "k", "v", "o"):
        yield f"{prefix}.{part}", d_emb, d_emb


def param_specs(config: TgeConfig):
    """Ordered (name, fan_in, fan_out) for every linear layer."""
    for li, (level, d_l) in enumerate(zip((config.level1, config.level2), config.latent_widths), start=1):
        for s in range(len(level.radii)):
            p = f"l{li}.s{s}"
            gdims = level.geom_mlp_dims[s]
            ldims = level.latent_mlp_dims[s]
            if config.ablation == "no_attention_latent":
                c = 3 + d_l  # single combined stream
                for i, d in enumerate(gdims):
                    yield f"{p}.comb{i}", c, d
                    c = d
                yield f"{p}.fuse", gdims[-1], level.out_dims[s]
                continue
            c = 3
            for i, d in enumerate(gdims):
                yield f"{p}.geom{i}", c, d
                c = d
            c = d_l
            for i, d in enumerate(ldims):
                yield f"{p}.lat{i}", c, d
                c = d
            yield f"{p}.gproj", gdims[-1], level.d_emb
            yield f"{p}.lproj", ldims[-1], level.d_emb
            if config.ablation != "no_attention":
                if config.ablation != "no_self_attention":
                    yield from _attn_specs(f"{p}.sag", level.d_emb)
                    yield from _attn_specs(f"{p}.sal", level.d_emb)
                yield from _attn_specs(f"{p}.ca", level.d_emb)
                yield f"{p}.ffn1", level.d_emb, 4 * level.d_emb
                yield f"{p}.ffn2", 4 * level.d_emb, level.d_emb
            fuse_in = level.d_emb if config.ablation == "no_geometry_feature" else 2 * level.d_emb
            yield f"{p}.fuse", fuse_in, level.out_dims[s]
    c = 3 + config.level2.out_dim
    for i, d in enumerate(config.final_mlp_dims):
        yield f"final.mlp{i}", c, d
        c = d
    mult = {"concat_diff": 3, "concat": 2, "diff": 1}[config.comparison_mode]
    c = mult * config.final_dim
    for i, d in enumerate(config.head_dims):
        yield f"head.{i}", c, d
        c = d
    yield "head.out", c, 1


@dataclass
class TgeParams:
    """All trainable weights plus the architecture fingerprint they fit."""

    params: dict
    fingerprint: str
    config: TgeConfig = field(repr=False)

    def parameters(self) -> list:
        return list(self.params.values())

    def n_scalars(self) -> int:
        return sum(p.tensor.size for p in self.params.values())


def init_params(config: TgeConfig, seed: int | None = None) -> TgeParams:
    """Fan-in scaled uniform weights, zero biases; deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(config.seed if seed is None else seed))
    params = {}
    for name, c_in, c_out in param_specs(config):
        bound = 1.0 / np.sqrt(c_in)
        w = rng.uniform(-bound, bound, size=(c_in, c_out))
        params[f"{name}.w"] = Parameter(Tensor(w, requires_grad=True), f"{name}.w")
        params[f"{name}.b"] = Parameter(Tensor(np.zeros(c_out), requires_grad=True), f"{name}.b")
    return TgeParams(params=params, fingerprint=config.fingerprint(), config=config)


# ---- grouping plans ------------------------------------------------------


@dataclass(frozen=True)
class LevelPlan:
    centroid_idx: np.ndarray  # (m,) into this level's input points
    scales: tuple  # per scale: (group_idx (m, k), rel_xyz (m, k, 3))


@dataclass(frozen=True)
class GroupPlan:
    levels: tuple  # (LevelPlan, LevelPlan)
    final_rel: np.ndarray  # (m2, 3) level-2 centroids relative to their mean
    n_points: int


def _group_scale(index, points, centers, radius, max_k):
    m = centers.shape[0]
    gidx = np.empty((m, max_k), dtype=np.int64)
    for i, c in enumerate(centers):
        members = ball_query(index, c, radius, max_k)
        row = members + [members[0]] * (max_k - len(members))  # pad by repeating nearest
        gidx[i] = row
    rel = points[gidx] - centers[:, None, :]
    return gidx, rel


def build_plan(points: np.ndarray, config: TgeConfig) -> GroupPlan:
    """Precompute FPS centroids and padded ball-query groups for both levels
    and the final global abstraction.  Depends only on point positions."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < config.level1.centroids:
        raise ValueError(f"need at least {config.level1.centroids} points, got {pts.shape[0]}")
    levels = []
    for li, level in enumerate((config.level1, config.level2), start=1):
        fps_idx = farthest_point_sample(pts, level.centroids, seed=config.seed * 2 + li)
        centers = pts[fps_idx]
        index = build_index(pts)
        scales = tuple(
            _group_scale(index, pts, centers, r, k) for r, k in zip(level.radii, level.max_samples)
        )
        levels.append(LevelPlan(centroid_idx=fps_idx, scales=scales))
        pts = centers
    final_rel = pts - pts.mean(axis=0)
    return GroupPlan(levels=tuple(levels), final_rel=final_rel, n_points=int(points.shape[0]))


# ---- forward pass --------------------------------------------------------


def _linear(params: dict, name: str, x: Tensor) -> Tensor:
    return x @ params[f"{name}.w"].tensor + params[f"{name}.b"].tensor


def _mlp(params: dict, prefix: str, x: Tensor, n_layers: int) -> Tensor:
    for i in range(n_layers):
        x = _linear(params, f"{prefix}{i}", x).relu()
    return x


def _mha(params: dict, prefix: str, q_in: Tensor, kv_in: Tensor, d_emb: int, heads: int) -> Tensor:
    m = q_in.shape[0]
    dh = d_emb // heads
    q = _linear(params, f"{prefix}.q", q_in).reshape(m, heads, dh).transpose((1, 0, 2))
    k = _linear(params, f"{prefix}.k", kv_in).reshape(kv_in.shape[0], heads, dh).transpose((1, 0, 2))
    v = _linear(params, f"{prefix}.v", kv_in).reshape(kv_in.shape[0], heads, dh).transpose((1, 0, 2))
    att = scaled_dot_attention(q, k, v).transpose((1, 0, 2)).reshape(m, d_emb)
    return _linear(params, f"{prefix}.o", att)


def _lgsa_scale(latent: Tensor, gidx: np.ndarray, rel: np.ndarray, level: LgsaConfig, scale: int,
                prefix: str, params: dict, ablation: str) -> Tensor:
    m, k = gidx.shape
    d_l = latent.shape[1]
    grouped_lat = latent.gather_rows(gidx.reshape(-1)).reshape(m, k, d_l)
    rel_t = Tensor(rel)
    p = f"{prefix}.s{scale}"
    n_g = len(level.geom_mlp_dims[scale])
    n_l = len(level.latent_mlp_dims[scale])

    if ablation == "no_attention_latent":
        x = concat([rel_t, grouped_lat], axis=2)
        x = _mlp(params, f"{p}.comb", x, n_g).max(axis=1)
        return _linear(params, f"{p}.fuse", x).relu()

    g = _mlp(params, f"{p}.geom", rel_t, n_g).max(axis=1)
    l = _mlp(params, f"{p}.lat", grouped_lat, n_l).max(axis=1)
    gq = _linear(params, f"{p}.gproj", g)
    lq = _linear(params, f"{p}.lproj", l)

    if ablation == "no_attention":
        fused_feat, geom_feat = lq, gq
    else:
        if ablation == "no_self_attention":
            g_ref, l_ref = gq, lq
        else:
            g_ref = _mha(params, f"{p}.sag", gq, gq, level.d_emb, level.heads)
            l_ref = _mha(params, f"{p}.sal", lq, lq, level.d_emb, level.heads)
        cross = _mha(params, f"{p}.ca", g_ref, l_ref, level.d_emb, level.heads)
        ffn = _linear(params, f"{p}.ffn2", _linear(params, f"{p}.ffn1", l_ref).relu())
        fused_feat, geom_feat = cross + ffn, g_ref

    if ablation == "no_geometry_feature":
        fused = fused_feat
    else:
        fused = concat([fused_feat, geom_feat], axis=1)
    return _linear(params, f"{p}.fuse", fused).relu()


def encode_from_plan(plan: GroupPlan, colors: Tensor, model: TgeParams) -> Tensor:
    """Run the hierarchical encoder over a precomputed grouping plan.
    `colors` is the (n, 3) latent input; gradients flow through it when it
    requires grad."""
    config = model.config
    latent = colors
    for li, (level, lvl_plan) in enumerate(zip((config.level1, config.level2), plan.levels), start=1):
        outs = [
            _lgsa_scale(latent, gidx, rel, level, s, f"l{li}", model.params, config.ablation)
            for s, (gidx, rel) in enumerate(lvl_plan.scales)
        ]
        latent = outs[0] if len(outs) == 1 else concat(outs, axis=1)
    x = concat([Tensor(plan.final_rel), latent], axis=1)
    x = _mlp(model.params, "final.mlp", x, len(config.final_mlp_dims))
    return x.max(axis=0)


def encode_cloud(cloud: ColoredPointCloud, model: TgeParams, colors: Tensor | None = None) -> Tensor:
    config = model.config
    points, cols = cloud.points, cloud.colors
    if config.canonical_sort:
        order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
        points, cols = points[order], cols[order]
    plan = build_plan(points, config)
    return encode_from_plan(plan, Tensor(cols) if colors is None else colors, model)


def compare(f_input: Tensor, f_ref: Tensor, model: TgeParams) -> Tensor:
    """Fidelity head: combine the two descriptors and map to (0,1)."""
    config = model.config
    if f_input.shape != f_ref.shape:
        raise ValueError("descriptor width mismatch")
    if config.comparison_mode == "concat_diff":
        z = concat([f_input, f_ref, (f_input - f_ref).abs()], axis=0)
    elif config.comparison_mode == "concat":
        z = concat([f_input, f_ref], axis=0)
    else:
        z = (f_input - f_ref).abs()
    z = z.reshape(1, z.shape[0])
    for i in range(len(config.head_dims)):
        z = _linear(model.params, f"head.{i}", z).relu()
    z = _linear(model.params, "head.out", z)
    return z.reshape(()).sigmoid()


def predict_tensor(input_mesh: ColoredMesh, reference: ColoredMesh, model: TgeParams) -> Tensor:
    """Differentiable fidelity score for a mesh pair (reference frame
    normalization, seeded sampling, shared-weight encoding, comparison)."""
    config = model.config
    _, transform = normalize(reference)
    cloud_in = sample_points(transform.apply_mesh(input_mesh), config.n_points, seed=config.seed)
    cloud_ref = sample_points(transform.apply_mesh(reference), config.n_points, seed=config.seed)
    f_in = encode_cloud(cloud_in, model)
    f_ref = encode_cloud(cloud_ref, model)
    return compare(f_in, f_ref, model)


def predict(input_mesh: ColoredMesh, reference: ColoredMesh, model: TgeParams) -> float:
    return predict_tensor(input_mesh, reference, model).item()


# ---- checkpoints ---------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: TgeParams, path) -> None:
    """JSON header line followed by little-endian float64 buffers in header
    order."""
    names = sorted(model.params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "fingerprint": model.fingerprint,
        "config": asdict(model.config),
        "params": [{"name": n, "shape": list(model.params[n].tensor.shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, default=list).encode() + b"\n")
        for n in names:
            fh.write(model.params[n].tensor.data.astype("<f8").tobytes())


def _config_from_dict(d: dict) -> TgeConfig:
    def tt(x):
        return tuple(tuple(e) if isinstance(e, list) else e for e in x)

    lv = {k: LgsaConfig(**{f: tt(v) if isinstance(v, list) else v for f, v in d[k].items()})
          for k in ("level1", "level2")}
    rest = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items() if k not in ("level1", "level2")}
    return TgeConfig(level1=lv["level1"], level2=lv["level2"], **rest)


def load_checkpoint(path, expected_config: TgeConfig | None = None) -> TgeParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        config = _config_from_dict(header["config"])
        if header["fingerprint"] != config.fingerprint():
            raise FingerprintMismatchError("checkpoint header is internally inconsistent")
        if expected_config is not None and expected_config.fingerprint() != header["fingerprint"]:
            raise FingerprintMismatchError(
                f"checkpoint fingerprint {header['fingerprint']} does not match "
                f"requested architecture {expected_config.fingerprint()}"
            )
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            params[entry["name"]] = Parameter(
                Tensor(buf.copy(), requires_grad=True), entry["name"]
            )
    return TgeParams(params=params, fingerprint=header["fingerprint"], config=config)
