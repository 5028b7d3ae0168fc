"""End-to-end training loop and the synthetic-dataset generator used for
overfit sanity checks (the human-annotated corpus is not distributed).

Point sampling and grouping depend only on geometry, so each mesh's cloud
and `GroupPlan` are computed once up front and reused every epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, adamw_step, concat
from .losses import LossWeights, hybrid_loss
from .meshio import ColoredMesh, load_mesh, normalize, sample_points, save_mesh
from .model import TgeConfig, TgeParams, build_plan, compare, encode_from_plan, init_params
from .stats import plcc, srocc

__all__ = [
    "TrainConfig",
    "TrainDivergedError",
    "load_manifest",
    "save_manifest",
    "train",
    "make_synthetic_dataset",
    "PairCache",
]


class TrainDivergedError(RuntimeError):
    """Loss became non-finite; carries the offending batch sample ids."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 3
    lr: float = 1e-3
    weight_decay: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    temperature: float = 0.1
    temperature_halflife: int = 100  # anneal x0.5 every this many epochs
    seed: int = 0
    checkpoint_every: int = 0  # 0 = only final
    early_stop_srocc: float | None = None  # stop once train SROCC reaches this
    log_path: str | None = None

    def __post_init__(self):
        if self.batch_size < 3 and (self.weights.lambda_plcc > 0 or self.weights.lambda_srocc > 0):
            raise ValueError("correlation losses need batch_size >= 3")


def load_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    if "objects" not in manifest:
        raise ValueError(f"{path}: not a dataset manifest")
    return manifest


def save_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


# ---- cached forward inputs ----------------------------------------------


class PairCache:
    """Sampled clouds and grouping plans for every (input, reference) pair
    in a manifest, keyed by distorted-mesh path."""

    def __init__(self, manifest: dict, config: TgeConfig, base_dir=None):
        base = Path(base_dir) if base_dir else Path(".")
        self.entries = []  # (pair_id, input_prepared, ref_prepared, label)
        ref_cache = {}
        for obj in sorted(manifest["objects"], key=lambda o: o["id"]):
            ref_path = str((base / obj["reference"]))
            if ref_path not in ref_cache:
                ref_mesh = load_mesh(ref_path)
                _, transform = normalize(ref_mesh)
                ref_cache[ref_path] = (transform, self._prepare(transform.apply_mesh(ref_mesh), config))
            transform, ref_prep = ref_cache[ref_path]
            for item in obj["distorted"]:
                mesh = load_mesh(str(base / item["path"]))
                prep = self._prepare(transform.apply_mesh(mesh), config)
                self.entries.append((item["path"], prep, ref_prep, float(item["score"])))

    @staticmethod
    def _prepare(mesh: ColoredMesh, config: TgeConfig):
        cloud = sample_points(mesh, config.n_points, seed=config.seed)
        points, colors = cloud.points, cloud.colors
        if config.canonical_sort:
            order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
            points, colors = points[order], colors[order]
        return build_plan(points, config), colors

    def __len__(self) -> int:
        return len(self.entries)


def _forward_pair(prep_in, prep_ref, model: TgeParams) -> Tensor:
    f_in = encode_from_plan(prep_in[0], Tensor(prep_in[1]), model)
    f_ref = encode_from_plan(prep_ref[0], Tensor(prep_ref[1]), model)
    return compare(f_in, f_ref, model)


def train(manifest: dict, train_config: TrainConfig, model_config: TgeConfig,
          model: TgeParams | None = None, base_dir=None, log_fn=None) -> tuple[TgeParams, list[dict]]:
    """Seeded mini-batch training with the hybrid loss and AdamW.

    Returns the trained parameters and the per-epoch log (also written as
    JSON-lines when `log_path` is set).
    """
    cache = PairCache(manifest, model_config, base_dir=base_dir)
    if len(cache) < train_config.batch_size:
        raise ValueError(f"need at least {train_config.batch_size} scored pairs, got {len(cache)}")
    if model is None:
        model = init_params(model_config, seed=train_config.seed)
    params = model.parameters()
    rng = np.random.Generator(np.random.PCG64(train_config.seed))
    log: list[dict] = []
    log_file = open(train_config.log_path, "w") if train_config.log_path else None
    step = 0
    try:
        for epoch in range(1, train_config.epochs + 1):
            t0 = time.perf_counter()
            temperature = train_config.temperature * 0.5 ** (
                (epoch - 1) // train_config.temperature_halflife
            )
            order = rng.permutation(len(cache))
            epoch_preds, epoch_labels, epoch_losses = [], [], []
            for lo in range(0, len(order) - train_config.batch_size + 1, train_config.batch_size):
                batch = order[lo : lo + train_config.batch_size]
                preds = [
                    _forward_pair(cache.entries[i][1], cache.entries[i][2], model).reshape(1)
                    for i in batch
                ]
                pred_vec = concat(preds, axis=0)
                labels = np.array([cache.entries[i][3] for i in batch])
                loss, terms = hybrid_loss(pred_vec, labels, train_config.weights, temperature)
                if not np.isfinite(loss.data):
                    ids = [cache.entries[i][0] for i in batch]
                    raise TrainDivergedError(f"non-finite loss at epoch {epoch}, batch {ids}")
                loss.backward()
                step += 1
                adamw_step(params, lr=train_config.lr, wd=train_config.weight_decay, step=step)
                epoch_preds.extend(pred_vec.data.tolist())
                epoch_labels.extend(labels.tolist())
                epoch_losses.append(terms)
            entry = {
                "epoch": epoch,
                "loss": float(np.mean([t["total"] for t in epoch_losses])),
                "smooth_l1": float(np.mean([t["smooth_l1"] for t in epoch_losses])),
                "plcc_loss": float(np.mean([t["plcc"] for t in epoch_losses if "plcc" in t] or [np.nan])),
                "srocc_loss": float(np.mean([t["srocc"] for t in epoch_losses if "srocc" in t] or [np.nan])),
                "temperature": temperature,
                "wall_time_s": time.perf_counter() - t0,
            }
            if len(set(epoch_labels)) >= 3:
                entry["train_plcc"] = plcc(epoch_preds, epoch_labels)
                entry["train_srocc"] = srocc(epoch_preds, epoch_labels)
            log.append(entry)
            if log_file:
                log_file.write(json.dumps(entry, sort_keys=True) + "\n")
                log_file.flush()
            if log_fn:
                log_fn(entry)
            if (
                train_config.early_stop_srocc is not None
                and entry.get("train_srocc", -1.0) >= train_config.early_stop_srocc
            ):
                break
    finally:
        if log_file:
            log_file.close()
    return model, log


# ---- synthetic data ------------------------------------------------------


def _distort(mesh: ColoredMesh, level: float, rng: np.random.Generator) -> ColoredMesh:
    """Graded vertex jitter + color jitter + face decimation."""
    scale = float(np.linalg.norm(mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)))
    verts = mesh.vertices + rng.normal(0.0, 0.06 * level * scale, size=mesh.vertices.shape)
    cols = np.clip(mesh.colors + rng.normal(0.0, 0.5 * level, size=mesh.colors.shape), 0.0, 1.0)
    faces = mesh.faces
    if level > 0 and mesh.n_faces > 4:
        keep = max(4, int(round(mesh.n_faces * (1.0 - 0.4 * level))))
        kept = rng.choice(mesh.n_faces, size=keep, replace=False)
        faces = mesh.faces[np.sort(kept)]
    return ColoredMesh(verts, cols, faces, name=f"{mesh.name}_d")


def make_synthetic_dataset(references, noise_levels, seed: int, out_dir) -> dict:
    """Emit graded distortions of each reference with proxy labels
    1 - level/max(levels), clamped to [0,1], plus the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise_levels = list(noise_levels)
    if not references:
        raise ValueError("need at least one reference mesh")
    max_level = max(max(noise_levels), 1e-12)
    rng = np.random.Generator(np.random.PCG64(seed))
    objects = []
    for oi, ref in enumerate(references):
        if not isinstance(ref, ColoredMesh):
            ref = load_mesh(ref)
        obj_id = ref.name or f"object{oi}"
        ref_name = f"{obj_id}_ref.ply"
        save_mesh(ref, out_dir / ref_name, binary=True)
        distorted = []
        for li, level in enumerate(noise_levels):
            mesh = _distort(ref, level, rng) if level > 0 else ref
            name = f"{obj_id}_n{li}.ply"
            save_mesh(mesh, out_dir / name, binary=True)
            label = float(np.clip(1.0 - level / max_level, 0.0, 1.0))
            # paths are relative to the manifest's directory
            distorted.append({"path": name, "method": f"noise{level}", "score": label})
        objects.append({"id": obj_id, "reference": ref_name, "distorted": distorted})
    manifest = {"objects": objects}
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
