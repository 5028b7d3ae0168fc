"""Exact PLCC / SROCC / KROCC, the object-level cross-validation harness,
report assembly, and the analytic FLOP estimator.

SROCC here is rank-then-Pearson (exact under ties); the differentiable
training surrogate in losses.py intentionally uses the 6*sum(d^2) form.
KROCC is tau-b.  Lower-better baselines are negated before correlation so
all reported numbers share the higher-better sense.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kendalltau, rankdata

__all__ = [
    "plcc",
    "srocc",
    "krocc",
    "FoldResult",
    "EvalReport",
    "cross_validate",
    "estimate_flops",
]


def _check_pair(x, y, min_n: int = 3):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D vectors")
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} samples, got {x.size}")
    return x, y


def plcc(x, y) -> float:
    """Definitional Pearson r."""
    x, y = _check_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0 or sy == 0:
        raise ValueError("zero variance input")
    return float((xc * yc).sum() / (sx * sy))


def srocc(x, y) -> float:
    """Pearson correlation of average ranks (ties get the mean rank)."""
    x, y = _check_pair(x, y)
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise ValueError("all-tied vector")
    return plcc(rx, ry)


def krocc(x, y) -> float:
    """Kendall tau-b (tie-corrected)."""
    x, y = _check_pair(x, y)
    tau = kendalltau(x, y).statistic
    if np.isnan(tau):
        raise ValueError("tau-b undefined: all ties in one vector")
    return float(tau)


@dataclass(frozen=True)
class FoldResult:
    held_out_object: str
    plcc: float
    srocc: float
    krocc: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "object": self.held_out_object,
            "plcc": self.plcc,
            "srocc": self.srocc,
            "krocc": self.krocc,
            "n": self.n_samples,
        }


@dataclass(frozen=True)
class EvalReport:
    metric: str
    folds: tuple
    skipped: tuple = field(default_factory=tuple)

    def aggregate(self) -> dict:
        out = {"mean": {}, "std": {}}
        for key in ("plcc", "srocc", "krocc"):
            vals = np.array([getattr(f, key) for f in self.folds])
            out["mean"][key] = float(vals.mean())
            out["std"][key] = float(vals.std(ddof=0))
        return out

    def to_dict(self) -> dict:
        agg = self.aggregate()
        return {
            "metric": self.metric,
            "folds": [f.to_dict() for f in self.folds],
            "mean": agg["mean"],
            "std": agg["std"],
            "skipped": list(self.skipped),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["metric", "object", "plcc", "srocc", "krocc", "n"])
        for f in self.folds:
            w.writerow([self.metric, f.held_out_object, f.plcc, f.srocc, f.krocc, f.n_samples])
        agg = self.aggregate()
        w.writerow([self.metric, "mean", agg["mean"]["plcc"], agg["mean"]["srocc"], agg["mean"]["krocc"], ""])
        w.writerow([self.metric, "std", agg["std"]["plcc"], agg["std"]["srocc"], agg["std"]["krocc"], ""])
        return buf.getvalue()


def cross_validate(manifest: dict, scorer, metric_name: str, train_fn=None) -> EvalReport:
    """Leave-one-object-out harness.

    `manifest` follows the dataset schema: {"objects": [{"id", "reference",
    "distorted": [{"path", "method", "score"}]}]}.  `scorer` maps
    (input_path, reference_path) -> predicted score, already oriented
    higher-better.  When `train_fn` is given it is called per fold with the
    training-object list and must return a fold-specific scorer.
    """
    objects = sorted(manifest["objects"], key=lambda o: o["id"])
    if len(objects) < 2:
        raise ValueError("need at least 2 objects for cross-validation")
    folds, skipped = [], []
    for held in objects:
        if len(held["distorted"]) < 3:
            skipped.append(held["id"])
            continue
        fold_scorer = scorer
        if train_fn is not None:
            fold_scorer = train_fn([o for o in objects if o["id"] != held["id"]])
        preds, labels = [], []
        for item in held["distorted"]:
            preds.append(fold_scorer(item["path"], held["reference"]))
            labels.append(item["score"])
        folds.append(
            FoldResult(
                held_out_object=held["id"],
                plcc=plcc(preds, labels),
                srocc=srocc(preds, labels),
                krocc=krocc(preds, labels),
                n_samples=len(preds),
            )
        )
    return EvalReport(metric=metric_name, folds=tuple(folds), skipped=tuple(skipped))


# ---- FLOP accounting -----------------------------------------------------


def _linear_flops(n: int, c_in: int, c_out: int) -> float:
    return 2.0 * n * c_in * c_out


def _mlp_flops(n: int, c_in: int, dims) -> float:
    total, c = 0.0, c_in
    for d in dims:
        total += _linear_flops(n, c, d)
        c = d
    return total


def _attention_flops(m: int, d_model: int, d_emb: int) -> float:
    # qkv + output projections, logits, and the weighted sum
    proj = 3 * _linear_flops(m, d_model, d_emb) + _linear_flops(m, d_emb, d_emb)
    scores = 2.0 * m * m * d_emb * 2
    return proj + scores


def _ffn_flops(m: int, d_emb: int) -> float:
    return _linear_flops(m, d_emb, 4 * d_emb) + _linear_flops(m, 4 * d_emb, d_emb)


def estimate_flops(config, n_points: int | None = None) -> float:
    """Analytic multiply-add count (doubled to FLOPs) for one mesh-pair
    prediction with the given model config.  Returns GFLOPs.

    Centroid counts are architecture constants.  Each input point passes
    through the shared per-point MLP once per grouping scale, so those
    terms scale linearly with `n_points` while the attention blocks (over a
    fixed number of centroids) stay constant.
    """
    n = n_points if n_points is not None else config.n_points
    encoder = 0.0
    d_in = 3
    level_input = n
    for level in (config.level1, config.level2):
        m = level.centroids
        d_out_level = 0
        for radius, k, gdims, ldims, d_out in zip(
            level.radii, level.max_samples, level.geom_mlp_dims, level.latent_mlp_dims, level.out_dims
        ):
            encoder += _mlp_flops(level_input, 3, gdims)  # geometry PointNet
            encoder += _mlp_flops(level_input, d_in, ldims)  # latent PointNet
            d_g, d_l = gdims[-1], ldims[-1]
            d_emb = level.d_emb
            encoder += _linear_flops(m, d_g, d_emb) + _linear_flops(m, d_l, d_emb)
            encoder += 2 * _attention_flops(m, d_emb, d_emb)  # two self-attention streams
            encoder += _attention_flops(m, d_emb, d_emb)  # cross-attention
            encoder += _ffn_flops(m, d_emb)
            encoder += _linear_flops(m, 2 * d_emb, d_out)  # fusion MLP after concat with g'
            d_out_level += d_out
        d_in = d_out_level
        level_input = m  # downstream levels consume the fixed centroid set
    # final set-abstraction over all remaining centroids
    encoder += _mlp_flops(config.level2.centroids, d_in + 3, config.final_mlp_dims)
    head_in = {"concat_diff": 3, "concat": 2, "diff": 1}[config.comparison_mode] * config.final_dim
    head = _mlp_flops(1, head_in, list(config.head_dims) + [1])
    # siamese: the encoder runs once per mesh, the head once per pair
    return (2.0 * encoder + head) / 1e9
