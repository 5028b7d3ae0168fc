"""Hybrid training objective: Smooth L1 + Pearson-correlation loss +
soft-rank Spearman loss.

The rank surrogate is the pairwise-sigmoid soft rank (converges to
average-rank hard ranks as temperature -> 0).  Both predictions and labels
go through the same soft-rank operator so a perfect prediction cancels the
term exactly; only the prediction side carries gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

__all__ = [
    "LossWeights",
    "smooth_l1",
    "plcc_loss",
    "soft_rank",
    "srocc_loss",
    "hybrid_loss",
    "ConstantLabelsError",
]


class ConstantLabelsError(ValueError):
    """Correlation is undefined for a constant label vector."""


@dataclass(frozen=True)
class LossWeights:
    lambda_smooth: float = 1.0
    lambda_plcc: float = 0.2
    lambda_srocc: float = 0.2

    def __post_init__(self):
        if min(self.lambda_smooth, self.lambda_plcc, self.lambda_srocc) < 0:
            raise ValueError("loss weights must be nonnegative")


def _as_label(label) -> np.ndarray:
    if isinstance(label, Tensor):
        return label.data
    return np.asarray(label, dtype=np.float64)


def smooth_l1(pred: Tensor, label) -> Tensor:
    """Mean of 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise."""
    label = _as_label(label)
    if pred.shape != label.shape:
        raise ValueError("pred/label length mismatch")
    d = pred - Tensor(label)
    quadratic = (np.abs(d.data) < 1.0).astype(np.float64)  # branch chosen by value
    return (d * d * 0.5 * quadratic + (d.abs() - 0.5) * (1.0 - quadratic)).mean()


def plcc_loss(pred: Tensor, label, eps: float = 1e-12) -> Tensor:
    """1 - Pearson(pred, label) with batch-wise means.

    The denominator is sqrt(var_p * var_l), which cancels exactly against
    the covariance when pred == label; the epsilon guard only engages when
    the prediction variance collapses below 1e-12.
    """
    label = _as_label(label)
    n = label.size
    if n < 3:
        raise ValueError("correlation needs at least 3 samples")
    if np.var(label) == 0:
        raise ConstantLabelsError("constant labels: Pearson loss undefined")
    lt = Tensor(label)
    pc = pred - pred.mean()
    lc = lt - lt.mean()
    cov = (pc * lc).sum()
    sp = (pc * pc).sum()
    sl = (lc * lc).sum()
    if sp.data < 1e-12:
        sp = sp + eps
    return 1.0 - cov / ((sp * sl) ** 0.5)


def soft_rank(values: Tensor, temperature: float) -> Tensor:
    """Differentiable ranks: rank_i = 1 + sum_{j!=i} sigmoid((v_i - v_j)/T).

    Equal values share rank symmetrically; as T -> 0 this converges to
    average-rank hard ranks.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = values.shape[0]
    if n < 2:
        raise ValueError("need at least 2 values to rank")
    diff = values.reshape(n, 1) - values.reshape(1, n)
    # the j == i self term contributes sigmoid(0) = 0.5; fold it into the +1
    return ((diff * (1.0 / temperature)).sigmoid()).sum(axis=1) + 0.5


def srocc_loss(pred: Tensor, label, temperature: float = 0.1) -> Tensor:
    """6 sum(R(pred) - R(label))^2 / (n (n^2 - 1)), the rank-displacement
    form of 1 - Spearman, with the soft-rank operator applied to both
    vectors at the same temperature (so pred == label gives exactly 0)."""
    label = _as_label(label)
    n = label.size
    if pred.shape != label.shape:
        raise ValueError("pred/label length mismatch")
    if n < 3:
        raise ValueError("correlation needs at least 3 samples")
    label_ranks = soft_rank(Tensor(label), temperature).data
    d = soft_rank(pred, temperature) - Tensor(label_ranks)
    return (d * d).sum() * (6.0 / (n * (n * n - 1.0)))


def hybrid_loss(pred: Tensor, label, weights: LossWeights = LossWeights(),
                temperature: float = 0.1) -> tuple[Tensor, dict]:
    """Weighted sum of the three terms plus a float breakdown.  Constant
    labels make the correlation terms undefined; they are skipped and
    flagged in the breakdown."""
    label = _as_label(label)
    sm = smooth_l1(pred, label)
    terms = {"smooth_l1": sm.item()}
    total = sm * weights.lambda_smooth
    constant = np.var(label) == 0
    terms["labels_constant"] = bool(constant)
    if weights.lambda_plcc > 0 and not constant:
        t = plcc_loss(pred, label)
        terms["plcc"] = t.item()
        total = total + t * weights.lambda_plcc
    if weights.lambda_srocc > 0 and not constant:
        t = srocc_loss(pred, label, temperature)
        terms["srocc"] = t.item()
        total = total + t * weights.lambda_srocc
    terms["total"] = total.item()
    return total, terms
