import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from meshfid.autodiff import Tensor
from meshfid.losses import (
    ConstantLabelsError,
    LossWeights,
    hybrid_loss,
    plcc_loss,
    smooth_l1,
    soft_rank,
    srocc_loss,
)

from conftest import max_rel_err, numeric_grad


def grad_of(build, x0, tol=1e-5):
    t = Tensor(x0.copy(), requires_grad=True)
    build(t).backward()
    num = numeric_grad(lambda x: build(Tensor(x)).item(), x0)
    assert max_rel_err(t.grad, num) < tol


def separated_vector(rng, n, gap=0.3):
    """Random vector whose sorted gaps are at least `gap`; soft ranks at small
    temperature only approximate hard ranks away from near-ties."""
    base = np.arange(n) * gap + rng.random(n) * (gap * 0.2)
    return rng.permutation(base)


class TestSmoothL1:
    def test_zero_at_match(self, rng):
        v = rng.random(5)
        assert smooth_l1(Tensor(v), v).item() == 0.0

    def test_quadratic_branch(self):
        # d = 0.5 everywhere -> 0.5 * 0.25
        assert smooth_l1(Tensor(np.full(4, 0.5)), np.zeros(4)).item() == pytest.approx(0.125)

    def test_linear_branch(self):
        # d = 2 -> 2 - 0.5
        assert smooth_l1(Tensor(np.full(3, 2.0)), np.zeros(3)).item() == pytest.approx(1.5)

    def test_mixed_oracle(self, rng):
        p = rng.normal(size=12) * 2
        l = rng.normal(size=12) * 2
        d = np.abs(p - l)
        expect = np.where(d < 1, 0.5 * d * d, d - 0.5).mean()
        assert smooth_l1(Tensor(p), l).item() == pytest.approx(expect, abs=1e-12)

    def test_grad(self, rng):
        l = rng.normal(size=8)
        p0 = l + rng.normal(size=8) * 1.5
        p0 = p0[np.abs(np.abs(p0 - l) - 1.0) > 0.05]  # stay off the branch seam
        grad_of(lambda t: smooth_l1(t, l[: len(p0)]), p0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            smooth_l1(Tensor(np.zeros(3)), np.zeros(4))


class TestPlccLoss:
    def test_exact_zero_at_perfect(self, rng):
        v = rng.random(7)
        assert plcc_loss(Tensor(v), v).item() == 0.0

    def test_anticorrelated_is_two(self):
        v = np.array([1.0, 2.0, 3.0, 4.0])
        assert plcc_loss(Tensor(-v), v).item() == pytest.approx(2.0, abs=1e-12)

    def test_matches_scipy(self, rng):
        p, l = rng.normal(size=20), rng.normal(size=20)
        r, _ = stats.pearsonr(p, l)
        assert plcc_loss(Tensor(p), l).item() == pytest.approx(1.0 - r, abs=1e-10)

    def test_affine_label_invariance(self, rng):
        p, l = rng.normal(size=10), rng.normal(size=10)
        a = plcc_loss(Tensor(p), l).item()
        b = plcc_loss(Tensor(p), 3.0 * l + 7.0).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_constant_labels_rejected(self, rng):
        with pytest.raises(ConstantLabelsError):
            plcc_loss(Tensor(rng.normal(size=5)), np.ones(5))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            plcc_loss(Tensor(np.array([0.0, 1.0])), np.array([0.0, 1.0]))

    def test_constant_pred_guard_no_nan(self, rng):
        out = plcc_loss(Tensor(np.ones(5), requires_grad=True), rng.normal(size=5))
        assert np.isfinite(out.item())
        out.backward()

    def test_grad(self, rng):
        l = rng.normal(size=9)
        grad_of(lambda t: plcc_loss(t, l), rng.normal(size=9), tol=1e-4)


class TestSoftRank:
    def test_converges_to_hard_ranks(self, rng):
        v = separated_vector(rng, 8)
        hard = stats.rankdata(v, method="average")
        soft = soft_rank(Tensor(v), temperature=1e-4).data
        assert np.max(np.abs(soft - hard)) < 1e-9

    def test_ties_share_average_rank(self):
        soft = soft_rank(Tensor(np.array([1.0, 1.0, 5.0])), temperature=1e-4).data
        assert np.allclose(soft, [1.5, 1.5, 3.0], atol=1e-9)

    def test_sum_invariant(self, rng):
        # pairwise sigmoids are antisymmetric, so ranks always sum to n(n+1)/2
        for _ in range(5):
            v = rng.normal(size=6)
            t = float(rng.random() + 0.01)
            assert soft_rank(Tensor(v), t).data.sum() == pytest.approx(21.0, abs=1e-9)

    def test_shift_invariance(self, rng):
        v = rng.normal(size=5)
        a = soft_rank(Tensor(v), 0.1).data
        b = soft_rank(Tensor(v + 100.0), 0.1).data
        assert np.allclose(a, b, atol=1e-9)

    def test_grad(self, rng):
        v = separated_vector(rng, 6)
        w = rng.normal(size=6)
        grad_of(lambda t: (soft_rank(t, 0.5) * w).sum(), v, tol=1e-4)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            soft_rank(Tensor(np.zeros(3)), 0.0)
        with pytest.raises(ValueError):
            soft_rank(Tensor(np.zeros(1)), 0.1)


class TestSroccLoss:
    def test_exact_zero_at_perfect(self, rng):
        v = rng.random(6)
        assert srocc_loss(Tensor(v), v).item() == 0.0

    def test_reversed_order_near_two(self, rng):
        v = separated_vector(rng, 10)
        loss = srocc_loss(Tensor(-v), v, temperature=1e-4).item()
        assert loss == pytest.approx(2.0, abs=1e-6)

    def test_matches_displacement_formula_at_low_temperature(self, rng):
        p = separated_vector(rng, 9)
        l = separated_vector(rng, 9)
        rp = stats.rankdata(p, method="average")
        rl = stats.rankdata(l, method="average")
        expect = 6.0 * ((rp - rl) ** 2).sum() / (9 * (81 - 1))
        assert srocc_loss(Tensor(p), l, temperature=1e-4).item() == pytest.approx(
            expect, abs=1e-6
        )

    def test_grad(self, rng):
        l = rng.normal(size=7)
        grad_of(lambda t: srocc_loss(t, l, temperature=0.3), separated_vector(rng, 7), tol=1e-4)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            srocc_loss(Tensor(np.zeros(2)), np.zeros(2))


class TestHybrid:
    def test_exact_zero_at_perfect_prediction(self, rng):
        v = rng.random(8)
        total, terms = hybrid_loss(Tensor(v), v)
        assert total.item() == 0.0
        assert terms["smooth_l1"] == 0.0 and terms["plcc"] == 0.0 and terms["srocc"] == 0.0

    def test_weighted_sum_of_parts(self, rng):
        p, l = rng.random(6), rng.random(6)
        w = LossWeights(0.5, 2.0, 3.0)
        total, terms = hybrid_loss(Tensor(p), l, weights=w, temperature=0.2)
        expect = (
            0.5 * smooth_l1(Tensor(p), l).item()
            + 2.0 * plcc_loss(Tensor(p), l).item()
            + 3.0 * srocc_loss(Tensor(p), l, 0.2).item()
        )
        assert total.item() == pytest.approx(expect, abs=1e-12)
        assert terms["total"] == total.item()

    def test_constant_labels_degrade_gracefully(self, rng):
        total, terms = hybrid_loss(Tensor(rng.random(5)), np.full(5, 0.5))
        assert terms["labels_constant"] is True
        assert "plcc" not in terms and "srocc" not in terms
        assert total.item() == pytest.approx(terms["smooth_l1"])

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(-1.0, 0.2, 0.2)

    def test_grad_through_total(self, rng):
        l = rng.random(6)
        grad_of(lambda t: hybrid_loss(t, l, temperature=0.3)[0], rng.random(6), tol=1e-4)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_nonnegative_and_bounded_below_by_zero(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        p, l = rng.random(5), rng.random(5)
        if np.var(l) == 0:
            return
        total, _ = hybrid_loss(Tensor(p), l)
        assert total.item() >= 0.0
