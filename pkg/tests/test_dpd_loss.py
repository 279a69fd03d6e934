import math

import numpy as np
import pytest

from src.data import Dataset
from src.dpd_loss import (
    DpdParams, WeightVector, dpd_objective, dpd_weights, h_scores, penalized_objective, sigma2_floor,
    weights_from_h,
)
from src.errors import InvalidParams, InvalidSigma


def _resid_data(r):
    """Dados com β = 0: resíduo = y."""
    r = np.asarray(r, dtype=float)
    return Dataset(np.ones((r.shape[0], 1)), r)


def test_params_validation():
    with pytest.raises(InvalidParams):
        DpdParams(-0.1, 1.0)
    with pytest.raises(InvalidSigma):
        DpdParams(1.0, 0.0)
    with pytest.raises(InvalidSigma):
        DpdParams(1.0, float("nan"))


def test_weight_vector_must_sum_to_one():
    with pytest.raises(InvalidParams):
        WeightVector([0.5, 0.6])
    with pytest.raises(InvalidParams):
        WeightVector([1.5, -0.5])
    np.testing.assert_allclose(WeightVector.uniform(4).w, 0.25)


def test_h_scores_examples():
    p = DpdParams(1.0, 1.0)
    np.testing.assert_allclose(h_scores(_resid_data([0.0]), [0.0], p), [0.0])
    np.testing.assert_allclose(h_scores(_resid_data([2.0]), [0.0], DpdParams(1.0, 4.0)), [-0.5])
    np.testing.assert_allclose(h_scores(_resid_data([1.0, 2.0]), [0.0], p), [-0.5, -2.0])


def test_objective_examples():
    s2 = 0.7
    assert dpd_objective(_resid_data([0.0, 0.0, 0.0]), [0.0], DpdParams(2.0, s2)) == 0.0
    assert dpd_objective(_resid_data([3.0, -9.0]), [0.0], DpdParams(0.0, s2)) == 0.0
    r, a = 1.3, 0.5
    assert dpd_objective(_resid_data([r]), [0.0], DpdParams(a, s2)) == pytest.approx(a * r * r / (2 * s2))
    q = dpd_objective(_resid_data([0.0, math.sqrt(2 * s2)]), [0.0], DpdParams(1.0, s2))
    assert q == pytest.approx(0.37989, abs=1e-5)


def test_alpha_one_is_l2e_form(rng):
    r = rng.standard_normal(30)
    q = dpd_objective(_resid_data(r), [0.0], DpdParams(1.0, 0.8))
    assert q == pytest.approx(-math.log(np.mean(np.exp(-r * r / 1.6))), rel=1e-12)


def test_penalized_objective_examples():
    d = Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, -2.0]))
    p = DpdParams(1.0, 1.0)
    assert penalized_objective(d, [1.0, -2.0], p, 0.5) == pytest.approx(1.5)
    assert penalized_objective(d, [0.0, 0.0], p, 3.0) == pytest.approx(dpd_objective(d, [0.0, 0.0], p))
    assert penalized_objective(d, [0.3, 0.1], p, 0.0) == pytest.approx(dpd_objective(d, [0.3, 0.1], p))
    with pytest.raises(InvalidParams):
        penalized_objective(d, [0.0, 0.0], p, -1.0)


def test_weights_examples():
    s2 = 2.0
    w = dpd_weights(_resid_data([0.0, math.sqrt(2 * s2)]), [0.0], DpdParams(1.0, s2)).w
    np.testing.assert_allclose(w, [0.73106, 0.26894], atol=1e-5)
    w0 = dpd_weights(_resid_data([0.0, 50.0, -3.0]), [0.0], DpdParams(0.0, s2)).w
    np.testing.assert_allclose(w0, 1.0 / 3)
    w_eq = dpd_weights(_resid_data([2.0, -2.0, 2.0, -2.0]), [0.0], DpdParams(1.5, s2)).w
    np.testing.assert_allclose(w_eq, 0.25)


def test_weights_shift_invariant(rng):
    h = -rng.exponential(2.0, 25)
    w = weights_from_h(h, 0.7).w
    np.testing.assert_allclose(weights_from_h(h + 123.4, 0.7).w, w, atol=1e-14)


def test_weights_monotone_in_abs_residual(rng):
    r = rng.standard_normal(40)
    w = dpd_weights(_resid_data(r), [0.0], DpdParams(1.0, 1.0)).w
    order = np.argsort(np.abs(r))
    assert np.all(np.diff(w[order]) < 0)


def test_weights_stable_for_huge_exponents():
    r = np.array([0.0, 1e3, -1.4e3, 5.0])
    w = dpd_weights(_resid_data(r), [0.0], DpdParams(1.0, 0.5)).w
    assert np.all(np.isfinite(w))
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_sigma2_floor_scales_with_response():
    y = np.array([0.0, 2.0, 4.0])
    assert sigma2_floor(y) == pytest.approx(1e-12 * np.var(y))
    assert sigma2_floor(np.zeros(3)) > 0
