from dataclasses import replace

import numpy as np
import pytest

import src.estimator as estimator
from src.config import EstimatorSettings, SimConfig
from src.data import Dataset, standardize
from src.dpd_loss import WeightVector, sigma2_floor
from src.errors import DimensionMismatch
from src.estimator import (
    TRACE_COLUMNS, check_convergence, divergence_objective, divergence_sigma2, final_weights, fit_dpd_lasso,
    fit_lasso, initial_fit, leverage_mask, update_sigma2,
)
from src.simulation import CONTOUR_BETA, l2_error, replication_data
from tests.conftest import make_linear


def _resid_data(r):
    r = np.asarray(r, dtype=float)
    return Dataset(np.ones((r.shape[0], 1)), r)


def _dist(fit):
    return float(np.linalg.norm(fit.coef - np.array(CONTOUR_BETA)))


def test_update_sigma2_examples():
    assert update_sigma2(_resid_data([1.0, -1.0]), [0.0]) == pytest.approx(1.0)
    assert update_sigma2(_resid_data([3.0, 4.0]), [0.0]) == pytest.approx(12.5)
    y = np.array([1.0, 2.0, 3.0])
    exact = Dataset(y.reshape(-1, 1), y)
    assert update_sigma2(exact, [1.0]) == sigma2_floor(y)


def test_check_convergence_examples():
    b = np.array([1.0, -2.0, 0.5])
    assert check_convergence(b, b, 2.0, 2.0, 1e-6)
    assert not check_convergence(b, b * (1 + 1e-5), 2.0, 2.0, 1e-6)
    assert not check_convergence(b, b, 2.0, 1.0, 1e-6)
    # norma zero: usa a mudança absoluta
    assert check_convergence(np.zeros(3), np.zeros(3), 1.0, 1.0, 1e-6)
    with pytest.raises(DimensionMismatch):
        check_convergence(b, b[:2], 1.0, 1.0, 1e-6)


def test_initial_fit_ols_on_exact_data_hits_floor():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 3))
    y = 1.0 + X @ np.array([1.0, -2.0, 0.5])
    beta0, s2 = initial_fit(Dataset(X, y), EstimatorSettings(init="ols"))
    np.testing.assert_allclose(beta0, [1.0, -2.0, 0.5], atol=1e-10)
    assert s2 == pytest.approx(sigma2_floor(y), rel=1e-9)


def test_initial_fit_null_model_above_lambda_max(linear_data):
    data, _ = linear_data
    beta0, s2 = initial_fit(data, EstimatorSettings(init="lasso_fixed", lam=1e6))
    assert np.all(beta0 == 0.0)
    yc = data.y - data.y.mean()
    assert s2 == pytest.approx(float(np.mean(yc * yc)))


def test_initial_fit_provided_truth_recovers_noise_variance():
    data, beta = make_linear(n=10_000, p=3, active=3, noise=0.8, seed=11)
    _, s2 = initial_fit(data, EstimatorSettings(init="provided", init_beta=list(beta)))
    assert s2 == pytest.approx(0.64, rel=0.05)


def test_provided_init_requires_beta():
    with pytest.raises(ValueError):
        EstimatorSettings(init="provided")


def test_initial_fit_lasso_cv_runs(linear_data):
    data, _ = linear_data
    beta0, s2 = initial_fit(data, EstimatorSettings(init="lasso_cv", init_folds=4))
    assert beta0.shape == (data.p,)
    assert s2 > 0


@pytest.mark.parametrize("seed", range(20))
def test_alpha_zero_is_plain_lasso(seed):
    r = np.random.default_rng(seed)
    X = 2.0 * r.standard_normal((60, 5))
    y = X @ np.array([1.5, 0.0, -1.0, 0.0, 0.5]) + r.standard_normal(60)
    data = Dataset(X, y)
    fit, trace = fit_dpd_lasso(data, EstimatorSettings(alpha=0.0, lam=0.05))
    ref = fit_lasso(data, 0.05)
    np.testing.assert_allclose(fit.coef, ref.coef, atol=1e-8)
    assert fit.intercept == pytest.approx(ref.intercept, abs=1e-8)
    assert fit.converged and fit.n_iter <= 2
    assert len(trace) == fit.n_iter + 1


def test_tiny_alpha_close_to_zero(linear_data):
    data, _ = linear_data
    a0, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=0.0, lam=0.05))
    a_small, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=1e-8, lam=0.05))
    np.testing.assert_allclose(a_small.coef, a0.coef, atol=1e-4)


def test_clean_data_comparable_to_lasso():
    data, _ = make_linear(n=200, p=5, active=3, noise=0.5, seed=21)
    robust, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=1.0, lam=0.02))
    plain = fit_lasso(data, 0.02)
    rel = np.linalg.norm(robust.coef - plain.coef) / np.linalg.norm(plain.coef)
    assert rel <= 0.10


def test_contour_outliers_pull_least_squares_but_not_dpd(contour_c20):
    data, _ = contour_c20
    ls, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=0.0, lam=1e-4, init="ols"))
    robust, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=1.0, lam=1e-4, init="ols"))
    assert _dist(ls) > 0.5
    assert _dist(robust) < 0.3
    assert robust.converged


def test_outliers_are_down_weighted(contour_c20):
    data, truth = contour_c20
    fit, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=1.0, lam=1e-4, init="ols"))
    w = final_weights(data, fit).w
    bad = np.zeros(data.n, dtype=bool)
    bad[truth.contaminated_idx] = True
    assert w[bad].mean() < 1.0 / (10 * data.n)
    assert w[~bad].mean() > 1.0 / (2 * data.n)


def test_mse_scale_ends_on_residual_variance(contour_c10):
    data, _ = contour_c10
    fit, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=1.0, lam=1e-3, scale="mse"))
    assert fit.sigma2 == pytest.approx(update_sigma2(data, fit.coef, fit.intercept), rel=1e-9)


def test_divergence_sigma2_examples():
    u = WeightVector.uniform(2)
    assert divergence_sigma2(_resid_data([1.0, -1.0]), u, 0.0, 1.0, [0.0]) == pytest.approx(2.0)
    assert divergence_sigma2(_resid_data([3.0, 4.0]), u, 0.0, 0.0, [0.0]) == pytest.approx(12.5)
    # r = (2, 3), λ||β|| = 0.5 => (1 + 1)(6.5 + 0.5)
    assert divergence_sigma2(_resid_data([3.0, 4.0]), u, 0.5, 1.0, [1.0]) == pytest.approx(14.0)
    y = np.array([1.0, 2.0, 3.0])
    exact = Dataset(y.reshape(-1, 1), y)
    assert divergence_sigma2(exact, WeightVector.uniform(3), 0.0, 1.0, [1.0]) == sigma2_floor(y)


def test_divergence_objective_alpha_limit():
    d = _resid_data([1.0, -1.0, 2.0])
    at_zero = divergence_objective(d, [0.0], 0.0, 0.1, 1.5)
    assert at_zero == pytest.approx(2.0 / (2 * 1.5) + 0.5 * np.log(1.5))
    assert divergence_objective(d, [0.0], 1e-8, 0.1, 1.5) == pytest.approx(at_zero, abs=1e-7)
    # penalidade entra dividida por 2σ²
    gap = divergence_objective(d, [1.0], 0.5, 0.3, 1.5) - divergence_objective(d, [1.0], 0.5, 0.0, 1.5)
    assert gap == pytest.approx(0.3 / (2 * 1.5))


def test_sigma2_tracks_noise_variance_on_clean_data():
    data, _ = make_linear(n=5000, p=3, active=3, noise=0.8, seed=13)
    for alpha in (0.5, 1.0, 2.0):
        fit, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=alpha, lam=1e-4))
        assert fit.converged
        assert fit.sigma2 == pytest.approx(0.64, rel=0.1)


def test_leverage_mask_flags_shifted_rows():
    r = np.random.default_rng(5)
    X = r.standard_normal((200, 10))
    bad = r.choice(200, 15, replace=False)
    X[bad, :5] += 20.0 * r.choice((-1.0, 1.0), size=(15, 5))
    keep = leverage_mask(X)
    assert not keep[bad].any()
    assert keep.sum() >= 0.95 * (200 - 15)


def test_screened_init_ignores_bad_leverage_rows():
    data, truth, _ = replication_data(SimConfig(contamination=0.10), 0.10, 0)
    w = estimator._screened_weights(standardize(data)[0]).w
    assert w[truth.contaminated_idx].max() == 0.0
    assert np.count_nonzero(w) >= 0.9 * (data.n - truth.contaminated_idx.size)
    screened, _ = initial_fit(data, EstimatorSettings(init="screened", lam=0.05))
    plain, _ = initial_fit(data, EstimatorSettings(init="lasso_fixed", lam=0.05))
    assert l2_error(screened, truth.beta_true) < l2_error(plain, truth.beta_true)


def test_screened_init_on_clean_data_is_plain_lasso():
    r = np.random.default_rng(8)
    # uniforme em [-1, 1]: nenhum z robusto passa do corte
    X = r.uniform(-1.0, 1.0, (80, 6))
    data = Dataset(X, 1.0 + X @ np.array([2.0, -1.0, 0.5, 0.0, 0.0, 0.0]) + 0.3 * r.standard_normal(80))
    assert leverage_mask(standardize(data)[0].X).all()
    a, _ = initial_fit(data, EstimatorSettings(init="screened", lam=0.05))
    b, _ = initial_fit(data, EstimatorSettings(init="lasso_fixed", lam=0.05))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_exhausted_safeguard_accepts_step_and_never_converges(monkeypatch, linear_data):
    data, _ = linear_data
    real = estimator.solve_weighted_lasso

    def overshoot(*args, **kwargs):
        sol = real(*args, **kwargs)
        return replace(sol, beta=sol.beta + 10.0)

    monkeypatch.setattr(estimator, "solve_weighted_lasso", overshoot)
    s = EstimatorSettings(alpha=1.0, lam=0.01, init="ols", max_iter=3, max_halvings=2)
    fit, trace = fit_dpd_lasso(data, s)
    assert not fit.converged and fit.n_iter == 3
    steps = trace.records[1:]
    assert all(r.safeguards == 2 for r in steps)
    # o passo meio-caminho é aceito, não descartado
    assert all(r.beta_rel_change > 0 for r in steps)
    assert fit.objective == trace.objectives[-1]


@pytest.mark.parametrize("contaminated", [False, True])
def test_objective_never_ends_above_start(contaminated, contour_c10, linear_data):
    data = contour_c10[0] if contaminated else linear_data[0]
    for alpha in (0.5, 1.0, 2.0):
        fit, trace = fit_dpd_lasso(data, EstimatorSettings(alpha=alpha, lam=0.01))
        assert fit.objective <= trace.objectives[0] + 1e-8
        assert fit.objective == trace.objectives[-1]


def test_max_iter_one_does_not_converge(contour_c20):
    data, _ = contour_c20
    fit, trace = fit_dpd_lasso(data, EstimatorSettings(alpha=1.0, lam=1e-4, init="ols", max_iter=1))
    assert not fit.converged
    assert fit.n_iter == 1
    assert len(trace) == 2


def test_fit_is_deterministic(contour_c10):
    data, _ = contour_c10
    s = EstimatorSettings(alpha=1.0, lam=0.01)
    a, ta = fit_dpd_lasso(data, s)
    b, tb = fit_dpd_lasso(data, s)
    assert a == b
    np.testing.assert_array_equal(np.array(ta.to_rows()), np.array(tb.to_rows()))


def test_warm_start_reaches_same_fit(linear_data):
    data, _ = linear_data
    s = EstimatorSettings(alpha=1.0, lam=0.05)
    cold, _ = fit_dpd_lasso(data, s)
    warm, _ = fit_dpd_lasso(data, s, warm_start=cold)
    np.testing.assert_allclose(warm.coef, cold.coef, atol=1e-5)
    assert warm.n_iter <= cold.n_iter


def test_trace_rows_have_trace_columns(linear_data):
    data, _ = linear_data
    fit, trace = fit_dpd_lasso(data, EstimatorSettings(alpha=0.5, lam=0.05))
    rows = trace.to_rows()
    assert len(rows) == fit.n_iter + 1
    assert all(len(r) == len(TRACE_COLUMNS) for r in rows)
    assert [r[0] for r in rows] == list(range(len(rows)))


def test_fit_keeps_names_and_response():
    X = np.random.default_rng(0).standard_normal((20, 2))
    data = Dataset(X, X[:, 0] + 0.1, ("a", "b"), "target")
    fit, _ = fit_dpd_lasso(data, EstimatorSettings(alpha=0.5, lam=0.01))
    assert fit.feature_names == ["a", "b"]
    assert fit.response == "target"


@pytest.mark.slow
@pytest.mark.parametrize("c", [0.0, 0.10])
def test_convergence_suite_on_benchmark_data(c):
    cfg = SimConfig(contamination=c)
    for rep in range(20):
        data, truth, _ = replication_data(cfg, c, rep)
        fit, trace = fit_dpd_lasso(data, EstimatorSettings(alpha=1.0, lam=0.05, tol=1e-6, max_iter=100))
        assert fit.converged, f"rep {rep} não convergiu"
        assert fit.objective <= trace.objectives[0] + 1e-8
        if c > 0:
            w = final_weights(data, fit).w
            assert w[truth.contaminated_idx].mean() < 1.0 / (10 * data.n)
