import numpy as np
import pytest

from src.data import Dataset, ModelFit, predict, residuals, standardize
from src.errors import ConstantColumn, DimensionMismatch, NonFinite


def _fit(beta, intercept=0.0):
    return ModelFit(beta=beta, intercept=intercept, sigma2=1.0, alpha=1.0, lam=0.1,
                    n_iter=3, converged=True, objective=0.0)


def test_dataset_rejects_bad_shapes_and_nan():
    with pytest.raises(DimensionMismatch):
        Dataset(np.ones((3, 2)), np.ones(4))
    with pytest.raises(NonFinite):
        Dataset(np.array([[1.0], [np.nan]]), np.ones(2))
    with pytest.raises(NonFinite):
        Dataset(np.ones((2, 1)), np.array([1.0, np.inf]))


def test_dataset_is_read_only_and_named():
    d = Dataset(np.ones((2, 3)), np.zeros(2))
    assert d.feature_names == ("x1", "x2", "x3")
    with pytest.raises(ValueError):
        d.X[0, 0] = 5.0


def test_standardize_three_point_column():
    ds, st = standardize(Dataset(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 4.0, 6.0])))
    np.testing.assert_allclose(ds.X[:, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(ds.y, [-2.0, 0.0, 2.0])
    np.testing.assert_allclose(st.col_means, [2.0])
    np.testing.assert_allclose(st.col_scales, [1.0])
    assert st.y_mean == 4.0


def test_standardize_already_standard_is_identity():
    col = np.array([-1.0, 0.0, 1.0])
    ds, st = standardize(Dataset(col.reshape(-1, 1), np.zeros(3)))
    np.testing.assert_allclose(ds.X[:, 0], col)
    assert st.col_scales[0] == pytest.approx(1.0)
    assert st.col_means[0] == pytest.approx(0.0)


def test_constant_column_names_index():
    with pytest.raises(ConstantColumn) as e:
        standardize(Dataset(np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]), np.ones(3)))
    assert e.value.j == 1


def test_round_trip_random_datasets(rng):
    for _ in range(100):
        n, p = rng.integers(3, 30), rng.integers(1, 6)
        d = Dataset(rng.normal(5.0, 3.0, (n, p)), rng.normal(-2.0, 4.0, n))
        ds, st = standardize(d)
        back = st.inverse(ds)
        np.testing.assert_allclose(back.X, d.X, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(back.y, d.y, rtol=1e-12, atol=1e-12)


def test_coefficient_mapping_preserves_predictions(rng):
    d = Dataset(rng.normal(3.0, 2.0, (40, 4)), rng.standard_normal(40))
    ds, st = standardize(d)
    beta_s, b0_s = rng.standard_normal(4), 0.3
    beta, b0 = st.coef_to_original(beta_s, b0_s)
    fitted_std = st.y_mean + b0_s + ds.X @ beta_s
    np.testing.assert_allclose(predict(_fit(beta, b0), d.X), fitted_std, atol=1e-10)
    back, b0_back = st.coef_to_standardized(beta, b0)
    np.testing.assert_allclose(back, beta_s, atol=1e-12)
    assert b0_back == pytest.approx(b0_s)


def test_predict_examples():
    assert predict(_fit([5.0, -5.0]), np.array([[1.0, 1.0]]))[0] == 0.0
    assert predict(_fit([0.0, 0.0], 3.5), np.array([[7.0, -2.0]]))[0] == 3.5
    assert predict(_fit([5.0, -5.0]), np.array([1.0, 0.0]))[0] == 5.0
    with pytest.raises(DimensionMismatch):
        predict(_fit([1.0, 2.0]), np.ones((2, 3)))


def test_residuals_examples():
    X = np.array([[0.0], [0.5]])
    d = Dataset(X, np.array([1.0, 2.0]))
    np.testing.assert_allclose(residuals(d, [1.0]), [1.0, 1.5])
    np.testing.assert_allclose(residuals(d, [0.0]), d.y)
    exact = Dataset(X, 2.0 * X[:, 0])
    np.testing.assert_allclose(residuals(exact, [2.0]), 0.0)


def test_model_fit_json_uses_lambda_alias():
    fit = _fit([1.0, 0.0])
    doc = fit.to_json()
    assert '"lambda": 0.1' in doc
    assert '"schema_version": "1.0"' in doc
    assert ModelFit.model_validate_json(doc) == fit


def test_model_fit_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        ModelFit(beta=[0.0], intercept=0.0, sigma2=0.0, alpha=1.0, lam=0.0,
                 n_iter=0, converged=True, objective=0.0)
