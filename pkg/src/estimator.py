import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg, stats

from src.config import EstimatorSettings, SolverSettings
from src.data import Dataset, ModelFit, Standardizer, residuals, standardize
from src.dpd_loss import DpdParams, WeightVector, dpd_objective, dpd_weights, penalized_objective, sigma2_floor
from src.errors import DimensionMismatch
from src.utils import DEBUG, log, rel_change
from src.weighted_lasso import solve_weighted_lasso, weighted_lasso_objective

# aumento tolerado do objetivo antes do safeguard agir
INCREASE_TOL = 1e-8
# corte da triagem de alavanca: quantil do χ²_p
SCREEN_QUANTILE = 0.999
# MAD -> desvio padrão sob normalidade
MAD_SCALE = 1.4826

TRACE_COLUMNS = ["iter", "objective", "sigma2", "beta_rel_change", "sigma2_rel_change", "safeguards"]


@dataclass(frozen=True)
class TraceRecord:
    objective: float
    sigma2: float
    beta_rel_change: float
    sigma2_rel_change: float
    safeguards: int = 0


@dataclass
class IterationTrace:
    records: List[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def safeguard_activations(self) -> int:
        return sum(1 for r in self.records if r.safeguards > 0)

    def to_rows(self) -> List[list]:
        return [
            [i, r.objective, r.sigma2, r.beta_rel_change, r.sigma2_rel_change, r.safeguards]
            for i, r in enumerate(self.records)
        ]


def update_sigma2(data: Dataset, beta: np.ndarray, intercept: float = 0.0, floor: Optional[float] = None) -> float:
    r = residuals(data, beta, intercept)
    floor = sigma2_floor(data.y) if floor is None else floor
    return max(float(np.mean(r * r)), floor)


def divergence_sigma2(
    data: Dataset, weights: WeightVector, lam: float, alpha: float,
    beta: np.ndarray, intercept: float = 0.0, floor: Optional[float] = None,
) -> float:
    """
    σ² que minimiza a majorante do objetivo DPD com os pesos fixos:
        σ² = (1 + α) · (Σ w_i r_i² + λ ||β||_1)
    """
    r = residuals(data, beta, intercept)
    floor = sigma2_floor(data.y) if floor is None else floor
    s = float(weights.w @ (r * r)) + lam * float(np.abs(beta).sum())
    return max((1.0 + alpha) * s, floor)


def divergence_objective(
    data: Dataset, beta: np.ndarray, alpha: float, lam: float, sigma2: float, intercept: float = 0.0
) -> float:
    """
    Objetivo conjunto em (β, σ²):
        Q_α/α + log σ² / (2(1+α)) + λ ||β||_1 / (2σ²)
    Em α = 0 vira média(r²)/(2σ²) + log σ²/2 + λ ||β||_1/(2σ²).
    """
    l1 = float(np.abs(np.asarray(beta, dtype=float)).sum())
    if alpha == 0:
        r = residuals(data, beta, intercept)
        fit_term = float(np.mean(r * r)) / (2.0 * sigma2)
    else:
        fit_term = dpd_objective(data, beta, DpdParams(alpha, sigma2), intercept) / alpha
    return fit_term + math.log(sigma2) / (2.0 * (1.0 + alpha)) + lam * l1 / (2.0 * sigma2)


def check_convergence(
    beta_prev: np.ndarray, beta_curr: np.ndarray, s2_prev: float, s2_curr: float, tol: float
) -> bool:
    beta_prev = np.asarray(beta_prev, dtype=float)
    beta_curr = np.asarray(beta_curr, dtype=float)
    if beta_prev.shape != beta_curr.shape:
        raise DimensionMismatch("iterados de beta com tamanhos diferentes")
    # ||β_t|| = 0 => troca a mudança relativa pela absoluta
    beta_ok = rel_change(beta_curr, beta_prev) <= tol
    s2_ok = abs(1.0 - s2_curr / s2_prev) <= tol
    return bool(beta_ok and s2_ok)


def leverage_mask(X: np.ndarray, quantile: float = SCREEN_QUANTILE) -> np.ndarray:
    """
    True nas linhas sem alavanca extrema: z robusto por coluna (mediana/MAD),
    d_i = Σ_j z_ij² comparado com o quantil do χ²_p.
    """
    X = np.asarray(X, dtype=float)
    med = np.median(X, axis=0)
    mad = MAD_SCALE * np.median(np.abs(X - med), axis=0)
    sd = X.std(axis=0)
    scale = np.where(mad > 0, mad, np.where(sd > 0, sd, 1.0))
    z = (X - med) / scale
    d = np.einsum("ij,ij->i", z, z)
    return d <= stats.chi2.ppf(quantile, X.shape[1])


def _screened_weights(ds: Dataset) -> WeightVector:
    keep = leverage_mask(ds.X)
    m = int(keep.sum())
    if m < max(ds.n / 2.0, 2):
        log("INIT", f"triagem manteria só {m}/{ds.n} linhas; usando todas", DEBUG)
        return WeightVector.uniform(ds.n)
    if m < ds.n:
        log("INIT", f"triagem de alavanca removeu {ds.n - m} linhas do ajuste inicial", DEBUG)
    return WeightVector(keep / float(m))


def _initial_std(ds: Dataset, st: Standardizer, settings: EstimatorSettings) -> np.ndarray:
    """β⁽⁰⁾ na escala padronizada (dados já centrados)."""
    if settings.init == "provided":
        beta = np.asarray(settings.init_beta, dtype=float)
        if beta.shape[0] != ds.p:
            raise DimensionMismatch(f"init_beta tem {beta.shape[0]} entradas, p={ds.p}")
        return st.coef_to_standardized(beta)[0]
    if settings.init == "ols":
        sol, *_ = linalg.lstsq(ds.X, ds.y)
        return np.asarray(sol, dtype=float)
    if settings.init == "screened":
        w = _screened_weights(ds)
        return solve_weighted_lasso(ds, w, settings.lam, settings=settings.solver).beta.copy()
    lam = settings.lam
    if settings.init == "lasso_cv":
        from src.cv_tuner import tune_lasso

        cv = tune_lasso(ds, settings.init_folds, 20, settings.seed, settings.solver)
        lam = cv.best_lambda
        log("INIT", f"lasso_cv escolheu lambda={lam:.6g}", DEBUG)
    return solve_weighted_lasso(ds, WeightVector.uniform(ds.n), lam, settings=settings.solver).beta.copy()


def initial_fit(data: Dataset, settings: EstimatorSettings) -> Tuple[np.ndarray, float]:
    ds, st = standardize(data)
    floor = sigma2_floor(ds.y)
    beta_s = _initial_std(ds, st, settings)
    sigma2 = update_sigma2(ds, beta_s, 0.0, floor)
    return st.coef_to_original(beta_s)[0], sigma2


def _monitored_mse(
    ds: Dataset, beta: np.ndarray, b0: float, alpha: float, lam: float, floor: float
) -> Tuple[float, float]:
    """Objetivo penalizado com σ² = σ̂²(β) e λ convertido p/ a escala da perda DPD."""
    s2 = update_sigma2(ds, beta, b0, floor)
    lam_dpd = alpha * lam / (2.0 * s2)
    return penalized_objective(ds, beta, DpdParams(alpha, s2), lam_dpd, b0), s2


def fit_dpd_lasso(
    data: Dataset, settings: EstimatorSettings, warm_start: Optional[ModelFit] = None
) -> Tuple[ModelFit, IterationTrace]:
    ds, st = standardize(data)
    floor = sigma2_floor(ds.y)
    alpha, lam = settings.alpha, settings.lam
    divergence = settings.scale == "divergence"

    def step(w: WeightVector, beta: np.ndarray, b0: float) -> Tuple[float, float]:
        """(objetivo, σ²) de um candidato β."""
        if divergence:
            s2 = divergence_sigma2(ds, w, lam, alpha, beta, b0, floor)
            return divergence_objective(ds, beta, alpha, lam, s2, b0), s2
        return _monitored_mse(ds, beta, b0, alpha, lam, floor)

    if warm_start is not None:
        beta, b0 = st.coef_to_standardized(warm_start.coef, warm_start.intercept)
        sigma2 = max(float(warm_start.sigma2), floor)
    else:
        beta, b0 = _initial_std(ds, st, settings), 0.0
        sigma2 = update_sigma2(ds, beta, b0, floor)
    beta = np.array(beta, dtype=float)
    if divergence:
        obj = divergence_objective(ds, beta, alpha, lam, sigma2, b0)
    else:
        obj, sigma2 = _monitored_mse(ds, beta, b0, alpha, lam, floor)

    trace = IterationTrace()
    trace.append(TraceRecord(obj, sigma2, float("nan"), float("nan")))

    converged = False
    n_iter = 0
    for n_iter in range(1, settings.max_iter + 1):
        w = dpd_weights(ds, beta, DpdParams(alpha, sigma2), b0)
        sol = solve_weighted_lasso(ds, w, lam, warm_start=beta, settings=settings.solver)
        new_beta, new_b0 = np.array(sol.beta), sol.intercept
        new_obj, new_s2 = step(w, new_beta, new_b0)

        halvings = 0
        while new_obj > obj + INCREASE_TOL and halvings < settings.max_halvings:
            new_beta = 0.5 * (new_beta + beta)
            new_b0 = 0.5 * (new_b0 + b0)
            new_obj, new_s2 = step(w, new_beta, new_b0)
            halvings += 1
        # esgotou os halvings ainda subindo: aceita o passo, mas não declara convergência
        stalled = new_obj > obj + INCREASE_TOL
        if halvings:
            log("FIT", f"iter {n_iter}: safeguard {halvings}x{' (objetivo ainda subiu)' if stalled else ''}", DEBUG)

        trace.append(TraceRecord(
            new_obj, new_s2, rel_change(new_beta, beta), abs(1.0 - new_s2 / sigma2), halvings,
        ))
        done = not stalled and check_convergence(beta, new_beta, sigma2, new_s2, settings.tol)
        beta, b0, sigma2, obj = new_beta, new_b0, new_s2, new_obj
        if done:
            converged = True
            break

    if not converged:
        log("FIT", f"não convergiu em {settings.max_iter} iterações (alpha={alpha}, lambda={lam:.6g})", DEBUG)
    beta_o, intercept_o = st.coef_to_original(beta, b0)
    fit = ModelFit(
        beta=beta_o, intercept=intercept_o, sigma2=sigma2, alpha=alpha, lam=lam,
        n_iter=n_iter, converged=converged, objective=obj,
        feature_names=list(data.feature_names), response=data.response,
    )
    return fit, trace


def final_weights(data: Dataset, fit: ModelFit) -> WeightVector:
    """Pesos w_i no ajuste final (diagnóstico de outliers)."""
    ds, st = standardize(data)
    beta_s, b0_s = st.coef_to_standardized(fit.coef, fit.intercept)
    return dpd_weights(ds, beta_s, DpdParams(fit.alpha, fit.sigma2), b0_s)


def fit_lasso(data: Dataset, lam: float, solver: SolverSettings = SolverSettings()) -> ModelFit:
    """Lasso simples (pesos 1/n), uma única resolução: o baseline não robusto."""
    ds, st = standardize(data)
    w = WeightVector.uniform(ds.n)
    sol = solve_weighted_lasso(ds, w, lam, settings=solver)
    sigma2 = update_sigma2(ds, sol.beta, sol.intercept)
    beta_o, intercept_o = st.coef_to_original(sol.beta, sol.intercept)
    return ModelFit(
        beta=beta_o, intercept=intercept_o, sigma2=sigma2, alpha=0.0, lam=lam,
        n_iter=1, converged=sol.converged,
        objective=weighted_lasso_objective(ds, w, lam, sol.beta, sol.intercept),
        feature_names=list(data.feature_names), response=data.response,
    )
