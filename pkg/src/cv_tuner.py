"""
Validação cruzada K-fold estratificada pelo l-score e escolha de λ com α fixo.

Para cada λ do grid: ajusta no conjunto todo, calcula l_i = r_i²/σ̂², ordena,
corta em L = ceil(n/K) estratos consecutivos e monta cada fold com um índice
sorteado de cada estrato. O erro de CV é a média dos e_i² fora da amostra.
"""
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.config import EstimatorSettings, SolverSettings
from src.data import Dataset, ModelFit, predict, residuals, standardize
from src.dpd_loss import WeightVector
from src.errors import BadK, DimensionMismatch, InvalidParams, InvalidSigma
from src.estimator import fit_dpd_lasso, fit_lasso
from src.utils import DEBUG, log, parallel_map
from src.weighted_lasso import lambda_max, solve_weighted_lasso

GRID_RATIO = 1e-4
TRIM_FRACTION = 0.10

Selection = Literal["mse", "trimmed"]


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray  # valores em 1..K
    K: int
    strata: Tuple[np.ndarray, ...] = ()

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def sizes(self) -> List[int]:
        return [int(np.sum(self.fold_of == k)) for k in range(1, self.K + 1)]

    def to_rows(self) -> List[list]:
        stratum_of = np.full(self.fold_of.shape[0], -1)
        for s, idx in enumerate(self.strata):
            stratum_of[idx] = s + 1
        return [[i, int(self.fold_of[i]), int(stratum_of[i])] for i in range(self.fold_of.shape[0])]


@dataclass(frozen=True)
class FoldErrors:
    errors: np.ndarray
    n_not_converged: int

    @property
    def mse(self) -> float:
        return float(np.mean(self.errors ** 2))

    @property
    def trimmed_mse(self) -> float:
        # corta só a cauda de cima (onde ficam os outliers)
        return float(np.mean(stats.trim1(self.errors ** 2, TRIM_FRACTION, tail="right")))


@dataclass
class CvResult:
    lambda_grid: np.ndarray
    cv_error: np.ndarray
    best_lambda: float
    best_index: int
    trimmed_cv_error: Optional[np.ndarray] = None
    n_not_converged: Optional[np.ndarray] = None
    best_fit: Optional[ModelFit] = field(default=None, repr=False)
    best_folds: Optional[FoldAssignment] = field(default=None, repr=False)
    select: str = "mse"

    def to_rows(self) -> List[list]:
        rows = []
        for i, (lam, err) in enumerate(zip(self.lambda_grid, self.cv_error)):
            row = [float(lam), float(err)]
            if self.trimmed_cv_error is not None:
                row.append(float(self.trimmed_cv_error[i]))
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        out = {
            "lambda_grid": [float(x) for x in self.lambda_grid],
            "cv_error": [float(x) for x in self.cv_error],
            "best_lambda": float(self.best_lambda),
            "best_index": int(self.best_index),
            "select": self.select,
        }
        if self.trimmed_cv_error is not None:
            out["trimmed_cv_error"] = [float(x) for x in self.trimmed_cv_error]
        if self.n_not_converged is not None:
            out["n_not_converged"] = [int(x) for x in self.n_not_converged]
        return out


def l_scores(data: Dataset, fit: ModelFit) -> np.ndarray:
    if not fit.sigma2 > 0:
        raise InvalidSigma(f"sigma2 precisa ser > 0 (veio {fit.sigma2})")
    r = residuals(data, fit.coef, fit.intercept)
    return (r * r) / fit.sigma2


def _check_k(n: int, K: int) -> None:
    if K < 2 or K > n:
        raise BadK(f"K={K} inválido para n={n} (precisa 2 <= K <= n)")


def stratified_folds(scores: Sequence[float], K: int, rng_seed: int) -> FoldAssignment:
    scores = np.asarray(scores, dtype=float).reshape(-1)
    n = scores.shape[0]
    _check_k(n, K)
    order = np.argsort(scores, kind="stable")
    strata = tuple(order[i:i + K] for i in range(0, n, K))
    rng = np.random.default_rng(rng_seed)
    fold_of = np.zeros(n, dtype=int)
    for stratum in strata:
        # fold k leva o k-ésimo sorteio sem reposição; estrato curto esgota antes
        picks = stratum[rng.permutation(stratum.shape[0])]
        fold_of[picks] = np.arange(1, picks.shape[0] + 1)
    fold_of.flags.writeable = False
    return FoldAssignment(fold_of, K, strata)


def random_folds(n: int, K: int, rng_seed: int) -> FoldAssignment:
    _check_k(n, K)
    rng = np.random.default_rng(rng_seed)
    fold_of = np.zeros(n, dtype=int)
    fold_of[rng.permutation(n)] = np.arange(n) % K + 1
    fold_of.flags.writeable = False
    return FoldAssignment(fold_of, K)


def lambda_grid(lam_max: float, grid_size: int, ratio: float = GRID_RATIO) -> np.ndarray:
    if grid_size < 2:
        raise InvalidParams(f"grid_size precisa ser >= 2 (veio {grid_size})")
    if not lam_max > 0:
        # y constante: qualquer λ dá o modelo nulo
        lam_max = 1.0
    return np.geomspace(lam_max, ratio * lam_max, grid_size)


def _best_index(grid: np.ndarray, errors: np.ndarray) -> int:
    # empate => maior λ (modelo mais esparso)
    ties = np.flatnonzero(errors == np.nanmin(errors))
    return int(ties[np.argmax(grid[ties])])


def cv_error_details(
    data: Dataset, folds: FoldAssignment, alpha: float, lam: float,
    settings: EstimatorSettings, n_jobs: int = 1, warm_start: Optional[ModelFit] = None,
) -> FoldErrors:
    """Erros fora da amostra; `warm_start` (ex.: o ajuste no conjunto todo) inicia cada fold."""
    if folds.fold_of.shape[0] != data.n:
        raise DimensionMismatch(f"folds para n={folds.fold_of.shape[0]}, dados com n={data.n}")
    fold_settings = settings.model_copy(update={"alpha": alpha, "lam": lam})

    def run(k: int):
        test = folds.fold_of == k
        fit, _ = fit_dpd_lasso(data.subset(~test), fold_settings, warm_start=warm_start)
        return test, data.y[test] - predict(fit, data.X[test]), fit.converged

    errors = np.zeros(data.n)
    bad = 0
    for test, e, ok in parallel_map(run, range(1, folds.K + 1), n_jobs):
        errors[test] = e
        bad += 0 if ok else 1
    return FoldErrors(errors, bad)


def cv_error(
    data: Dataset, folds: FoldAssignment, alpha: float, lam: float,
    settings: EstimatorSettings, n_jobs: int = 1,
) -> float:
    return cv_error_details(data, folds, alpha, lam, settings, n_jobs).mse


def tune_lambda(
    data: Dataset, alpha: float, K: int, grid_size: int, rng_seed: int,
    settings: EstimatorSettings, lambdas: Optional[Sequence[float]] = None, n_jobs: int = 1,
    select: Selection = "mse",
) -> CvResult:
    """
    select="mse": menor erro de CV; select="trimmed": menor média aparada
    (resíduos contaminados fora da amostra não puxam a escolha p/ λ grande).
    """
    _check_k(data.n, K)
    if select not in ("mse", "trimmed"):
        raise InvalidParams(f"critério de seleção desconhecido: {select}")
    if lambdas is None:
        ds, _ = standardize(data)
        grid = lambda_grid(lambda_max(ds, WeightVector.uniform(ds.n)), grid_size)
    else:
        grid = np.asarray(lambdas, dtype=float)
    errs = np.zeros(grid.shape[0])
    trimmed = np.zeros(grid.shape[0])
    not_conv = np.zeros(grid.shape[0], dtype=int)
    done: dict = {}
    for i, lam in enumerate(grid):
        key = float(lam)
        if key not in done:
            # ajuste completo parte do init configurado; os folds partem dele
            fit, _ = fit_dpd_lasso(data, settings.model_copy(update={"alpha": alpha, "lam": key}))
            folds = stratified_folds(l_scores(data, fit), K, rng_seed)
            details = cv_error_details(data, folds, alpha, key, settings, n_jobs, warm_start=fit)
            done[key] = (details, fit, folds)
            log("CV", f"alpha={alpha} lambda={key:.6g} cv={details.mse:.6g} aparado={details.trimmed_mse:.6g}", DEBUG)
        details = done[key][0]
        errs[i], trimmed[i], not_conv[i] = details.mse, details.trimmed_mse, details.n_not_converged
    best = _best_index(grid, trimmed if select == "trimmed" else errs)
    _, best_fit, best_folds = done[float(grid[best])]
    return CvResult(grid, errs, float(grid[best]), best, trimmed, not_conv, best_fit, best_folds, select)


def tune_lasso(
    data: Dataset, K: int, grid_size: int, rng_seed: int,
    solver: SolverSettings = SolverSettings(), n_jobs: int = 1,
) -> CvResult:
    """Lasso baseline: K-fold aleatório comum sobre um caminho com warm start."""
    ds, _ = standardize(data)
    grid = lambda_grid(lambda_max(ds, WeightVector.uniform(ds.n)), grid_size)
    folds = random_folds(data.n, K, rng_seed)

    def run(k: int):
        test = folds.fold_of == k
        train_s, st = standardize(data.subset(~test))
        w = WeightVector.uniform(train_s.n)
        beta = None
        preds = np.zeros((grid.shape[0], int(test.sum())))
        for i, lam in enumerate(grid):
            sol = solve_weighted_lasso(train_s, w, float(lam), warm_start=beta, settings=solver)
            beta = sol.beta
            b, b0 = st.coef_to_original(sol.beta, sol.intercept)
            preds[i] = b0 + data.X[test] @ b
        return test, preds

    sq = np.zeros((grid.shape[0], data.n))
    for test, preds in parallel_map(run, range(1, K + 1), n_jobs):
        sq[:, test] = (data.y[test] - preds) ** 2
    errs = sq.mean(axis=1)
    best = _best_index(grid, errs)
    fit = fit_lasso(data, float(grid[best]), solver)
    return CvResult(grid, errs, float(grid[best]), best, best_fit=fit, best_folds=folds)
