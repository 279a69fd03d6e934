"""
Experimentos: estudo de contorno 2-D (n=100, β=(5,-5)) e o benchmark
contaminado em alta dimensão (desenho AR(1), β esparso, SNR calibrado,
pontos de alavanca ruins + outliers verticais).
"""
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from src.config import EstimatorSettings, SimConfig
from src.cv_tuner import tune_lambda, tune_lasso
from src.data import Dataset, ModelFit, predict
from src.dpd_loss import SIGMA2_FLOOR_FACTOR
from src.errors import (
    BadCounts, BadFraction, BadGrid, BadRho, DegenerateSignal, DimensionMismatch, DpdLassoError, InvalidParams,
)
from src.utils import DEBUG, INFO, derive_seed, log, parallel_map, quantiles

CONTOUR_N = 100
CONTOUR_BETA = (5.0, -5.0)
CONTOUR_RHO = 0.5
CONTOUR_NOISE_FRACTION = 0.05

SIM_COLUMNS = [
    "rep", "contamination", "method", "rmspe", "l2_error", "gamma", "fp", "fn",
    "runtime_ms", "converged", "lambda", "error",
]
SUMMARY_COLUMNS = ["contamination", "method", "metric", "median", "q1", "q3", "iqr", "n_ok"]
SUMMARY_METRICS = ("rmspe", "l2_error", "gamma", "runtime_ms")


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise BadGrid(f"intervalo inválido [{self.lo}, {self.hi}]")
        if self.steps < 2:
            raise BadGrid(f"grid precisa de >= 2 pontos por eixo (veio {self.steps})")

    @classmethod
    def from_string(cls, text: str) -> "GridSpec":
        parts = text.split(":")
        if len(parts) != 3:
            raise BadGrid(f"grid '{text}' fora do formato min:max:steps")
        try:
            return cls(float(parts[0]), float(parts[1]), int(parts[2]))
        except ValueError:
            raise BadGrid(f"grid '{text}' fora do formato min:max:steps")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.steps - 1)

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class GroundTruth:
    beta_true: np.ndarray
    active_set: np.ndarray
    sigma_eps2: float = float("nan")
    contaminated_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    intercept_true: float = 0.0
    # ε_i verdadeiros; o sinal deles decide o lado do outlier vertical
    noise: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LossSurface:
    alpha: float
    b1: np.ndarray
    b2: np.ndarray
    values: np.ndarray  # values[i, j] = perda em (b1[i], b2[j])

    @property
    def argmin(self) -> Tuple[float, float]:
        i, j = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return float(self.b1[i]), float(self.b2[j])

    @property
    def min_value(self) -> float:
        return float(np.min(self.values))

    def distance_to(self, point: Sequence[float]) -> float:
        return float(np.hypot(*(np.asarray(self.argmin) - np.asarray(point, dtype=float))))

    def to_rows(self) -> List[list]:
        return [
            [float(b1), float(b2), float(self.values[i, j])]
            for i, b1 in enumerate(self.b1)
            for j, b2 in enumerate(self.b2)
        ]


@dataclass(frozen=True)
class SimRecord:
    rep: int
    contamination: float
    method: str
    rmspe: float = float("nan")
    l2_error: float = float("nan")
    gamma: int = -1
    fp: int = -1
    fn: int = -1
    runtime_ms: float = float("nan")
    converged: bool = False
    lam: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def to_row(self) -> list:
        return [
            self.rep, self.contamination, self.method, self.rmspe, self.l2_error, self.gamma,
            self.fp, self.fn, self.runtime_ms, int(self.converged), self.lam, self.error,
        ]


# ================= Geradores =================

def generate_ar1_design(n: int, p: int, rho: float, rng_seed: int) -> np.ndarray:
    if not abs(rho) < 1:
        raise BadRho(f"|rho| precisa ser < 1 (veio {rho})")
    rng = np.random.default_rng(rng_seed)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    innov = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + innov * Z[:, j]
    return X


def generate_truth(p: int, p_active: int, coef_low: float, coef_high: float, rng_seed: int) -> GroundTruth:
    if p < 1 or not 0 <= p_active <= p:
        raise BadCounts(f"p_active={p_active} inválido para p={p}")
    rng = np.random.default_rng(rng_seed)
    active = np.sort(rng.choice(p, size=p_active, replace=False))
    beta = np.zeros(p)
    beta[active] = rng.uniform(coef_low, coef_high, size=p_active)
    return GroundTruth(beta_true=beta, active_set=active)


def calibrate_noise(mu: np.ndarray, snr: float) -> float:
    if not snr > 0:
        raise InvalidParams(f"snr precisa ser > 0 (veio {snr})")
    mu = np.asarray(mu, dtype=float)
    v = float(np.var(mu, ddof=1)) if mu.size > 1 else 0.0
    if not v > 0:
        raise DegenerateSignal("var(x'β) = 0; não dá p/ calibrar o SNR")
    return v / snr


def _n_contaminated(c: float, n: int) -> int:
    return int(math.floor(c * n + 1e-9))


def contaminate(
    data: Dataset, truth: GroundTruth, c: float, shift: float, rng_seed: int
) -> Tuple[Dataset, np.ndarray]:
    if not 0 <= c < 0.5:
        raise BadFraction(f"fração de contaminação {c} fora de [0, 0.5)")
    m = _n_contaminated(c, data.n)
    if m == 0:
        return data, np.zeros(0, dtype=int)
    if truth.noise is None or len(truth.noise) != data.n:
        raise InvalidParams("contaminate precisa dos ruídos verdadeiros (truth.noise)")
    rng = np.random.default_rng(rng_seed)
    idx = np.sort(rng.choice(data.n, size=m, replace=False))
    X = np.array(data.X)
    y = np.array(data.y)
    for i in idx:
        mask = rng.random(data.p) < 0.5
        while not mask.any():
            mask = rng.random(data.p) < 0.5
        signs = rng.choice((-1.0, 1.0), size=data.p)
        X[i, mask] += shift * signs[mask]
        s = 1.0 if truth.noise[i] >= 0 else -1.0
        y[i] -= s * shift
    return Dataset(X, y, data.feature_names, data.response), idx


def contour_scenario(c: float, rng_seed: int) -> Tuple[Dataset, GroundTruth]:
    if not 0 <= c < 0.5:
        raise BadFraction(f"fração de contaminação {c} fora de [0, 0.5)")
    beta = np.array(CONTOUR_BETA)
    X = generate_ar1_design(CONTOUR_N, 2, CONTOUR_RHO, derive_seed(rng_seed, 1))
    mu = X @ beta
    sigma2 = CONTOUR_NOISE_FRACTION ** 2 * float(np.var(mu, ddof=1))
    rng = np.random.default_rng(derive_seed(rng_seed, 2))
    eps = rng.normal(0.0, math.sqrt(sigma2), CONTOUR_N)
    y = mu + eps

    m = _n_contaminated(c, CONTOUR_N)
    idx = np.sort(rng.choice(CONTOUR_N, size=m, replace=False)) if m else np.zeros(0, dtype=int)
    X[idx, 0] = rng.uniform(-0.1, 0.1, m)
    X[idx, 1] = rng.uniform(1.0, 2.0, m)
    y[idx] = -3.0 * X[idx, 0] + 3.0 * X[idx, 1]
    truth = GroundTruth(
        beta_true=beta, active_set=np.array([0, 1]), sigma_eps2=sigma2,
        contaminated_idx=idx, intercept_true=0.0, noise=eps,
    )
    return Dataset(X, y), truth


# ================= Superfície de perda =================

def loss_surface(
    data: Dataset, alpha: float, grid: Union[GridSpec, Tuple[GridSpec, GridSpec]]
) -> LossSurface:
    """
    α = 0: perda de mínimos quadrados (média de r²).
    α > 0: Q_α com σ² = variância amostral dos resíduos em cada ponto.
    Sem intercepto, como no estudo de contorno.
    """
    if data.p != 2:
        raise BadGrid(f"superfície só para p = 2 (veio p={data.p})")
    if alpha < 0:
        raise InvalidParams(f"alpha precisa ser >= 0 (veio {alpha})")
    g1, g2 = grid if isinstance(grid, tuple) else (grid, grid)
    b1, b2 = g1.values(), g2.values()
    x1, x2, y = data.X[:, 0], data.X[:, 1], data.y
    floor = max(SIGMA2_FLOOR_FACTOR * float(np.var(y)), np.finfo(float).tiny)
    out = np.empty((b1.shape[0], b2.shape[0]))
    base = y[None, :] - b2[:, None] * x2[None, :]
    for i, v1 in enumerate(b1):
        R = base - v1 * x1[None, :]
        if alpha == 0:
            out[i] = np.mean(R * R, axis=1)
            continue
        s2 = np.maximum(np.var(R, axis=1, ddof=1), floor)
        ah = -alpha * (R * R) / (2.0 * s2[:, None])
        out[i] = -(logsumexp(ah, axis=1) - math.log(data.n))
    return LossSurface(alpha, b1, b2, out)


# ================= Métricas =================

def rmspe(y_test: np.ndarray, y_pred: np.ndarray) -> float:
    y_test = np.asarray(y_test, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_test.shape != y_pred.shape or y_test.size == 0:
        raise DimensionMismatch("y_test e y_pred precisam ter o mesmo tamanho (> 0)")
    return float(np.sqrt(np.mean((y_test - y_pred) ** 2)))


def l2_error(beta_hat: np.ndarray, beta_true: np.ndarray) -> float:
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_hat.shape != beta_true.shape:
        raise DimensionMismatch("beta_hat e beta_true com tamanhos diferentes")
    return float(np.linalg.norm(beta_hat - beta_true))


def selection_error(beta_hat: np.ndarray, active_set: Sequence[int]) -> Tuple[int, int, int]:
    selected = np.asarray(beta_hat) != 0
    active = np.zeros(selected.shape[0], dtype=bool)
    active[np.asarray(active_set, dtype=int)] = True
    fp = int(np.sum(selected & ~active))
    fn = int(np.sum(~selected & active))
    return fp, fn, fp + fn


# ================= Replicações =================

def parse_method(spec: str) -> Tuple[str, float]:
    name, _, arg = spec.partition(":")
    if name == "lasso":
        return "lasso", 0.0
    if name == "dpd_lasso":
        return f"dpd_lasso:{float(arg or '1'):g}", float(arg or "1")
    raise InvalidParams(f"método desconhecido: {spec}")


def _fit_method(method: str, alpha: float, data: Dataset, config: SimConfig, seed: int) -> ModelFit:
    if method == "lasso":
        return tune_lasso(data, config.lasso_folds, config.grid_size, seed).best_fit
    settings = EstimatorSettings(alpha=alpha, tol=config.tol, max_iter=config.max_iter, seed=seed)
    # treino contaminado: escolhe λ pela média aparada do erro de CV
    return tune_lambda(data, alpha, config.dpd_folds, config.grid_size, seed, settings, select="trimmed").best_fit


def replication_data(config: SimConfig, c: float, rep: int) -> Tuple[Dataset, GroundTruth, Dataset]:
    """(treino contaminado, verdade, teste limpo) da replicação `rep`."""
    seed = derive_seed(config.rng_seed, rep)
    truth = generate_truth(config.p, config.p_active, config.coef_low, config.coef_high, derive_seed(seed, 1))
    X = generate_ar1_design(config.n, config.p, config.rho, derive_seed(seed, 2))
    signal = X @ truth.beta_true
    sigma2 = calibrate_noise(signal, config.snr)
    eps = np.random.default_rng(derive_seed(seed, 3)).normal(0.0, math.sqrt(sigma2), config.n)
    y = config.intercept_true + signal + eps
    truth = replace(truth, sigma_eps2=sigma2, intercept_true=config.intercept_true, noise=eps)
    train, idx = contaminate(Dataset(X, y), truth, c, config.shift_magnitude, derive_seed(seed, 4))
    truth = replace(truth, contaminated_idx=idx)

    X_test = generate_ar1_design(config.n_test, config.p, config.rho, derive_seed(seed, 5))
    noise_test = np.random.default_rng(derive_seed(seed, 6)).normal(0.0, math.sqrt(sigma2), config.n_test)
    test = Dataset(X_test, config.intercept_true + X_test @ truth.beta_true + noise_test)
    return train, truth, test


def _one_replication(config: SimConfig, c: float, rep: int, methods: List[Tuple[str, float]]) -> List[SimRecord]:
    try:
        train, truth, test = replication_data(config, c, rep)
    except DpdLassoError as e:
        log("SIM", f"rep {rep}: falha gerando dados: {e}")
        return [SimRecord(rep, c, m, error=str(e)) for m, _ in methods]
    seed = derive_seed(config.rng_seed, rep, 7)
    out = []
    for method, alpha in methods:
        t0 = time.perf_counter()
        try:
            fit = _fit_method(method.split(":")[0], alpha, train, config, seed)
        except (DpdLassoError, ArithmeticError, np.linalg.LinAlgError) as e:
            log("SIM", f"rep {rep} {method}: falhou: {e}")
            out.append(SimRecord(rep, c, method, error=str(e) or type(e).__name__))
            continue
        runtime = (time.perf_counter() - t0) * 1000.0
        fp, fn, gamma = selection_error(fit.coef, truth.active_set)
        out.append(SimRecord(
            rep, c, method,
            rmspe=rmspe(test.y, predict(fit, test.X)),
            l2_error=l2_error(fit.coef, truth.beta_true),
            gamma=gamma, fp=fp, fn=fn, runtime_ms=runtime,
            converged=fit.converged, lam=fit.lam,
        ))
    log("SIM", f"c={c:g} rep {rep + 1}/{config.n_reps} ok", DEBUG)
    return out


def run_replications(
    config: SimConfig, methods: Optional[Sequence[str]] = None,
    contamination: Optional[float] = None, n_jobs: Optional[int] = None,
) -> List[SimRecord]:
    parsed = [parse_method(m) for m in (methods or config.methods)]
    c = config.contamination if contamination is None else contamination
    if not 0 <= c < 0.5:
        raise BadFraction(f"fração de contaminação {c} fora de [0, 0.5)")
    jobs = config.n_jobs if n_jobs is None else n_jobs
    per_rep = parallel_map(lambda i: _one_replication(config, c, i, parsed), range(config.n_reps), jobs)
    return [rec for recs in per_rep for rec in recs]


def run_sweep(config: SimConfig, n_jobs: Optional[int] = None) -> List[SimRecord]:
    records: List[SimRecord] = []
    for c in config.levels():
        log("SIM", f"contaminação {c:g}: {config.n_reps} replicações x {len(config.methods)} métodos", INFO)
        records.extend(run_replications(config, contamination=c, n_jobs=n_jobs))
    return records


def summarize(records: Sequence[SimRecord]) -> List[list]:
    groups: Dict[Tuple[float, str], List[SimRecord]] = {}
    for r in records:
        groups.setdefault((r.contamination, r.method), []).append(r)
    rows = []
    for (c, method), recs in groups.items():
        ok = [r for r in recs if r.ok]
        for metric in SUMMARY_METRICS:
            q1, med, q3 = quantiles([getattr(r, metric) for r in ok])
            rows.append([c, method, metric, med, q1, q3, q3 - q1, len(ok)])
    return rows
