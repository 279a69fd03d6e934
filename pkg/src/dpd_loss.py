"""
Perda DPD (density power divergence) na forma log-sum-exp e os pesos softmax
da reponderação.

    h_i(β, σ²) = -(y_i - b0 - x_iᵀβ)² / (2σ²)
    Q_α        = -log( (1/n) Σ exp(α h_i) )
    w_i        = exp(α h_i) / Σ_j exp(α h_j)

α = 0 é permitido: Q_0 = 0 e w_i = 1/n (limites bem definidos).
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from src.data import Dataset, residuals
from src.errors import InvalidParams, InvalidSigma

SIGMA2_FLOOR_FACTOR = 1e-12


@dataclass(frozen=True)
class DpdParams:
    alpha: float
    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise InvalidParams(f"alpha precisa ser finito e >= 0 (veio {self.alpha})")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidSigma(f"sigma2 precisa ser > 0 (veio {self.sigma2})")


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if w.size < 1 or np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidParams("pesos precisam ser >= 0 e somar 1")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))


def sigma2_floor(y: np.ndarray) -> float:
    return max(SIGMA2_FLOOR_FACTOR * float(np.var(y)), np.finfo(float).tiny)


def h_scores(data: Dataset, beta: np.ndarray, params: DpdParams, intercept: float = 0.0) -> np.ndarray:
    r = residuals(data, beta, intercept)
    return -(r * r) / (2.0 * params.sigma2)


def dpd_objective(data: Dataset, beta: np.ndarray, params: DpdParams, intercept: float = 0.0) -> float:
    h = h_scores(data, beta, params, intercept)
    if params.alpha == 0:
        return 0.0
    ah = params.alpha * h
    if ah.min() > -1.0:
        # α h pequeno: log1p/expm1 evita cancelar contra log n
        q = -math.log1p(float(np.mean(np.expm1(ah))))
    else:
        q = -(float(logsumexp(ah)) - math.log(data.n))
    # cada exp(α h_i) <= 1, então Q >= 0; corta ruído de arredondamento
    return max(q, 0.0)


def penalized_objective(
    data: Dataset, beta: np.ndarray, params: DpdParams, lam: float, intercept: float = 0.0
) -> float:
    if lam < 0:
        raise InvalidParams(f"lambda precisa ser >= 0 (veio {lam})")
    beta = np.asarray(beta, dtype=float)
    return dpd_objective(data, beta, params, intercept) + lam * float(np.abs(beta).sum())


def weights_from_h(h: np.ndarray, alpha: float) -> WeightVector:
    w = softmax(alpha * np.asarray(h, dtype=float))
    # renormaliza p/ garantir soma 1 dentro de 1e-12
    return WeightVector(w / w.sum())


def dpd_weights(data: Dataset, beta: np.ndarray, params: DpdParams, intercept: float = 0.0) -> WeightVector:
    h = h_scores(data, beta, params, intercept)
    if params.alpha == 0:
        return WeightVector.uniform(data.n)
    return weights_from_h(h, params.alpha)
