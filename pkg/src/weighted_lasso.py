"""
Lasso ponderado por descida coordenada cíclica:

    min_β  Σ_i w_i (y_i - b0 - x_iᵀβ)² + λ ||β||_1

Sem fator 1/(2n): o λ daqui equivale a 2·λ_glmnet quando w_i = 1/n.
O intercepto (não penalizado) sai em forma fechada pela centragem ponderada.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from src.config import SolverSettings
from src.data import Dataset
from src.dpd_loss import WeightVector
from src.errors import DimensionMismatch, InvalidParams
from src.utils import DEBUG, log

Weights = Union[WeightVector, np.ndarray]

# folga relativa do KKT p/ aceitar a solução exata no suporte
POLISH_KKT_TOL = 1e-10


@dataclass(frozen=True)
class LassoSolution:
    beta: np.ndarray
    intercept: float
    n_sweeps: int
    kkt_residual: float
    converged: bool = True
    objective_path: Tuple[float, ...] = field(default=())


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _weight_array(weights: Weights, n: int) -> np.ndarray:
    w = np.asarray(weights.w if isinstance(weights, WeightVector) else weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise DimensionMismatch(f"{w.shape[0]} pesos para n={n}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidParams("pesos precisam ser finitos e >= 0")
    return w


def _centered(data: Dataset, w: np.ndarray, fit_intercept: bool):
    if not fit_intercept:
        return data.X, data.y, np.zeros(data.p), 0.0
    sw = float(w.sum())
    if sw <= 0:
        return data.X, data.y, np.zeros(data.p), 0.0
    xm = (w @ data.X) / sw
    ym = float(w @ data.y) / sw
    return data.X - xm, data.y - ym, xm, ym


def lambda_max(data: Dataset, weights: Weights, fit_intercept: bool = True) -> float:
    w = _weight_array(weights, data.n)
    Xc, yc, _, _ = _centered(data, w, fit_intercept)
    return float(np.max(np.abs(2.0 * (Xc.T @ (w * yc)))))


def weighted_lasso_objective(
    data: Dataset, weights: Weights, lam: float, beta: np.ndarray, intercept: float = 0.0
) -> float:
    w = _weight_array(weights, data.n)
    r = data.y - intercept - data.X @ np.asarray(beta, dtype=float)
    return float(w @ (r * r)) + lam * float(np.abs(beta).sum())


def kkt_check(
    data: Dataset, weights: Weights, lam: float, beta: np.ndarray, intercept: float = 0.0
) -> float:
    w = _weight_array(weights, data.n)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.p:
        raise DimensionMismatch(f"beta tem {beta.shape[0]} entradas, p={data.p}")
    r = data.y - intercept - data.X @ beta
    g = 2.0 * (data.X.T @ (w * r))
    zero = beta == 0
    viol = np.where(zero, np.maximum(np.abs(g) - lam, 0.0), np.abs(g - lam * np.sign(beta)))
    return float(viol.max())


def _polish(G: np.ndarray, c: np.ndarray, beta: np.ndarray, half: float):
    """
    Resolve exato no suporte atual com os sinais fixos:
        G_AA b = c_A - (λ/2) s_A
    Só aceita se os sinais batem e o KKT vale fora do suporte.
    """
    active = np.flatnonzero(beta)
    if active.size == 0:
        return None
    s = np.sign(beta[active])
    try:
        b = np.linalg.solve(G[np.ix_(active, active)], c[active] - half * s)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(b)) or np.any(np.sign(b) != s):
        return None
    cand = np.zeros_like(beta)
    cand[active] = b
    q = c - G @ cand
    slack = POLISH_KKT_TOL * (half + float(np.max(np.abs(c))) + 1.0)
    viol = np.abs(q) - half
    viol[active] = np.abs(q[active] - half * s)
    if float(viol.max()) > slack:
        return None
    return cand, q


def solve_weighted_lasso(
    data: Dataset,
    weights: Weights,
    lam: float,
    warm_start: Optional[np.ndarray] = None,
    settings: SolverSettings = SolverSettings(),
) -> LassoSolution:
    if lam < 0:
        raise InvalidParams(f"lambda precisa ser >= 0 (veio {lam})")
    w = _weight_array(weights, data.n)
    p = data.p
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float).reshape(-1)
    if beta.shape[0] != p:
        raise DimensionMismatch(f"warm_start tem {beta.shape[0]} entradas, p={p}")

    Xc, yc, xm, ym = _centered(data, w, settings.fit_intercept)
    Xw = Xc * w[:, None]
    G = Xw.T @ Xc
    c = Xw.T @ yc
    diag = np.diag(G).tolist()
    # G simétrica: linha j == coluna j, e a linha é contígua
    rows = np.ascontiguousarray(G)
    # q_j = Σ_i w_i x_ij r_i (gradiente negativo / 2)
    q = c - G @ beta
    half = 0.5 * lam
    s0 = float(yc @ (w * yc))

    def objective() -> float:
        return s0 - float(c @ beta) - float(beta @ q) + lam * float(np.abs(beta).sum())

    path = [objective()] if settings.track_objective else []
    converged = False
    polished = False
    sweeps = 0
    support = beta != 0
    for sweeps in range(1, settings.max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            a = diag[j]
            bj = float(beta[j])
            z = float(q[j]) + a * bj
            if a <= 0 or -half <= z <= half:
                new = 0.0
            else:
                new = (z - half if z > half else z + half) / a
            d = new - bj
            if d != 0.0:
                q -= rows[j] * d
                beta[j] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        if settings.track_objective:
            path.append(objective())
        if max_change <= settings.coef_tol:
            converged = True
            break
        new_support = beta != 0
        if np.array_equal(new_support, support):
            exact = _polish(G, c, beta, half)
            if exact is not None:
                beta, q = exact
                if settings.track_objective:
                    path[-1] = min(path[-1], objective())
                converged = polished = True
                break
        support = new_support

    intercept = ym - float(xm @ beta)
    kkt = kkt_check(data, w, lam, beta, intercept)
    if not converged:
        log("LASSO", f"não convergiu em {settings.max_sweeps} sweeps (kkt={kkt:.3g})", DEBUG)
    elif polished:
        log("LASSO", f"suporte fixo após {sweeps} sweeps; solução exata (kkt={kkt:.3g})", DEBUG)
    beta.flags.writeable = False
    return LassoSolution(beta, intercept, sweeps, kkt, converged, tuple(path))
