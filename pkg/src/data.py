from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.errors import ConstantColumn, DimensionMismatch, NonFinite

SCHEMA_VERSION = "1.0"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: Tuple[str, ...] = ()
    response: str = "y"

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch(f"X precisa ser n×p com n,p >= 1 (veio {X.shape})")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X tem {X.shape[0]} linhas, y tem {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFinite("Dados contêm NaN/Inf")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} nomes para {X.shape[1]} colunas")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.response)


@dataclass(frozen=True)
class Standardizer:
    col_means: np.ndarray
    col_scales: np.ndarray
    y_mean: float

    def transform(self, data: Dataset) -> Dataset:
        X = (data.X - self.col_means) / self.col_scales
        return Dataset(X, data.y - self.y_mean, data.feature_names, data.response)

    def inverse(self, data: Dataset) -> Dataset:
        X = data.X * self.col_scales + self.col_means
        return Dataset(X, data.y + self.y_mean, data.feature_names, data.response)

    def coef_to_original(self, beta_std: np.ndarray, intercept_std: float = 0.0) -> Tuple[np.ndarray, float]:
        beta = np.asarray(beta_std, dtype=float) / self.col_scales
        intercept = self.y_mean + intercept_std - float(self.col_means @ beta)
        return beta, float(intercept)

    def coef_to_standardized(self, beta: np.ndarray, intercept: float = 0.0) -> Tuple[np.ndarray, float]:
        beta = np.asarray(beta, dtype=float)
        intercept_std = intercept - self.y_mean + float(self.col_means @ beta)
        return beta * self.col_scales, float(intercept_std)


class ModelFit(BaseModel):
    """Ajuste final; coeficientes na escala ORIGINAL dos dados."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    schema_version: str = SCHEMA_VERSION
    beta: List[float]
    intercept: float
    sigma2: float = Field(gt=0)
    alpha: float = Field(ge=0)
    lam: float = Field(ge=0, alias="lambda")
    n_iter: int = Field(ge=0)
    converged: bool
    objective: float
    feature_names: List[str] = []
    response: str = "y"

    @field_validator("beta", mode="before")
    @classmethod
    def _to_list(cls, v):
        return [float(b) for b in np.asarray(v, dtype=float).reshape(-1)]

    @property
    def coef(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


def standardize(data: Dataset, center_y: bool = True) -> Tuple[Dataset, Standardizer]:
    X = data.X
    means = X.mean(axis=0)
    if data.n < 2:
        raise ConstantColumn(0, data.feature_names[0])
    scales = X.std(axis=0, ddof=1)
    for j, s in enumerate(scales):
        if not s > 0:
            raise ConstantColumn(j, data.feature_names[j])
    y_mean = float(data.y.mean()) if center_y else 0.0
    st = Standardizer(_frozen(means), _frozen(scales), y_mean)
    return st.transform(data), st


def predict(fit: ModelFit, X_new: np.ndarray) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new.reshape(1, -1)
    beta = fit.coef
    if X_new.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"X tem {X_new.shape[1]} colunas, modelo tem {beta.shape[0]}")
    return fit.intercept + X_new @ beta


def residuals(data: Dataset, beta: np.ndarray, intercept: float = 0.0) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.p:
        raise DimensionMismatch(f"beta tem {beta.shape[0]} entradas, dados têm p={data.p}")
    return data.y - intercept - data.X @ beta
