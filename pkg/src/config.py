from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from typing import List, Literal, Optional
import os
from dotenv import load_dotenv

from src.errors import ConfigError

DEFAULT_SEED = 2024


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_sweeps: int = Field(1000, ge=1)
    coef_tol: float = Field(1e-8, gt=0)
    fit_intercept: bool = True
    track_objective: bool = False


class EstimatorSettings(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    alpha: float = Field(1.0, ge=0)
    lam: float = Field(0.1, ge=0, alias="lambda")
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(100, ge=1)
    solver: SolverSettings = SolverSettings()
    # screened: lasso só nas linhas sem alavanca extrema em x
    init: Literal["screened", "lasso_cv", "lasso_fixed", "ols", "provided"] = "screened"
    # usado só com init="provided"; escala ORIGINAL dos dados
    init_beta: Optional[List[float]] = None
    init_folds: int = Field(5, ge=2)
    max_halvings: int = Field(10, ge=0)
    # divergence: σ² minimiza o objetivo DPD junto com β; mse: média de r² (leitura literal)
    scale: Literal["divergence", "mse"] = "divergence"
    seed: int = DEFAULT_SEED

    @model_validator(mode="after")
    def _check_init(self):
        if self.init == "provided" and self.init_beta is None:
            raise ValueError("init='provided' exige init_beta")
        return self


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(300, ge=2)
    p: int = Field(50, ge=1)
    p_active: int = Field(25, ge=0)
    rho: float = Field(0.7, gt=-1, lt=1)
    snr: float = Field(5.0, gt=0)
    intercept_true: float = 2.5
    coef_low: float = 0.5
    coef_high: float = 1.5
    contamination: float = Field(0.10, ge=0, lt=0.5)
    # varredura opcional (ex.: 0, 0.05, 0.10); vazio => só `contamination`
    contamination_levels: List[float] = []
    shift_magnitude: float = 20.0
    n_test: int = Field(1000, ge=1)
    n_reps: int = Field(20, ge=1)
    rng_seed: int = DEFAULT_SEED
    methods: List[str] = ["lasso", "dpd_lasso:0.25", "dpd_lasso:0.5", "dpd_lasso:1", "dpd_lasso:2"]
    dpd_folds: int = Field(5, ge=2)
    lasso_folds: int = Field(20, ge=2)
    grid_size: int = Field(50, ge=2)
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(100, ge=1)
    n_jobs: int = Field(1, ge=1)

    @field_validator("methods", "contamination_levels", mode="before")
    @classmethod
    def _split_list(cls, v):
        if isinstance(v, str):
            return [t.strip() for t in v.split(",") if t.strip()]
        return v

    @field_validator("contamination_levels")
    @classmethod
    def _check_levels(cls, v):
        for c in v:
            if not 0 <= c < 0.5:
                raise ValueError(f"contaminação {c} fora de [0, 0.5)")
        return v

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, v):
        for m in v:
            name, _, arg = m.partition(":")
            if name == "lasso" and not arg:
                continue
            if name == "dpd_lasso":
                try:
                    if float(arg or "1") >= 0:
                        continue
                except ValueError:
                    pass
            raise ValueError(f"método desconhecido: {m}")
        return v

    @model_validator(mode="after")
    def _check_counts(self):
        if self.p_active > self.p:
            raise ValueError("p_active > p")
        if self.coef_low > self.coef_high:
            raise ValueError("coef_low > coef_high")
        return self

    def levels(self) -> List[float]:
        return list(self.contamination_levels) or [self.contamination]


def load_runtime_env() -> dict:
    load_dotenv(override=True)
    try:
        seed = int(os.getenv("DPDLASSO_SEED", str(DEFAULT_SEED)))
        n_jobs = max(int(os.getenv("DPDLASSO_N_JOBS", "1")), 1)
    except ValueError as e:
        raise ConfigError(f"variável de ambiente inválida: {e}")
    return {
        "seed": seed,
        "n_jobs": n_jobs,
        "config_path": os.getenv("DPDLASSO_CONFIG", "sim.conf"),
    }


def load_sim_config(config_path: str, overrides: Optional[dict] = None) -> SimConfig:
    """Lê o arquivo `key = value` (comentários com '#')."""
    if not os.path.exists(config_path):
        raise ConfigError(f"arquivo não encontrado: {config_path}")
    raw: dict = {}
    line_of: dict = {}
    known = set(SimConfig.model_fields)
    with open(config_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"esperado 'chave = valor', veio '{text}'", line=lineno)
            if key == "contamination" and "," in value:
                key = "contamination_levels"
            if key not in known:
                raise ConfigError(f"chave desconhecida '{key}'", line=lineno, key=key)
            raw[key] = value
            line_of[key] = lineno
    if "contamination_levels" in raw and "contamination" not in raw:
        first = raw["contamination_levels"].split(",")[0].strip()
        raw["contamination"] = first
        line_of["contamination"] = line_of["contamination_levels"]
    raw.update(overrides or {})
    try:
        return SimConfig(**raw)
    except ValidationError as e:
        err = e.errors()[0]
        key = str(err["loc"][0]) if err.get("loc") else None
        raise ConfigError(f"{key}: {err['msg']}", line=line_of.get(key), key=key)
