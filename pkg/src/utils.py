import sys
from typing import Sequence

import numpy as np

QUIET, INFO, DEBUG = 0, 1, 2
_verbosity = INFO


def set_verbosity(level: int) -> None:
    global _verbosity
    _verbosity = level


def log(tag: str, msg: str, level: int = INFO) -> None:
    # stdout fica reservado p/ resultados (best_lambda)
    if level <= _verbosity:
        print(f"[{tag}] {msg}", file=sys.stderr)


def derive_seed(*keys: int) -> int:
    """Sub-seed determinística a partir de (seed, i, ...)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def fmt_float(x) -> str:
    return repr(float(x))


def parse_float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def rel_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.linalg.norm(new - old))
    denom = float(np.linalg.norm(new))
    return diff / denom if denom > 0 else diff


def quantiles(values: Sequence[float]) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return float("nan"), float("nan"), float("nan")
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return float(q1), float(med), float(q3)


def parallel_map(fn, items, n_jobs: int = 1) -> list:
    """map() com threads; a ordem do resultado é a ordem de `items`."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))
