import csv
import io
import json
import os
import tempfile
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.data import SCHEMA_VERSION, Dataset, ModelFit
from src.errors import MissingColumn, SchemaError
from src.utils import fmt_float

SCHEMA_LINE = f"# schema_version: {SCHEMA_VERSION}"


def _check_version(version: str, what: str) -> None:
    major = str(version).split(".")[0]
    if major != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"{what}: schema_version {version} não suportada (esperado {SCHEMA_VERSION})")


# ---------- escrita atômica (temp + rename) ----------
@retry(
    reraise=True,
    stop=stop_after_attempt(5),
    wait=wait_exponential(multiplier=0.1, min=0.1, max=2),
    retry=retry_if_exception_type((PermissionError, BlockingIOError)),
)
def _replace(src: str, dst: str) -> None:
    # no Windows o rename falha enquanto outro processo segura o arquivo
    os.replace(src, dst)


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp_", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        _replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def write_json(path: str, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **payload}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


# ---------- ModelFit ----------
def write_model_fit(path: str, fit: ModelFit) -> None:
    atomic_write_text(path, fit.to_json() + "\n")


def read_model_fit(path: str) -> ModelFit:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: JSON inválido ({e})")
    _check_version(doc.get("schema_version", "?"), path)
    try:
        return ModelFit.model_validate(doc)
    except ValidationError as e:
        raise SchemaError(f"{path}: ModelFit inválido ({e.errors()[0]['msg']})")


# ---------- CSV de dados ----------
def read_table(path: str) -> Tuple[List[str], np.ndarray]:
    """Cabeçalho + matriz numérica; linhas '#' são metadados."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = []
        for line in f:
            if line.startswith("#"):
                if line.startswith("# schema_version:"):
                    _check_version(line.split(":", 1)[1].strip(), path)
                continue
            if line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{path}: arquivo vazio")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}: linha {lineno} tem {len(row)} campos, cabeçalho tem {len(header)}")
        values = []
        for name, v in zip(header, row):
            try:
                values.append(float(v))
            except ValueError:
                raise SchemaError(f"{path}: coluna '{name}' tem valor não numérico '{v.strip()}' (linha {lineno})")
        rows.append(values)
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def read_dataset(path: str, response: str) -> Dataset:
    header, M = read_table(path)
    if response not in header:
        raise MissingColumn(response)
    j = header.index(response)
    features = [h for h in header if h != response]
    if not features:
        raise SchemaError(f"{path}: nenhuma coluna preditora além de '{response}'")
    X = np.delete(M, j, axis=1)
    return Dataset(X, M[:, j], tuple(features), response)


def read_features(path: str, fit: ModelFit) -> np.ndarray:
    """Matriz na ordem das colunas do modelo (casamento por nome)."""
    header, M = read_table(path)
    expected = list(fit.feature_names)
    cols = [h for h in header if h != fit.response]
    missing = [c for c in expected if c not in cols]
    extra = [c for c in cols if c not in expected]
    if missing or extra:
        raise SchemaError(f"{path}: colunas não batem com o modelo", missing, extra)
    order = [header.index(c) for c in expected]
    return M[:, order]
