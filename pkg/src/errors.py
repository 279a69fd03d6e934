from typing import Iterable, Optional


class DpdLassoError(Exception):
    """Erro de entrada/config. O CLI converte em exit code."""
    exit_code = 1


class DimensionMismatch(DpdLassoError):
    pass


class NonFinite(DpdLassoError):
    pass


class ConstantColumn(DpdLassoError):
    def __init__(self, j: int, name: Optional[str] = None):
        self.j = j
        label = f"{j} ({name})" if name else f"{j}"
        super().__init__(f"Coluna {label} tem variância zero")


class InvalidSigma(DpdLassoError):
    pass


class InvalidParams(DpdLassoError):
    pass


class BadK(DpdLassoError):
    pass


class BadRho(DpdLassoError):
    pass


class BadCounts(DpdLassoError):
    pass


class BadFraction(DpdLassoError):
    pass


class BadGrid(DpdLassoError):
    pass


class DegenerateSignal(DpdLassoError):
    pass


class MissingColumn(DpdLassoError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Coluna de resposta '{name}' não encontrada")


class SchemaError(DpdLassoError):
    def __init__(self, msg: str, missing: Iterable[str] = (), extra: Iterable[str] = ()):
        self.missing = list(missing)
        self.extra = list(extra)
        parts = [msg]
        if self.missing:
            parts.append(f"faltando: {', '.join(self.missing)}")
        if self.extra:
            parts.append(f"extras: {', '.join(self.extra)}")
        super().__init__(" | ".join(parts))


class ConfigError(DpdLassoError):
    def __init__(self, msg: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        prefix = f"linha {line}: " if line is not None else ""
        super().__init__(f"Config inválida: {prefix}{msg}")
