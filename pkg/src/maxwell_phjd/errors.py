"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid problem setup: bad resolution, overlap, tolerances or config text."""


class SingularMatrix(ArithmeticError):
    def __init__(self, pivot_index: int, pivot: float, msg: str | None = None):
        self.pivot_index = pivot_index
        self.pivot = pivot
        super().__init__(msg or f"matrix is singular to working precision at pivot {pivot_index} (|u_ii| = {pivot:.3e})")


class CoarseSingular(SingularMatrix):
    """Shifted coarse operator stayed singular after the shift perturbation."""


class LocalSingular(SingularMatrix):
    def __init__(self, subdomain: int, pivot_index: int, pivot: float):
        self.subdomain = subdomain
        super().__init__(pivot_index, pivot, f"subdomain {subdomain}: shifted local operator singular at pivot {pivot_index}")


class NoConvergence(RuntimeError):
    def __init__(self, msg: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(msg)


class UnknownKey(ConfigurationError):
    def __init__(self, key: str, line: int | None = None):
        self.key = key
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown config key {key!r}{where}")


class ConfigTypeError(ConfigurationError, TypeError):
    def __init__(self, key: str, expected: str, value: str):
        self.key = key
        self.expected = expected
        super().__init__(f"config key {key!r} expects {expected}, got {value!r}")


class MissingRequired(ConfigurationError):
    def __init__(self, keys):
        self.keys = tuple(keys)
        super().__init__(f"missing required config key(s): {', '.join(self.keys)}")


class StudyRowError(RuntimeError):
    """A study row failed; the original exception is the ``__cause__``."""

    def __init__(self, row: str, cause: BaseException):
        self.row = row
        super().__init__(f"{row}: {type(cause).__name__}: {cause}")
