"""
Exception hierarchy shared by the engines, the harness and the CLI.

ValidationError subclasses map to exit code 2, NumericalError subclasses to
exit code 3 (see main.py).
"""
from typing import Any, Optional


class DyadicLabError(Exception):
    """Base class for every error raised on purpose by the lab."""


# --- Validation branch (bad input, bad configuration) ---

class ValidationError(DyadicLabError, ValueError):
    pass


class InputValidationError(ValidationError):
    """Non-finite coefficients, wrong variable kind, malformed state."""


class ConfigurationError(ValidationError):
    """Invalid model / Galerkin / integrator / certificate parameters."""


class DomainError(ValidationError):
    """Argument outside the domain of a closed-form bound (e.g. delta >= k)."""


class RangeError(ValidationError, IndexError):
    """Shell index or time outside the admissible range."""


class ConfigParseError(ValidationError):
    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}" if line > 0 else "--set override")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


# --- Numerical branch ---

class NumericalError(DyadicLabError, ArithmeticError):
    pass


class StiffnessError(NumericalError):
    """Step size fell below dt_min; `shell` is the fastest (limiting) shell."""

    def __init__(self, message: str, shell: int, t: float, partial: Optional[Any] = None):
        self.shell = shell
        self.t = t
        self.partial = partial       # Trajectory up to the failing step
        super().__init__(f"{message} (limiting shell j={shell}, t={t:.6g})")


class BudgetExhaustedError(NumericalError):
    """max_steps ran out before the requested end time."""

    def __init__(self, message: str, t: float, partial: Optional[Any] = None):
        self.t = t
        self.shell = None
        self.partial = partial
        super().__init__(f"{message} (stopped at t={t:.6g})")


class DiagnosticsError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message: str, estimate: float, error: float):
        self.estimate = estimate
        self.error = error
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")


# --- Persistence ---

class ArtifactError(DyadicLabError, OSError):
    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(f"{message}: {path}")
