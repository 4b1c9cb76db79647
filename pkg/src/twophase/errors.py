"""Exception types shared across the package."""

from __future__ import annotations


class UsageError(ValueError):
    """An operator or function was called with inputs of the wrong kind or shape."""


class ParameterError(UsageError):
    """A constructor argument violates its constraint; ``key`` names the argument."""

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class DomainError(ValueError):
    """A thermodynamic evaluation left its admissible region (e.g. theta <= 0)."""


class SolverError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SimulationBlowup(RuntimeError):
    """Positivity of density or temperature was lost during time integration."""

    def __init__(self, message: str, state=None, t: float | None = None, step: int | None = None):
        super().__init__(message)
        self.state = state
        self.t = t
        self.step = step


class ConfigError(ValueError):
    """A configuration file could not be parsed or violates a constraint."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.message = message
        self.line = line
        self.key = key
