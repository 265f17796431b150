from typing import Any, List, Optional, Sequence

import numpy as np


class ScromError(Exception):
    """Base class for all package errors."""


class DimensionError(ScromError, ValueError):
    pass


class NonFiniteError(ScromError, ValueError):
    pass


class ConvergenceError(ScromError, RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual_norm: float, iterations: int):
        super().__init__(f"{message} (residual {residual_norm:.3e} after {iterations} iterations)")
        self.residual_norm = residual_norm
        self.iterations = iterations


class InfeasibleConstraintError(ScromError):
    """The subdomain constraint cannot be met by any coefficient update."""

    def __init__(self, message: str, rows: Sequence[int]):
        super().__init__(f"{message}; violated subdomain rows: {list(rows)}")
        self.rows = list(rows)


class IncompatibleRhsError(ScromError, ValueError):
    pass


class ArtifactError(ScromError):
    pass


class ConfigError(ScromError):
    """Scenario configuration failed validation.

    ``errors`` holds one entry per offending field, each with ``field``,
    ``message`` and ``value`` attributes.
    """

    def __init__(self, errors: List[Any], source: Optional[str] = None):
        self.errors = list(errors)
        self.source = source
        lines = [f"{e.field}: {e.message}" for e in self.errors]
        prefix = f"Invalid scenario configuration ({source})" if source else "Invalid scenario configuration"
        super().__init__(prefix + ":\n  " + "\n  ".join(lines))


def require_finite(name: str, array) -> None:
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"{name} contains non-finite entries")
