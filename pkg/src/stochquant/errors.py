"""Exception hierarchy.

Each class records which part of the pipeline raised it so the CLI can map
errors to exit codes and name the failing module.
"""


class StochQuantError(Exception):
    module = "stochquant"


class ConfigurationError(StochQuantError, ValueError):
    """Inputs are inconsistent (grid mismatch, bad scenario keys, ...)."""

    module = "config"


class DomainError(StochQuantError, ValueError):
    """A value lies outside its admissible domain (g <= 0, q off-grid, ...)."""

    module = "core_numerics"


class InsufficientSamplesError(StochQuantError, ValueError):
    module = "action_model"


class NumericalError(StochQuantError, RuntimeError):
    """A numerical procedure failed; ``residual`` holds the diagnostic."""

    module = "quantum_solver"

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")
        self.residual = residual


class DegenerateStateError(StochQuantError, ValueError):
    module = "madelung"


class EmptyEnsembleError(StochQuantError, ValueError):
    module = "statistics"
