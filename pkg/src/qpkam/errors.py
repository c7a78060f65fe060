"""Typed errors shared across the package."""


class QpkamError(Exception):
    """Base class for all package errors."""


class ConfigError(QpkamError):
    """Invalid or inconsistent run configuration; carries the field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class DegenerateFamilyError(QpkamError):
    """A Lipschitz family needs at least two distinct parameter samples."""


class DiffeomorphismError(QpkamError):
    """sup |tau * beta_x| >= 1: x -> x + tau*beta(phi, x) is not invertible."""


class NonConvergenceError(QpkamError):
    """An iteration hit its cap; carries the last residual (and history)."""

    def __init__(self, message, residual=None, history=None):
        self.residual = residual
        self.history = history or []
        super().__init__(message)


class SmallDivisorError(QpkamError):
    """A divisor fell under its admissible floor; names the offending modes."""

    def __init__(self, divisor, floor, indices):
        self.divisor = divisor
        self.floor = floor
        self.indices = indices
        super().__init__(
            f"small divisor |{divisor:.3e}| < floor {floor:.3e} at modes {indices}"
        )


class WindowError(QpkamError):
    """A symbol's xi window is too small for the requested operation."""

    def __init__(self, needed, available):
        self.needed = needed
        self.available = available
        super().__init__(f"xi window exhausted: need radius {needed}, have {available}")


class StructureError(QpkamError):
    """Reality or Hamiltonian structure violated beyond tolerance."""


class StageError(QpkamError):
    """A pipeline stage failed; names the stage and the failed object."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
