"""Exception taxonomy shared by all chemopattern modules.

The CLI maps these onto process exit codes: configuration problems are
distinguished from numerical failures and from model-domain violations
(such as a receptor density at or below the positivity floor).
"""

from __future__ import annotations


class ChemopatternError(Exception):
    """Base class for all errors raised by this package."""


class ModelDomainError(ChemopatternError, ValueError):
    """Invalid parameters or state outside the model's domain of validity."""


class DegenerateModeError(ModelDomainError):
    """A resonance between cosine modes makes a bifurcation quantity singular.

    ``offending_j`` is the mode index that collides with the requested one.
    """

    def __init__(self, message: str, offending_j: int):
        super().__init__(message)
        self.offending_j = offending_j


class NumericalError(ChemopatternError, RuntimeError):
    """A numerical procedure failed (divergence, overflow, stalled stepper)."""


class NoConvergenceError(NumericalError):
    """Newton iteration failed to converge; carries the last residual norm."""

    def __init__(self, message: str, residual_norm: float):
        super().__init__(message)
        self.residual_norm = residual_norm


class StepRejectedError(ChemopatternError):
    """A time step produced an inadmissible state and should be retried.

    Not a hard failure: ``suggested_dt`` is the recommended retry step.
    """

    def __init__(self, reason: str, suggested_dt: float):
        super().__init__(f"step rejected ({reason}); retry with dt <= {suggested_dt:g}")
        self.reason = reason
        self.suggested_dt = suggested_dt


class ConfigError(ChemopatternError, ValueError):
    """Invalid run configuration; carries every validation message found."""

    def __init__(self, messages: list[str]):
        super().__init__("; ".join(messages))
        self.messages = list(messages)
