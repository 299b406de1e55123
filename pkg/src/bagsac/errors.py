"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BagsacError(Exception):
    """Base class for package errors."""


class ContractViolation(BagsacError, ValueError):
    """A caller broke an operation's precondition (shapes, ordering, state)."""


class ConfigError(BagsacError, ValueError):
    """Invalid or incompatible run configuration."""


class NumericalAbort(BagsacError, FloatingPointError):
    """A non-finite value appeared during training or a numeric kernel.

    ``snapshot`` carries whatever context the raiser had (step, component,
    recent losses) so the run directory can record it.
    """

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = dict(snapshot or {})


class MissingArtifacts(BagsacError, FileNotFoundError):
    """A run or campaign directory lacks files an operation needs."""


class InsufficientCheckpoints(BagsacError, ValueError):
    """Too few evaluation checkpoints to build a run summary."""
