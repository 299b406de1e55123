"""Run orchestration: configuration, training loop, evaluation, sweeps and diagnostics."""

from .config import RunConfig, load, loads
from .metrics import EvalRecord, RunSummary, SeedAggregate, aggregate_seeds
from .runner import evaluate, train_run

__all__ = [
    "EvalRecord",
    "RunConfig",
    "RunSummary",
    "SeedAggregate",
    "aggregate_seeds",
    "evaluate",
    "load",
    "loads",
    "train_run",
]
