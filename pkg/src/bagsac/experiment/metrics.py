"""Evaluation records, per-run summaries and cross-seed aggregation."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContractViolation, InsufficientCheckpoints

LAST_N = 5


@dataclass
class EvalRecord:
    step: int
    returns: list[float]
    mean_return: float
    return_std: float
    collision_rate: float
    collisions: list[bool] = field(default_factory=list)

    @classmethod
    def from_episodes(cls, step: int, returns, collisions) -> "EvalRecord":
        r = np.asarray(returns, dtype=np.float64)
        c = [bool(x) for x in collisions]
        return cls(int(step), r.tolist(), float(r.mean()), float(r.std()), sum(c) / len(c), c)


@dataclass
class RunSummary:
    last5_avg: float
    last5_std: float
    best_return: float
    collision_rate_last5: float
    lambda_activity_fraction: float | None
    lambda_activity_post_warmup: float | None
    disagreement: dict | None
    n_evals: int
    privileged_reads_eval: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        return cls(**d)


def last5(evals: list[EvalRecord]) -> tuple[float, float]:
    if len(evals) < LAST_N:
        raise InsufficientCheckpoints(
            f"insufficient checkpoints: need {LAST_N} evaluations, have {len(evals)}"
        )
    tail = np.array([e.mean_return for e in evals[-LAST_N:]])
    return float(tail.mean()), float(tail.std())


def disagreement_summary(trace, n_windows: int = 10) -> dict | None:
    u = np.asarray([x for x in trace if x is not None], dtype=np.float64)
    if u.size == 0:
        return None
    windows = np.array_split(u, min(n_windows, u.size))
    return {
        "mean": float(u.mean()),
        "median": float(np.median(u)),
        "first": float(u[0]),
        "last": float(u[-1]),
        "window_means": [float(w.mean()) for w in windows],
    }


@dataclass
class SeedAggregate:
    values: list[float]
    mean: float
    cv_percent: float | None
    min: float
    std: float


def aggregate_seeds(summaries) -> SeedAggregate:
    """Mean, population CV% and worst seed over per-seed last-5 averages.

    Accepts RunSummary objects or bare floats.
    """
    vals = [s.last5_avg if isinstance(s, RunSummary) else float(s) for s in summaries]
    if len(vals) < 2:
        raise ContractViolation("aggregate_seeds needs at least two runs")
    arr = np.asarray(vals, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())
    if mean == 0.0 or not math.isfinite(mean):
        warnings.warn("mean return is zero; coefficient of variation undefined", RuntimeWarning, stacklevel=2)
        cv = None
    else:
        cv = 100.0 * std / mean
    return SeedAggregate(vals, mean, cv, float(arr.min()), std)
