"""Distillation-coefficient schedules: fixed, adaptive (clipped linear map of
ensemble disagreement), threshold gate and linear decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation
from .replay import WarmupBuffer
from .uncertainty import Calibration

KINDS = ("fixed", "adaptive", "threshold", "linear_decay")
ACTIVITY_MARGIN = 0.01


@dataclass
class GuidanceSchedule:
    kind: str
    value: float = 0.1
    lambda_min: float = 0.01
    lambda_max: float = 0.5
    warmup_steps: int = 800
    decay_steps: int = 50_000
    calibration: Calibration | None = None
    tau: float | None = None
    # adaptive with a single ensemble member has no disagreement signal
    single_member: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 <= self.lambda_min <= self.lambda_max:
            raise ConfigError("need 0 <= lambda_min <= lambda_max")
        if self.kind == "fixed" and self.value < 0:
            raise ConfigError("fixed lambda must be >= 0")
        if self.kind == "linear_decay" and self.decay_steps <= 0:
            raise ConfigError("linear decay needs decay_steps > 0")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")

    @property
    def needs_uncertainty(self) -> bool:
        return self.kind in ("adaptive", "threshold") and not self.single_member


def lambda_at(sched: GuidanceSchedule, t: int, u_t: float | None = None) -> float:
    k = sched.kind
    if k == "fixed":
        return sched.value
    if k == "linear_decay":
        frac = min(t / sched.decay_steps, 1.0)
        return sched.lambda_max * (1.0 - frac) + sched.lambda_min * frac
    if t < sched.warmup_steps:
        return sched.lambda_max
    if sched.single_member:
        return 0.5 * (sched.lambda_min + sched.lambda_max)
    if u_t is None:
        raise ContractViolation(f"{k} schedule needs the disagreement u_t at step {t}")
    if k == "threshold":
        if sched.tau is None:
            raise ContractViolation("threshold schedule queried before tau was set")
        return sched.lambda_max if u_t > sched.tau else sched.lambda_min
    cal = sched.calibration
    if cal is None or not cal.frozen:
        raise ContractViolation("adaptive schedule queried after warmup without a frozen calibration")
    ratio = (u_t - cal.u_lo) / (cal.u_hi - cal.u_lo)
    return sched.lambda_min + (sched.lambda_max - sched.lambda_min) * min(max(ratio, 0.0), 1.0)


def threshold_from_warmup(warmup: WarmupBuffer | np.ndarray) -> float:
    values = warmup.as_array() if isinstance(warmup, WarmupBuffer) else np.asarray(warmup, dtype=np.float64)
    if values.size == 0:
        raise ContractViolation("threshold needs a non-empty warmup buffer")
    return float(np.percentile(values, 50.0))


def lambda_activity(trace, lambda_min: float) -> float:
    """Fraction of steps whose lambda exceeds ``lambda_min + 0.01``."""
    arr = np.asarray(trace, dtype=np.float64)
    if arr.size == 0:
        raise ContractViolation("lambda trace is empty")
    return float(np.count_nonzero(arr > lambda_min + ACTIVITY_MARGIN)) / arr.size
