"""Forward-dynamics ensemble, pairwise disagreement, warmup percentile
calibration and the visible/occluded blindness report.

Ensemble inputs and targets are raw kinematics features (no scaling), so
occluded rows are exact zeros on both sides in ``partial_obs`` mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractViolation
from .highway import ACTION_DIM, N_FEATURES, N_NEIGHBORS, STATE_DIM
from .numerics import AdamState, Mlp, adam_step
from .pomdp import newest_slot
from .replay import Batch, ReplayBuffer, WarmupBuffer

TARGET_MODES = ("partial_obs", "full_state")
CALIBRATION_EPS = 1e-8


class Ensemble:
    def __init__(self, history_len: int, n_members: int, seeds, hidden: int = 64, lr: float = 3e-4, target_mode: str = "partial_obs"):
        if n_members < 1:
            raise ContractViolation("ensemble needs at least one member")
        if target_mode not in TARGET_MODES:
            raise ContractViolation(f"target_mode must be one of {TARGET_MODES}")
        seeds = list(seeds)
        if len(seeds) != n_members or len(set(seeds)) != n_members:
            raise ContractViolation("need one distinct init seed per member")
        self.history_len = int(history_len)
        self.target_mode = target_mode
        in_dim = STATE_DIM * self.history_len + ACTION_DIM
        self.members = [Mlp([in_dim, hidden, hidden, STATE_DIM], "relu", seed=s) for s in seeds]
        self.optims = [AdamState.zeros(m.n_params, lr) for m in self.members]

    @property
    def n(self) -> int:
        return len(self.members)

    def inputs(self, histories, actions) -> np.ndarray:
        return np.concatenate([np.asarray(histories, dtype=np.float64), np.asarray(actions, dtype=np.float64)], axis=-1)

    def targets(self, batch: Batch) -> np.ndarray:
        if self.target_mode == "full_state":
            return batch.next_full_state
        return newest_slot(batch.next_history)


def ensemble_predict(ens: Ensemble, history, action) -> np.ndarray:
    """Raw member predictions, shape ``(N, 25)`` (or ``(N, B, 25)`` for batches)."""
    x = ens.inputs(history, action)
    if x.shape[-1] != ens.members[0].input_size:
        raise ContractViolation("history dimension does not match ensemble input")
    return np.stack([m(x) for m in ens.members])


def disagreement(preds) -> float:
    """Mean squared distance over unordered member pairs: 2/(N(N-1)) sum_{i<j} ||p_i - p_j||^2."""
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[0] < 2:
        raise ContractViolation("disagreement needs at least two equal-length predictions")
    return float(kernels.pairwise_disagreement(np.ascontiguousarray(preds)))


def member_loss_grads(member: Mlp, x, target) -> tuple[float, np.ndarray]:
    pred, tape = member.forward(x)
    err = pred - target
    loss = float(np.mean(err * err))
    grads, _ = member.backward(tape, (2.0 / err.size) * err, input_grad=False)
    return loss, grads


def ensemble_update(ens: Ensemble, buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> list[float]:
    """Independent minibatch and one Adam step per member, drawn in member order."""
    if len(buffer) == 0:
        raise ContractViolation("ensemble update needs a non-empty buffer")
    batches = [buffer.sample_batch(batch_size, rng) for _ in ens.members]
    losses = []
    for member, opt, b in zip(ens.members, ens.optims, batches):
        loss, grads = member_loss_grads(member, ens.inputs(b.history, b.action), ens.targets(b))
        adam_step(opt, member, grads)
        losses.append(loss)
    return losses


@dataclass
class Calibration:
    u_lo: float
    u_hi: float
    frozen: bool = True


def calibrate(warmup: WarmupBuffer | np.ndarray) -> Calibration:
    """10th/90th percentiles (linear interpolation) of the warmup disagreements."""
    values = warmup.as_array() if isinstance(warmup, WarmupBuffer) else np.asarray(warmup, dtype=np.float64)
    if values.size < 10:
        raise ContractViolation(f"calibration needs >= 10 warmup values, got {values.size}")
    lo, hi = np.percentile(values, [10.0, 90.0])
    lo, hi = float(lo), float(hi)
    if hi <= lo:
        warnings.warn(
            f"degenerate warmup spread (u_lo == u_hi == {lo!r}); widening by {CALIBRATION_EPS}",
            RuntimeWarning,
            stacklevel=2,
        )
        hi = lo + CALIBRATION_EPS
    return Calibration(lo, hi, True)


def _occluded_dims(masks: np.ndarray) -> np.ndarray:
    """Expand (B, 4) row masks to (B, 25) feature masks; the ego row is never occluded."""
    rows = np.concatenate([np.zeros((masks.shape[0], 1), dtype=bool), masks.astype(bool)], axis=1)
    return np.repeat(rows, N_FEATURES, axis=1)


def _partition_stats(preds, targets, sel) -> dict:
    n = preds.shape[0]
    t = targets[sel]
    p = preds[:, sel]
    err = p - t[None]
    diff_sq = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            diff_sq = diff_sq + (p[i] - p[j]) ** 2
    per_dim_u = (2.0 / (n * (n - 1))) * diff_sq if n > 1 else np.zeros_like(t)
    dims = np.nonzero(sel)[1] if sel.ndim == 2 else None
    col_std = {}
    if dims is not None:
        for d in np.unique(dims):
            col_std[int(d)] = float(np.std(t[dims == d]))
    return {
        "n_entries": int(t.size),
        "mse": float(np.mean(err * err)),
        "disagreement": float(np.mean(per_dim_u)) if n > 1 else None,
        "target_mean": float(np.mean(t)),
        "target_std": float(np.std(t)),
        "target_std_per_dim": col_std,
        "mean_abs_prediction": float(np.mean(np.abs(p))),
    }


def blindness_report(ens: Ensemble, data: ReplayBuffer | Batch, sample_size: int, level: str = "unknown") -> dict:
    """Split ensemble error, disagreement and target statistics by whether the
    target row was occluded at t+1.

    Uses the ``sample_size`` most recent transitions.
    """
    batch = data.contents() if isinstance(data, ReplayBuffer) else data
    if len(batch) < sample_size:
        raise ContractViolation(f"need {sample_size} transitions, have {len(batch)}")
    sl = slice(len(batch) - sample_size, len(batch))
    hist, act = batch.history[sl], batch.action[sl]
    masks = batch.occlusion_mask[sl]
    b = Batch(batch.full_state[sl], hist, act, batch.reward[sl], batch.next_full_state[sl],
              batch.next_history[sl], batch.done[sl], masks)
    preds = ensemble_predict(ens, hist, act)
    targets = ens.targets(b)
    occ = _occluded_dims(masks)
    report = {
        "mode": ens.target_mode,
        "level": level,
        "n_samples": int(sample_size),
        "n_members": ens.n,
        "visible": _partition_stats(preds, targets, ~occ),
        "occluded": None,
        "occlusion_observed": bool(occ.any()),
    }
    if occ.any():
        report["occluded"] = _partition_stats(preds, targets, occ)
    else:
        report["note"] = "no occlusion observed"
    if ens.n > 1:
        u = np.array([disagreement(preds[:, i]) for i in range(sample_size)])
        any_occ = masks.any(axis=1)
        report["u_split"] = {
            "mean_u_any_occluded": float(u[any_occ].mean()) if any_occ.any() else None,
            "mean_u_none_occluded": float(u[~any_occ].mean()) if (~any_occ).any() else None,
            "mean_u": float(u.mean()),
        }
    return report


def occluded_rows_zero(obs_rows: np.ndarray, masks: np.ndarray) -> bool:
    """True when every row flagged occluded is exactly zero (all 5 features)."""
    rows = obs_rows.reshape(-1, N_NEIGHBORS + 1, N_FEATURES)[:, 1:]
    return bool(np.all(rows[masks.astype(bool)] == 0.0))
