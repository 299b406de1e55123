"""Fixed-capacity FIFO replay storage and the warmup uncertainty buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .highway import ACTION_DIM, N_NEIGHBORS, STATE_DIM


@dataclass
class Transition:
    full_state: np.ndarray
    history: np.ndarray
    action: np.ndarray
    reward: float
    next_full_state: np.ndarray
    next_history: np.ndarray
    done: bool
    occlusion_mask: np.ndarray


@dataclass
class Batch:
    """Column-stacked transitions, the form every learner consumes."""

    full_state: np.ndarray
    history: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_full_state: np.ndarray
    next_history: np.ndarray
    done: np.ndarray
    occlusion_mask: np.ndarray

    def __len__(self) -> int:
        return self.reward.shape[0]

    @classmethod
    def from_transitions(cls, items: list[Transition]) -> "Batch":
        if not items:
            raise ContractViolation("cannot build an empty batch")
        return cls(
            np.stack([t.full_state for t in items]),
            np.stack([t.history for t in items]),
            np.stack([t.action for t in items]),
            np.array([t.reward for t in items], dtype=np.float64),
            np.stack([t.next_full_state for t in items]),
            np.stack([t.next_history for t in items]),
            np.array([t.done for t in items], dtype=bool),
            np.stack([t.occlusion_mask for t in items]).astype(bool),
        )


_COLUMNS = ("full_state", "history", "action", "reward", "next_full_state", "next_history", "done", "occlusion_mask")


class ReplayBuffer:
    """Ring buffer over preallocated column arrays; uniform sampling with replacement."""

    def __init__(self, capacity: int, history_len: int):
        if capacity < 1:
            raise ContractViolation("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self.history_len = int(history_len)
        hdim = STATE_DIM * self.history_len
        self._data = {
            "full_state": np.zeros((capacity, STATE_DIM)),
            "history": np.zeros((capacity, hdim)),
            "action": np.zeros((capacity, ACTION_DIM)),
            "reward": np.zeros(capacity),
            "next_full_state": np.zeros((capacity, STATE_DIM)),
            "next_history": np.zeros((capacity, hdim)),
            "done": np.zeros(capacity, dtype=bool),
            "occlusion_mask": np.zeros((capacity, N_NEIGHBORS), dtype=bool),
        }
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._next
        d = self._data
        if np.shape(t.history) != d["history"].shape[1:] or np.shape(t.next_history) != d["history"].shape[1:]:
            raise ContractViolation("transition history length does not match buffer K")
        if not np.isfinite(t.reward):
            raise ContractViolation("non-finite reward")
        for name in _COLUMNS:
            d[name][i] = getattr(t, name)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _ordered_indices(self) -> np.ndarray:
        start = (self._next - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def _rows(self, idx) -> Batch:
        return Batch(*(self._data[name][idx] for name in _COLUMNS))

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ContractViolation("cannot sample from an empty replay buffer")
        return rng.integers(0, self._size, size=batch)

    def sample_batch(self, batch: int, rng: np.random.Generator) -> Batch:
        # valid slots are 0..size-1 until full, then every slot
        return self._rows(self.sample_indices(batch, rng))

    def sample(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        b = self.sample_batch(batch, rng)
        return [self._transition(b, i) for i in range(len(b))]

    def contents(self) -> Batch:
        """All stored transitions, oldest first."""
        return self._rows(self._ordered_indices())

    def transitions(self) -> list[Transition]:
        b = self.contents()
        return [self._transition(b, i) for i in range(len(b))]

    @staticmethod
    def _transition(b: Batch, i: int) -> Transition:
        return Transition(
            b.full_state[i].copy(),
            b.history[i].copy(),
            b.action[i].copy(),
            float(b.reward[i]),
            b.next_full_state[i].copy(),
            b.next_history[i].copy(),
            bool(b.done[i]),
            b.occlusion_mask[i].copy(),
        )


class WarmupBuffer:
    """Disagreement values collected before calibration, up to ``capacity``."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.values: list[float] = []

    def add(self, u: float) -> bool:
        """Record ``u``; returns False once the buffer is full."""
        if u < 0 or not np.isfinite(u):
            raise ContractViolation(f"disagreement must be finite and >= 0, got {u}")
        if len(self.values) >= self.capacity:
            return False
        self.values.append(float(u))
        return True

    @property
    def full(self) -> bool:
        return len(self.values) >= self.capacity

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)
