"""Observation model: per-vehicle i.i.d. occlusion plus Gaussian sensor noise,
and the fixed-window observation history fed to the control actor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation
from .highway import N_FEATURES, N_NEIGHBORS, STATE_DIM


@dataclass(frozen=True)
class PomdpLevel:
    name: str
    noise_sigma: float
    occlusion_rate: float

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0.0 <= self.occlusion_rate <= 1.0:
            raise ConfigError("occlusion_rate must lie in [0, 1]")

    @property
    def is_identity(self) -> bool:
        return self.noise_sigma == 0.0 and self.occlusion_rate == 0.0


LEVELS = {
    "none": PomdpLevel("none", 0.0, 0.0),
    "mild": PomdpLevel("mild", 0.02, 0.10),
    "moderate": PomdpLevel("moderate", 0.05, 0.25),
    "severe": PomdpLevel("severe", 0.10, 0.50),
}


def level(name: str, noise_sigma: float | None = None, occlusion_rate: float | None = None) -> PomdpLevel:
    """Look up a preset by name, or build a custom level when both values are given."""
    if noise_sigma is not None and occlusion_rate is not None:
        return PomdpLevel(name, float(noise_sigma), float(occlusion_rate))
    try:
        return LEVELS[name]
    except KeyError:
        raise ConfigError(f"unknown POMDP level {name!r}; choose from {sorted(LEVELS)}") from None


def observe_masked(state, lvl: PomdpLevel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Apply occlusion then noise. Returns ``(observation, occluded_rows)``.

    ``occluded_rows`` is a length-4 bool array for neighbour rows 1-4. The
    ego row is never occluded. Noise touches only the four continuous
    columns of rows that stay visible, so occluded rows are exactly zero and
    presence flags stay exactly 0 or 1.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (STATE_DIM,):
        raise ContractViolation(f"state must have length {STATE_DIM}, got {state.shape}")
    if lvl.is_identity:
        return state.copy(), np.zeros(N_NEIGHBORS, dtype=bool)
    # fixed draw pattern per call keeps the stream aligned whatever the outcome
    occluded = rng.random(N_NEIGHBORS) < lvl.occlusion_rate
    noise = rng.standard_normal((N_NEIGHBORS + 1, N_FEATURES - 1)) * lvl.noise_sigma
    obs = state.reshape(N_NEIGHBORS + 1, N_FEATURES).copy()
    visible = np.concatenate(([True], ~occluded))
    obs[~visible] = 0.0
    obs[visible, 1:] += noise[visible]
    return obs.reshape(-1), occluded


def observe(state, lvl: PomdpLevel, rng: np.random.Generator) -> np.ndarray:
    return observe_masked(state, lvl, rng)[0]


class ObservationHistory:
    """Sliding window of the ``K`` newest observations, oldest first.

    Slots that have not been filled since the last reset are all-zero.
    """

    def __init__(self, k: int):
        if k < 1:
            raise ContractViolation(f"history length K must be >= 1, got {k}")
        self.k = int(k)
        self._window = np.zeros((self.k, STATE_DIM))

    def push(self, obs) -> "ObservationHistory":
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (STATE_DIM,):
            raise ContractViolation(f"observation must have length {STATE_DIM}")
        self._window[:-1] = self._window[1:]
        self._window[-1] = obs
        return self

    def reset(self) -> "ObservationHistory":
        self._window[...] = 0.0
        return self

    def flatten(self) -> np.ndarray:
        return self._window.reshape(-1).copy()

    @property
    def newest(self) -> np.ndarray:
        return self._window[-1].copy()

    def __len__(self) -> int:
        return self.k * STATE_DIM


def history_reset(k: int) -> ObservationHistory:
    return ObservationHistory(k)


def history_push(hist: ObservationHistory, obs) -> ObservationHistory:
    return hist.push(obs)


def newest_slot(flat_histories: np.ndarray) -> np.ndarray:
    """Newest observation of flattened histories ``(..., 25K)``."""
    return flat_histories[..., -STATE_DIM:]
