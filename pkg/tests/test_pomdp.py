from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from bagsac.errors import ConfigError
from bagsac.highway import env_reset
from bagsac.pomdp import LEVELS, ObservationHistory, PomdpLevel, history_push, history_reset, level, observe, observe_masked


@pytest.fixture
def state():
    return env_reset(4)[1]


def test_level_none_is_identity(state, rng):
    assert observe(state, LEVELS["none"], rng).tobytes() == state.tobytes()


def test_full_occlusion(state, rng):
    obs = observe(state, PomdpLevel("x", 0.1, 1.0), rng)
    assert not obs[5:].any()
    assert obs[0] == 1.0 and np.any(obs[1:5] != state[1:5])


def test_occluded_rows_exactly_zero_and_presence_clean(state):
    rng = np.random.default_rng(0)
    for _ in range(2000):
        obs, occ = observe_masked(state, LEVELS["severe"], rng)
        rows = obs.reshape(5, 5)
        assert np.all(rows[1:][occ] == 0.0)
        assert set(np.unique(rows[:, 0])) <= {0.0, 1.0}


def test_severe_statistics(state):
    rng = np.random.default_rng(1)
    n = 20_000
    occ = np.empty((n, 4), dtype=bool)
    noise = []
    for i in range(n):
        obs, occ[i] = observe_masked(state, LEVELS["severe"], rng)
        vis = np.concatenate(([True], ~occ[i]))
        noise.append((obs.reshape(5, 5) - state.reshape(5, 5))[vis, 1:].ravel())
    assert occ.mean() == pytest.approx(0.5, abs=0.01)
    assert np.concatenate(noise).std() == pytest.approx(0.1, abs=0.005)


def test_masks_independent_across_rows_and_steps(state):
    rng = np.random.default_rng(2)
    occ = np.array([observe_masked(state, LEVELS["moderate"], rng)[1] for _ in range(100_000)])
    table = np.zeros((2, 2))
    np.add.at(table, (occ[:, 0].astype(int), occ[:, 1].astype(int)), 1)
    assert stats.chi2_contingency(table)[1] > 0.01
    table = np.zeros((2, 2))
    np.add.at(table, (occ[:-1, 2].astype(int), occ[1:, 2].astype(int)), 1)
    assert stats.chi2_contingency(table)[1] > 0.01


def test_seeded_reproducibility(state):
    a = [observe(state, LEVELS["mild"], np.random.default_rng(5)) for _ in range(2)]
    assert a[0].tobytes() == a[1].tobytes()


def test_unknown_level_rejected():
    with pytest.raises(ConfigError):
        level("extreme")
    with pytest.raises(ConfigError):
        PomdpLevel("bad", 0.1, 1.5)


def test_history_fifo_and_padding():
    obs = [np.full(25, float(i + 1)) for i in range(4)]
    h = history_reset(3)
    history_push(h, obs[0])
    np.testing.assert_array_equal(h.flatten(), np.concatenate([np.zeros(50), obs[0]]))
    for o in obs[1:]:
        history_push(h, o)
    np.testing.assert_array_equal(h.flatten(), np.concatenate(obs[1:]))
    h.reset()
    assert not h.flatten().any()


def test_history_sizes():
    assert history_reset(3).flatten().shape == (75,)
    assert history_reset(5).flatten().shape == (125,)
    h = ObservationHistory(1)
    for i in range(3):
        h.push(np.full(25, i))
        np.testing.assert_array_equal(h.flatten(), np.full(25, i))


def test_history_keeps_occluded_zeros(state):
    rng = np.random.default_rng(3)
    h = ObservationHistory(3)
    masks = []
    for _ in range(3):
        obs, m = observe_masked(state, LEVELS["severe"], rng)
        h.push(obs)
        masks.append(m)
    slots = h.flatten().reshape(3, 5, 5)
    for slot, m in zip(slots, masks):
        assert np.all(slot[1:][m] == 0.0)
