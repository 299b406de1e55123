from __future__ import annotations

import numpy as np
import pytest

from bagsac.errors import ContractViolation
from bagsac.replay import ReplayBuffer, Transition, WarmupBuffer


def _tr(tag: float, k: int = 1) -> Transition:
    return Transition(
        np.full(25, tag), np.full(25 * k, tag), np.array([tag, -tag]), tag,
        np.full(25, tag + 0.5), np.full(25 * k, tag + 0.5), False, np.zeros(4, dtype=bool),
    )


def test_fifo_eviction():
    buf = ReplayBuffer(2, 1)
    for tag in (1.0, 2.0, 3.0):
        buf.push(_tr(tag))
    assert [t.reward for t in buf.transitions()] == [2.0, 3.0]


def test_capacity_never_exceeded():
    buf = ReplayBuffer(50_000, 1)
    t = _tr(1.0)
    for _ in range(50_001):
        buf.push(t)
    assert len(buf) == 50_000


def test_empty():
    buf = ReplayBuffer(4, 1)
    assert len(buf) == 0
    with pytest.raises(ContractViolation):
        buf.sample(1, np.random.default_rng(0))


def test_single_element_replicated():
    buf = ReplayBuffer(8, 3)
    buf.push(_tr(7.0, 3))
    got = buf.sample(4, np.random.default_rng(0))
    assert [t.reward for t in got] == [7.0] * 4


def test_uniform_sampling():
    buf = ReplayBuffer(20, 1)
    for i in range(10):
        buf.push(_tr(float(i)))
    r = buf.sample_batch(100_000, np.random.default_rng(0)).reward
    freq = np.bincount(r.astype(int), minlength=10) / r.size
    assert np.all(np.abs(freq - 0.1) < 0.01)


def test_uniform_after_wraparound():
    buf = ReplayBuffer(5, 1)
    for i in range(13):
        buf.push(_tr(float(i)))
    r = buf.sample_batch(50_000, np.random.default_rng(1)).reward
    assert set(np.unique(r)) == {8.0, 9.0, 10.0, 11.0, 12.0}


def test_deterministic_sampling():
    buf = ReplayBuffer(10, 1)
    for i in range(10):
        buf.push(_tr(float(i)))
    a = buf.sample_batch(32, np.random.default_rng(3)).reward
    b = buf.sample_batch(32, np.random.default_rng(3)).reward
    assert a.tobytes() == b.tobytes()


def test_history_length_checked():
    buf = ReplayBuffer(4, 3)
    with pytest.raises(ContractViolation):
        buf.push(_tr(1.0, 1))


def test_warmup_buffer():
    w = WarmupBuffer(3)
    assert all(w.add(v) for v in (1.0, 2.0, 3.0))
    assert w.full and not w.add(4.0)
    np.testing.assert_array_equal(w.as_array(), [1.0, 2.0, 3.0])
    with pytest.raises(ContractViolation):
        WarmupBuffer(2).add(-1.0)
