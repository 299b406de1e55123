from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bagsac.errors import ConfigError, ContractViolation
from bagsac.guidance import GuidanceSchedule, lambda_activity, lambda_at, threshold_from_warmup
from bagsac.uncertainty import Calibration

CAL = Calibration(2.0, 6.0)


def adaptive(**kw):
    return GuidanceSchedule("adaptive", calibration=CAL, **kw)


def test_adaptive_endpoints_and_midpoint():
    s = adaptive()
    assert lambda_at(s, 800, 2.0) == 0.01
    assert lambda_at(s, 800, 6.0) == 0.5
    assert lambda_at(s, 800, 60.0) == 0.5
    assert lambda_at(s, 800, 4.0) == pytest.approx(0.255, abs=1e-12)


def test_linear_decay_points():
    s = GuidanceSchedule("linear_decay", decay_steps=50_000)
    assert lambda_at(s, 0) == 0.5
    assert lambda_at(s, 50_000) == pytest.approx(0.01, abs=1e-12)
    assert lambda_at(s, 25_000) == pytest.approx(0.255, abs=1e-12)
    assert lambda_at(s, 80_000) == pytest.approx(0.01, abs=1e-12)


def test_threshold_boundary_is_strict():
    s = GuidanceSchedule("threshold", tau=3.0)
    assert lambda_at(s, 900, 3.0) == 0.01
    assert lambda_at(s, 900, 3.0 + 1e-12) == 0.5


def test_warmup_plateau():
    for s in (adaptive(), GuidanceSchedule("threshold", tau=1.0)):
        assert all(lambda_at(s, t, 0.0) == 0.5 for t in range(0, 800, 37))


def test_single_member_midpoint():
    s = GuidanceSchedule("adaptive", single_member=True)
    assert lambda_at(s, 10) == 0.5
    assert lambda_at(s, 5000) == pytest.approx(0.255)
    assert not s.needs_uncertainty


def test_contract_violations():
    with pytest.raises(ContractViolation):
        lambda_at(GuidanceSchedule("adaptive"), 900, 1.0)
    with pytest.raises(ContractViolation):
        lambda_at(adaptive(), 900, None)
    with pytest.raises(ContractViolation):
        lambda_at(GuidanceSchedule("threshold"), 900, 1.0)
    with pytest.raises(ConfigError):
        GuidanceSchedule("cosine")
    with pytest.raises(ConfigError):
        GuidanceSchedule("fixed", value=-0.1)


def test_threshold_from_warmup_medians():
    assert threshold_from_warmup(np.array([1.0, 2.0, 3.0])) == 2.0
    assert threshold_from_warmup(np.array([1.0, 2.0, 3.0, 4.0])) == 2.5
    assert threshold_from_warmup(np.full(7, 4.5)) == 4.5
    with pytest.raises(ContractViolation):
        threshold_from_warmup(np.array([]))


def test_lambda_activity_values():
    assert lambda_activity([0.01] * 10, 0.01) == 0.0
    assert lambda_activity([0.5] * 10, 0.01) == 1.0
    trace = np.full(50_000, 0.01)
    trace[:2800] = 0.3
    assert lambda_activity(trace, 0.01) == 0.056
    assert lambda_activity([0.02, 0.0200001], 0.01) == 0.5


_u = st.floats(0.0, 100.0)
_t = st.integers(0, 100_000)


@settings(max_examples=200, deadline=None)
@given(_t, _u)
def test_range_for_every_kind(t, u):
    for s in (adaptive(), GuidanceSchedule("threshold", tau=3.0), GuidanceSchedule("linear_decay", decay_steps=50_000)):
        assert 0.01 - 1e-15 <= lambda_at(s, t, u) <= 0.5 + 1e-15


@settings(max_examples=200, deadline=None)
@given(_u, _u)
def test_adaptive_monotone_in_u(u1, u2):
    lo, hi = sorted((u1, u2))
    assert lambda_at(adaptive(), 1000, lo) <= lambda_at(adaptive(), 1000, hi)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50_000), st.integers(0, 50_000))
def test_linear_decay_non_increasing(t1, t2):
    s = GuidanceSchedule("linear_decay", decay_steps=50_000)
    a, b = sorted((t1, t2))
    assert lambda_at(s, a) >= lambda_at(s, b)


@settings(max_examples=100, deadline=None)
@given(_t, _u, _u)
def test_fixed_ignores_uncertainty(t, u1, u2):
    s = GuidanceSchedule("fixed", value=0.1)
    assert lambda_at(s, t, u1) == lambda_at(s, t, u2) == 0.1
