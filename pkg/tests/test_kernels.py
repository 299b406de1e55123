"""Parity between the numba kernels and the numpy fallback."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from bagsac import kernels

jit = kernels.jit_backend
npk = kernels.numpy_backend
pytestmark = pytest.mark.skipif(jit is None, reason="numba unavailable")


def test_adam_parity(rng):
    n = 257
    p0, g = rng.normal(size=n), rng.normal(size=n)
    states = []
    for mod in (jit, npk):
        p, m, v = p0.copy(), np.zeros(n), np.zeros(n)
        for step in range(1, 6):
            mod.adam_update(p, g * step, m, v, 3e-4, 0.9, 0.999, 1e-8, step)
        states.append((p, m, v))
    for a, b in zip(*states):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-16)


def test_polyak_parity(rng):
    t0, o = rng.normal(size=100), rng.normal(size=100)
    a, b = t0.copy(), t0.copy()
    jit.polyak(a, o, 0.995)
    npk.polyak(b, o, 0.995)
    np.testing.assert_allclose(a, b, rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 5, 7])
def test_disagreement_parity(rng, n):
    p = rng.normal(size=(n, 25)) * 10
    assert jit.pairwise_disagreement(p) == pytest.approx(npk.pairwise_disagreement(p), rel=1e-12)


def test_box_overlap_parity(rng):
    for _ in range(200):
        m = int(rng.integers(0, 8))
        args = (rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(-0.5, 0.5), 5.0, 2.0,
                rng.uniform(-8, 8, m), rng.uniform(-4, 4, m), np.full(m, 5.0), np.full(m, 2.0))
        np.testing.assert_array_equal(jit.box_overlaps(*args), npk.box_overlaps(*args))


def test_nearest_order_parity_with_ties(rng):
    dx = rng.integers(-3, 4, size=30).astype(float)
    dy = rng.integers(-3, 4, size=30).astype(float)
    np.testing.assert_array_equal(jit.nearest_order(dx, dy), npk.nearest_order(dx, dy))


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, BAGSAC_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from bagsac import kernels; print(kernels.BACKEND_NAME)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
