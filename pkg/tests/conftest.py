from __future__ import annotations

import numpy as np
import pytest


def central_fd(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. the flat array ``x`` (mutated and restored)."""
    flat = x.reshape(-1)
    assert np.shares_memory(flat, x)
    g = np.empty_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return g.reshape(x.shape)


def rel_err(a, b, floor: float = 1e-6) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def naive_forward(layer_sizes, params, x, act="relu"):
    """Loop-based MLP forward, independent of the vectorised implementation."""
    pos = 0
    h = [float(v) for v in x]
    n_layers = len(layer_sizes) - 1
    for li in range(n_layers):
        n_in, n_out = layer_sizes[li], layer_sizes[li + 1]
        w = params[pos : pos + n_in * n_out]
        pos += n_in * n_out
        b = params[pos : pos + n_out]
        pos += n_out
        out = []
        for j in range(n_out):
            s = b[j]
            for i in range(n_in):
                s += h[i] * w[i * n_out + j]
            if li < n_layers - 1:
                s = max(s, 0.0) if act == "relu" else np.tanh(s)
            out.append(s)
        h = out
    return np.array(h)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_batch(rng, n: int = 8, k: int = 3, done=None):
    from bagsac.replay import Batch

    fs = rng.normal(size=(n, 25)) * 5
    nfs = rng.normal(size=(n, 25)) * 5
    hist = rng.normal(size=(n, 25 * k)) * 5
    nhist = rng.normal(size=(n, 25 * k)) * 5
    act = rng.uniform(-1, 1, size=(n, 2))
    rew = rng.normal(size=n)
    d = np.zeros(n, dtype=bool) if done is None else np.asarray(done, dtype=bool)
    mask = rng.random((n, 4)) < 0.5
    return Batch(fs, hist, act, rew, nfs, nhist, d, mask)
