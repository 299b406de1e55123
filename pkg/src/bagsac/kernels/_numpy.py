"""Vectorised numpy versions of the hot kernels.

Same signatures and in-place semantics as the numba path in ``_jit.py``.
"""

from __future__ import annotations

import numpy as np


def adam_update(params, grads, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grads
    v *= beta2
    v += (1.0 - beta2) * (grads * grads)
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    params -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def polyak(target, online, rho):
    target *= rho
    target += (1.0 - rho) * online


def pairwise_disagreement(preds):
    n = preds.shape[0]
    diff = preds[:, None, :] - preds[None, :, :]
    total = np.sum(diff * diff) * 0.5
    return 2.0 * total / (n * (n - 1))


def _corners(x, y, heading, length, width):
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def box_overlaps(ex, ey, eh, el, ew, xs, ys, ls, ws):
    """Oriented ego box against axis-aligned boxes, separating-axis test."""
    n = xs.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return out
    ego = _corners(ex, ey, eh, el, ew)
    c, s = np.cos(eh), np.sin(eh)
    axes = np.array([[1.0, 0.0], [0.0, 1.0], [c, s], [-s, c]])
    hl = 0.5 * ls[:, None]
    hw = 0.5 * ws[:, None]
    ox = np.concatenate([xs[:, None] + hl, xs[:, None] + hl, xs[:, None] - hl, xs[:, None] - hl], axis=1)
    oy = np.concatenate([ys[:, None] + hw, ys[:, None] - hw, ys[:, None] - hw, ys[:, None] + hw], axis=1)
    out[:] = True
    for ax in axes:
        pe = ego @ ax
        po = ox * ax[0] + oy * ax[1]
        sep = (po.max(axis=1) <= pe.min()) | (pe.max() <= po.min(axis=1))
        out &= ~sep
    return out


def nearest_order(dx, dy):
    d2 = dx * dx + dy * dy
    return np.argsort(d2, kind="stable")
