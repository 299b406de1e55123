"""numba-compiled loop kernels. Import fails cleanly if numba is missing."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def adam_update(params, grads, m, v, lr, beta1, beta2, eps, step):
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for i in range(params.shape[0]):
        g = grads[i]
        mi = beta1 * m[i] + (1.0 - beta1) * g
        vi = beta2 * v[i] + (1.0 - beta2) * (g * g)
        m[i] = mi
        v[i] = vi
        params[i] -= lr * (mi / bc1) / (math.sqrt(vi / bc2) + eps)


@njit(cache=True)
def polyak(target, online, rho):
    for i in range(target.shape[0]):
        target[i] = rho * target[i] + (1.0 - rho) * online[i]


@njit(cache=True)
def pairwise_disagreement(preds):
    n, d = preds.shape
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = preds[i, k] - preds[j, k]
                acc += diff * diff
            total += acc
    return 2.0 * total / (n * (n - 1))


@njit(cache=True)
def _project(px, py, ax, ay):
    lo = px[0] * ax + py[0] * ay
    hi = lo
    for k in range(1, 4):
        p = px[k] * ax + py[k] * ay
        if p < lo:
            lo = p
        if p > hi:
            hi = p
    return lo, hi


@njit(cache=True)
def box_overlaps(ex, ey, eh, el, ew, xs, ys, ls, ws):
    n = xs.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    c = math.cos(eh)
    s = math.sin(eh)
    hl = 0.5 * el
    hw = 0.5 * ew
    lx = np.array([hl, hl, -hl, -hl])
    ly = np.array([hw, -hw, -hw, hw])
    gx = np.empty(4)
    gy = np.empty(4)
    for k in range(4):
        gx[k] = c * lx[k] - s * ly[k] + ex
        gy[k] = s * lx[k] + c * ly[k] + ey
    axx = np.array([1.0, 0.0, c, -s])
    axy = np.array([0.0, 1.0, s, c])
    ox = np.empty(4)
    oy = np.empty(4)
    for j in range(n):
        ohl = 0.5 * ls[j]
        ohw = 0.5 * ws[j]
        ox[0] = xs[j] + ohl
        ox[1] = xs[j] + ohl
        ox[2] = xs[j] - ohl
        ox[3] = xs[j] - ohl
        oy[0] = ys[j] + ohw
        oy[1] = ys[j] - ohw
        oy[2] = ys[j] - ohw
        oy[3] = ys[j] + ohw
        hit = True
        for a in range(4):
            elo, ehi = _project(gx, gy, axx[a], axy[a])
            olo, ohi = _project(ox, oy, axx[a], axy[a])
            if ohi <= elo or ehi <= olo:
                hit = False
                break
        out[j] = hit
    return out


@njit(cache=True)
def nearest_order(dx, dy):
    n = dx.shape[0]
    d2 = dx * dx + dy * dy
    order = np.arange(n)
    # insertion sort: stable, n is a handful of vehicles
    for i in range(1, n):
        key = order[i]
        j = i - 1
        while j >= 0 and d2[order[j]] > d2[key]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = key
    return order
