"""Hot inner-loop kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``BAGSAC_DISABLE_NUMBA`` is
unset (or ``0``). Both backends stay importable as ``numpy_backend`` and
``jit_backend`` so parity tests and the benchmark can call each directly.
"""

from __future__ import annotations

import os

from . import _numpy as numpy_backend

try:
    from . import _jit as jit_backend
except ImportError:  # pragma: no cover - numba is a declared dependency
    jit_backend = None


def _numba_requested() -> bool:
    flag = os.environ.get("BAGSAC_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = jit_backend is not None and _numba_requested()
BACKEND_NAME = "numba" if USE_NUMBA else "numpy"
_active = jit_backend if USE_NUMBA else numpy_backend

adam_update = _active.adam_update
polyak = _active.polyak
pairwise_disagreement = _active.pairwise_disagreement
box_overlaps = _active.box_overlaps
nearest_order = _active.nearest_order

__all__ = [
    "BACKEND_NAME",
    "USE_NUMBA",
    "adam_update",
    "box_overlaps",
    "jit_backend",
    "nearest_order",
    "numpy_backend",
    "pairwise_disagreement",
    "polyak",
]
