"""Kernel backend selection.

The compiled extension is preferred; set ``LAPCAP_PURE_PYTHON=1`` to force the
numpy fallback. ``BACKEND`` names the active implementation and is recorded in
every report, since the two backends sum in different orders and may differ
in the last bits.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("LAPCAP_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(len(a), -1)


def mmd2_unbiased(x, y, bandwidth: float) -> float:
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return float(_impl.mmd2_unbiased(_as_2d(x), _as_2d(y), float(bandwidth)))


def median_bandwidth(z) -> float:
    """Median of the nonzero pairwise distances of ``z``; 1.0 if all coincide.

    Zero distances are dropped so that discrete samples with many ties still
    get a usable bandwidth.
    """
    d = np.asarray(_impl.pairwise_distances(_as_2d(z)))
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.median(d))
