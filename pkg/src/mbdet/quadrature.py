"""Double-precision quadrature rules used by the equilibrium module."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def tanh_sinh(nodes: int = 400, tmax: float = 4.0):
    """Tanh-sinh rule on ``[-1, 1]`` with about ``nodes`` points.

    Returns ``(u, dl, dr, w)`` where ``dl = 1 + u`` and ``dr = 1 - u`` are the
    distances to the two endpoints, computed without cancellation so that
    integrands singular at an endpoint can be evaluated near it.
    """
    h = 2.0 * tmax / max(nodes - 1, 2)
    k = np.arange(-int(tmax / h), int(tmax / h) + 1)
    t = k * h
    v = 0.5 * np.pi * np.sinh(t)
    dr = 2.0 / (np.exp(2.0 * v) + 1.0)
    dl = 2.0 / (np.exp(-2.0 * v) + 1.0)
    u = np.tanh(v)
    w = h * 0.5 * np.pi * np.cosh(t) * dl * dr
    keep = w > 0
    out = tuple(arr[keep] for arr in (u, dl, dr, w))
    for arr in out:
        arr.setflags(write=False)
    return out


def chebyshev_angles(nodes: int):
    """Midpoint angles ``(k + 1/2) pi / nodes`` and the uniform weight ``pi / nodes``."""
    phi = (np.arange(nodes) + 0.5) * np.pi / nodes
    return phi, np.pi / nodes
