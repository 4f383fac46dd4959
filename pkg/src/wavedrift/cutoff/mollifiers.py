"""Smooth cut-off factors.

Each factor is exactly one on its plateau and exactly zero on its kill zone,
with a quintic smoothstep in between.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K

__all__ = ["psi1", "psi2", "phi", "smoothstep"]


def smoothstep(u) -> float:
    """Quintic ``C^2`` step from 0 (``u <= 0``) to 1 (``u >= 1``)."""
    return float(K.smoothstep(float(u)))


def _vec(v, name):
    v = np.asarray(v, dtype=float).reshape(2)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def _check_K(K_):
    if K_ < 3:
        raise ValueError("K must be at least 3 so that plateau and kill zones are separated")


def psi1(v, l, K_, M_star, check_K: bool = True) -> float:
    """Alignment mollifier: 1 on ``v^.l >= 1-1/K`` within the speed band, 0 beyond ``1-2/K``."""
    if check_K:
        _check_K(K_)
    v, l = _vec(v, "v"), _vec(l, "l")
    # same normalization as the compiled cut-off, so the two agree bitwise
    n = math.sqrt(l[0] * l[0] + l[1] * l[1])
    if n == 0:
        raise ValueError("reference direction must be nonzero")
    return float(K.psi1(v[0], v[1], l[0] / n, l[1] / n, float(K_), float(M_star)))


def psi2(v, l, K_, M_star, check_K: bool = True) -> float:
    """Momentum-tether mollifier: 1 on ``|v-l| <= 1/(M* sqrt(2K))``, 0 beyond ``1/(M* sqrt K)``."""
    if check_K:
        _check_K(K_)
    v, l = _vec(v, "v"), _vec(l, "l")
    return float(K.psi2(v[0], v[1], l[0], l[1], float(K_), float(M_star)))


def phi(y, v, x, w, p2, N4) -> float:
    """Tangential self-intersection mollifier."""
    y, v, x, w = _vec(y, "y"), _vec(v, "v"), _vec(x, "x"), _vec(w, "w")
    if not v.any() or not w.any():
        raise ValueError("momenta must be nonzero")
    return float(K.phi(y[0], y[1], v[0], v[1], x[0], x[1], w[0], w[1], float(p2), float(N4)))


