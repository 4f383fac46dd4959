"""The cut-off product along a recorded path."""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .history import PathHistory
from .mollifiers import _vec, phi, psi1, psi2
from .params import CutoffParams

__all__ = ["theta", "theta_bruteforce", "HistoryGapError"]


class HistoryGapError(ValueError):
    """The path history does not reach the requested time."""


def _cells(history, t):
    return [history.cell_of_time(i, t) for i in (1, 2, 3)]


def _psi_product(history, cells, v, Nf, Ms):
    val = 1.0
    for i, k in zip((1, 2, 3), cells):
        mv = history.mesh_V(i)
        if k >= len(mv):
            raise HistoryGapError(f"history does not reach mesh-{i} cell {k}")
        val *= float(K.psi_level(v[0], v[1], k, mv, Nf[i - 1], Ms))
        if val == 0.0:
            return 0.0
    return val


def _prepare(t, y, v, history, params):
    params = params or history.params
    if not history.covers(t):
        raise HistoryGapError(f"history ends at {history.t[-1]:.6g} < t = {t:.6g}")
    y, v = _vec(y, "y"), _vec(v, "v")
    Nf = np.array(params.N, dtype=float)
    return params, y, v, Nf


def theta(t, y, v, history: PathHistory, params: CutoffParams | None = None, *,
          rescaled: bool = False) -> float:
    """Cut-off product at macro time ``t``, position ``y`` and momentum ``v``.

    The self-intersection factors are looked up through the mesh-2 grid: only
    points within ``1/p2`` of ``y`` can differ from one.  With ``rescaled`` the
    position is given in micro units and multiplied by ``delta`` first.
    """
    params, y, v, Nf = _prepare(t, y, v, history, params)
    if rescaled:
        y = y * history.delta
    cells = _cells(history, t)
    val = _psi_product(history, cells, v, Nf, params.M_star)
    if val == 0.0 or cells[0] < 1:
        return val
    lmax = (cells[0] - 1) * (params.p2 // params.p1)
    mx, mv = history.mesh_X(2), history.mesh_V(2)
    for l in history.mesh2_near(y, lmax):
        f = float(K.phi(y[0], y[1], v[0], v[1], mx[l, 0], mx[l, 1], mv[l, 0], mv[l, 1],
                        float(params.p2), Nf[3]))
        if f != 1.0:
            val *= f
            if val == 0.0:
                return 0.0
    return val


def theta_bruteforce(t, y, v, history: PathHistory, params: CutoffParams | None = None) -> float:
    """Oracle for :func:`theta`: the full product over every mesh-2 factor."""
    params, y, v, Nf = _prepare(t, y, v, history, params)
    cells = _cells(history, t)
    val = 1.0
    for i, k in zip((1, 2, 3), cells):
        mv = history.mesh_V(i)
        if k == 0:
            f = psi2(v, mv[0], Nf[i - 1], params.M_star, check_K=False)
        else:
            f = (psi1(v, mv[k - 1], Nf[i - 1], params.M_star, check_K=False)
                 * psi2(v, mv[k], Nf[i - 1], params.M_star, check_K=False))
        val *= f
    if cells[0] >= 1:
        mx, mv = history.mesh_X(2), history.mesh_V(2)
        for l in range((cells[0] - 1) * (params.p2 // params.p1) + 1):
            val *= phi(y, v, mx[l], mv[l], params.p2, Nf[3])
    return val
