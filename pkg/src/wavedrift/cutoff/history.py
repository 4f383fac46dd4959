"""Path history of a cut-off trajectory and evaluation of the cut-off product."""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from . import _kernels as K
from .params import CutoffParams

__all__ = ["PathHistory", "PolylineHash", "polyline_distance_linear"]


class PolylineHash:
    """Uniform-grid index over the samples of a polyline.

    ``distance(q, lo, hi)`` returns the exact distance from ``q`` to the
    segments ``[P[m], P[m+1]]`` with ``lo <= m < hi`` whenever it is at most
    ``radius``; larger distances may be reported as ``inf``.
    """

    def __init__(self, P, radius: float, cell: float | None = None):
        self.P = np.ascontiguousarray(P, dtype=float)
        self.radius = float(radius)
        self.h = float(cell or radius)
        seg = np.hypot(*np.diff(self.P, axis=0).T) if len(self.P) > 1 else np.zeros(1)
        self.max_segment = float(seg.max()) if seg.size else 0.0
        self.reach = max(1, math.ceil((self.radius + self.max_segment) / self.h))
        (self.origin, self.nx, self.ny, self.cell_start,
         self.order) = K.grid_build(self.P, self.h)

    def distance(self, q, lo: int = 0, hi: int | None = None) -> float:
        hi = len(self.P) - 1 if hi is None else int(hi)
        q = np.asarray(q, dtype=float)
        if hi <= lo:
            return math.inf
        return K.grid_polyline_dist(self.P, self.origin, self.nx, self.ny, self.cell_start,
                                    self.order, self.h, q, self.reach, int(lo), hi)

    def distances(self, Q, lo=0, hi=None) -> np.ndarray:
        return np.array([self.distance(q, lo, hi) for q in np.atleast_2d(Q)])


def polyline_distance_linear(P, q, lo=0, hi=None) -> float:
    """Linear-scan oracle for :meth:`PolylineHash.distance`."""
    P = np.asarray(P, dtype=float)
    hi = len(P) - 1 if hi is None else hi
    if hi <= lo:
        return math.inf
    a = P[lo:hi]
    b = P[lo + 1:hi + 1]
    e = b - a
    L = (e ** 2).sum(axis=1)
    t = np.where(L > 0, ((q - a) * e).sum(axis=1) / np.where(L > 0, L, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    d = q - (a + t[:, None] * e)
    return float(np.sqrt((d ** 2).sum(axis=1)).min())


class PathHistory:
    """Fine samples of a macro path with the mesh bookkeeping of the cut-offs.

    Sample ``n`` sits at ``t_n = n dt``; ``spc[i-1]`` samples make one mesh-``i``
    cell, so mesh times are sample times and a sample on ``t_k`` belongs to
    cell ``k``.

    Attributes
    ----------
    t, X, V : ndarray
        Macro time, position and momentum samples.
    theta : ndarray or None
        Cut-off value used for the force leaving each sample.
    grad_norm : ndarray or None
        ``|grad H|`` at each sample (micro units).
    """

    def __init__(self, t, X, V, params: CutoffParams, theta=None, theta_left=None,
                 grad_norm=None, delta=None, dt_micro=None):
        self.t = np.asarray(t, dtype=float)
        self.X = np.ascontiguousarray(X, dtype=float)
        self.V = np.ascontiguousarray(V, dtype=float)
        self.params = params
        self.theta = None if theta is None else np.asarray(theta, dtype=float)
        self.theta_left = None if theta_left is None else np.asarray(theta_left, dtype=float)
        self.grad_norm = None if grad_norm is None else np.asarray(grad_norm, dtype=float)
        self.delta = params.delta if delta is None else delta
        if len(self.t) < 2:
            raise ValueError("history needs at least two samples")
        self.dt = float(self.t[1] - self.t[0])
        self.dt_micro = dt_micro
        if not np.allclose(np.diff(self.t), self.dt, rtol=1e-9, atol=1e-15):
            raise ValueError("history samples must be uniform in time")
        spc = []
        for i in (1, 2, 3):
            s = 1.0 / (params.mesh(i) * self.dt)
            r = int(round(s))
            if r < 1 or abs(s - r) > 1e-6 * s:
                raise ValueError(f"mesh {i} (1/{params.mesh(i)}) is not a whole number of samples")
            spc.append(r)
        self.spc = np.array(spc, dtype=np.int64)
        self._mesh2_grid = None
        self._hashes = {}

    @classmethod
    def from_samples(cls, t, X, V, params, **kw) -> "PathHistory":
        return cls(t, X, V, params, **kw)

    def __len__(self):
        return len(self.t)

    @property
    def Vhat(self) -> np.ndarray:
        return self.V / np.hypot(self.V[:, 0], self.V[:, 1])[:, None]

    # mesh bookkeeping -------------------------------------------------

    def cell_of_sample(self, i: int, n) -> np.ndarray:
        return np.asarray(n) // self.spc[i - 1]

    def cell_of_time(self, i: int, t: float) -> int:
        x = t * self.params.mesh(i)
        k = math.floor(x)
        if x - k > 1 - 1e-9:
            k += 1
        return int(k)

    def mesh_index(self, i: int, k: int) -> int:
        """Sample index of the mesh time ``t_k^(i)``."""
        return int(k) * int(self.spc[i - 1])

    def mesh_V(self, i: int) -> np.ndarray:
        return self.V[::self.spc[i - 1]]

    def mesh_X(self, i: int) -> np.ndarray:
        return self.X[::self.spc[i - 1]]

    def covers(self, t: float) -> bool:
        return t <= self.t[-1] + 1e-12

    # spatial indexes ---------------------------------------------------

    def polyline_hash(self, radius: float) -> PolylineHash:
        key = float(radius)
        if key not in self._hashes:
            self._hashes[key] = PolylineHash(self.X, radius)
        return self._hashes[key]

    def mesh2_grid(self):
        """Dict grid of mesh-2 points with cell size ``1/p2``."""
        if self._mesh2_grid is None:
            h = 1.0 / self.params.p2
            grid = defaultdict(list)
            for l, (x, y) in enumerate(self.mesh_X(2)):
                grid[(math.floor(x / h), math.floor(y / h))].append(l)
            self._mesh2_grid = (h, grid)
        return self._mesh2_grid

    def mesh2_near(self, y, lmax: int) -> list:
        """Mesh-2 indices ``l <= lmax`` whose point lies within ``1/p2`` of ``y``.

        Indices returned in ascending order; points at distance ``>= 1/p2``
        may be included (they contribute a factor of exactly one).
        """
        h, grid = self.mesh2_grid()
        ix, iy = math.floor(y[0] / h), math.floor(y[1] / h)
        out = []
        for cx in (ix - 1, ix, ix + 1):
            for cy in (iy - 1, iy, iy + 1):
                out.extend(l for l in grid.get((cx, cy), ()) if l <= lmax)
        return sorted(out)
