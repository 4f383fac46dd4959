"""Compiled mollifiers, the cut-off product and the modified integrator.

Plateau and kill zones are decided by direct comparisons so that the
mollifiers return exactly 1.0 and 0.0 there; the quintic smoothstep is only
evaluated strictly inside the transition band.
"""

import math

import numba as nb
import numpy as np

from .._jit import OK, field_jet


@nb.njit(cache=True)
def smoothstep(u):
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    # the polynomial rounds slightly above 1 next to u = 1
    return min(1.0, u * u * u * (10.0 + u * (-15.0 + 6.0 * u)))


@nb.njit(cache=True)
def psi1(vx, vy, lx, ly, K, Ms):
    """1 if v^.l >= 1-1/K and 1/M* <= |v| <= M*; 0 if v^.l <= 1-2/K or |v| outside (1/(2M*), 2M*)."""
    s = math.sqrt(vx * vx + vy * vy)
    if s <= 0.5 / Ms or s >= 2.0 * Ms:
        return 0.0
    if s < 1.0 / Ms:
        fs = smoothstep((s - 0.5 / Ms) / (0.5 / Ms))
    elif s > Ms:
        fs = smoothstep((2.0 * Ms - s) / Ms)
    else:
        fs = 1.0
    c = (vx * lx + vy * ly) / s
    hi = 1.0 - 1.0 / K
    lo = 1.0 - 2.0 / K
    if c >= hi:
        fa = 1.0
    elif c <= lo:
        fa = 0.0
    else:
        fa = smoothstep((c - lo) / (hi - lo))
    return fa * fs


@nb.njit(cache=True)
def psi2(vx, vy, lx, ly, K, Ms):
    """1 if |v-l| <= 1/(M* sqrt(2K)); 0 if |v-l| >= 1/(M* sqrt(K))."""
    dx = vx - lx
    dy = vy - ly
    d = math.sqrt(dx * dx + dy * dy)
    r0 = 1.0 / (Ms * math.sqrt(2.0 * K))
    r1 = 1.0 / (Ms * math.sqrt(K))
    if d <= r0:
        return 1.0
    if d >= r1:
        return 0.0
    return smoothstep((r1 - d) / (r1 - r0))


@nb.njit(cache=True)
def phi(yx, yy, vx, vy, xx, xy, wx, wy, p2, N4):
    """1 if |y-x| >= 1/p2 or |v^.w^| <= 1-1/N4; 0 if |y-x| <= 1/(2p2) and |v^.w^| >= 1-1/(2N4)."""
    dx = yx - xx
    dy = yy - xy
    d = math.sqrt(dx * dx + dy * dy)
    far = 1.0 / p2
    near = 0.5 / p2
    if d >= far:
        return 1.0
    nv = math.sqrt(vx * vx + vy * vy)
    nw = math.sqrt(wx * wx + wy * wy)
    c = abs(vx * wx + vy * wy) / (nv * nw)
    hi = 1.0 - 0.5 / N4
    lo = 1.0 - 1.0 / N4
    if c <= lo:
        return 1.0
    if d <= near:
        fd = 0.0
    else:
        fd = smoothstep((d - near) / (far - near))
    if c >= hi:
        fa = 0.0
    else:
        fa = smoothstep((hi - c) / (hi - lo))
    return 1.0 - (1.0 - fd) * (1.0 - fa)


@nb.njit(cache=True)
def psi_level(vx, vy, cell, mv, K, Ms):
    """Violent-turn factor of one mesh level in mesh cell ``cell``."""
    if cell == 0:
        return psi2(vx, vy, mv[0, 0], mv[0, 1], K, Ms)
    ax = mv[cell - 1, 0]
    ay = mv[cell - 1, 1]
    n = math.sqrt(ax * ax + ay * ay)
    f = psi1(vx, vy, ax / n, ay / n, K, Ms)
    if f == 0.0:
        return 0.0
    return f * psi2(vx, vy, mv[cell, 0], mv[cell, 1], K, Ms)


@nb.njit(cache=True)
def theta_at(cells, yx, yy, vx, vy, mv1, mv2, mv3, mx2, ratio21, Nf, p2, Ms):
    """Cut-off product for mesh cells ``cells = (k1, k2, k3)``.

    The alignment factors are multiplied in level order, then the
    self-intersection factors over mesh-2 points ``l <= (k1 - 1) p2 / p1`` in
    index order.  Returns 0.0 as soon as a factor vanishes.
    """
    val = 1.0
    f = psi_level(vx, vy, cells[0], mv1, Nf[0], Ms)
    val *= f
    if val == 0.0:
        return 0.0
    f = psi_level(vx, vy, cells[1], mv2, Nf[1], Ms)
    val *= f
    if val == 0.0:
        return 0.0
    f = psi_level(vx, vy, cells[2], mv3, Nf[2], Ms)
    val *= f
    if val == 0.0:
        return 0.0
    k1 = cells[0]
    if k1 >= 1:
        lmax = (k1 - 1) * ratio21
        for l in range(lmax + 1):
            f = phi(yx, yy, vx, vy, mx2[l, 0], mx2[l, 1], mv2[l, 0], mv2[l, 1], p2, Nf[3])
            if f != 1.0:
                val *= f
                if val == 0.0:
                    return 0.0
    return val


@nb.njit(cache=True)
def modified_verlet(fa, x, y, vx, vy, delta, dt, nsteps, spc, Nf, p2, ratio21, Ms):
    """Velocity Verlet for the cut-off dynamics in the micro frame.

    ``spc[i]`` is the number of steps per mesh-``i+1`` cell; the mesh times
    are therefore step times.  The force at step ``n`` is
    ``Theta(t_n, delta z_n, v) grad H(z_n)``; the half-kick that produces
    ``v_n`` uses the cut-off of the cell containing ``t_n^-`` evaluated at the
    half-step momentum, the half-kick leaving ``t_n`` uses the cell
    containing ``t_n`` at ``v_n``.  With the cut-off identically one this is
    bit-for-bit the plain Verlet scheme.

    Returns ``(out, status, steps_done)`` with
    ``out[n] = (X1, X2, V1, V2, theta, theta_left, |grad H|)`` in macro units.
    """
    out = np.zeros((nsteps + 1, 7))
    n1 = nsteps // spc[0] + 2
    n2 = nsteps // spc[1] + 2
    n3 = nsteps // spc[2] + 2
    mv1 = np.zeros((n1, 2))
    mv2 = np.zeros((n2, 2))
    mv3 = np.zeros((n3, 2))
    mx2 = np.zeros((n2, 2))
    cells = np.zeros(3, dtype=np.int64)
    coupling = math.sqrt(delta)
    half = 0.5 * dt * coupling
    mv1[0, 0] = vx
    mv1[0, 1] = vy
    mv2[0, 0] = vx
    mv2[0, 1] = vy
    mv3[0, 0] = vx
    mv3[0, 1] = vy
    mx2[0, 0] = delta * x
    mx2[0, 1] = delta * y
    st, h, gx, gy, _, _, _ = field_jet(fa, x, y, 1)
    if st != OK:
        return out[:1], st, 0
    th = theta_at(cells, delta * x, delta * y, vx, vy, mv1, mv2, mv3, mx2, ratio21, Nf, p2, Ms)
    out[0, 0] = delta * x
    out[0, 1] = delta * y
    out[0, 2] = vx
    out[0, 3] = vy
    out[0, 4] = th
    out[0, 5] = th
    out[0, 6] = math.sqrt(gx * gx + gy * gy)
    fx = th * gx
    fy = th * gy
    for n in range(1, nsteps + 1):
        vx -= half * fx
        vy -= half * fy
        x += dt * vx
        y += dt * vy
        st, h, gx, gy, _, _, _ = field_jet(fa, x, y, 1)
        if st != OK:
            return out[:n], st, n - 1
        yx = delta * x
        yy = delta * y
        for i in range(3):
            cells[i] = (n - 1) // spc[i]
        thl = theta_at(cells, yx, yy, vx, vy, mv1, mv2, mv3, mx2, ratio21, Nf, p2, Ms)
        vx -= half * (thl * gx)
        vy -= half * (thl * gy)
        if n % spc[0] == 0:
            mv1[n // spc[0], 0] = vx
            mv1[n // spc[0], 1] = vy
        if n % spc[1] == 0:
            mv2[n // spc[1], 0] = vx
            mv2[n // spc[1], 1] = vy
            mx2[n // spc[1], 0] = yx
            mx2[n // spc[1], 1] = yy
        if n % spc[2] == 0:
            mv3[n // spc[2], 0] = vx
            mv3[n // spc[2], 1] = vy
        for i in range(3):
            cells[i] = n // spc[i]
        th = theta_at(cells, yx, yy, vx, vy, mv1, mv2, mv3, mx2, ratio21, Nf, p2, Ms)
        fx = th * gx
        fy = th * gy
        out[n, 0] = yx
        out[n, 1] = yy
        out[n, 2] = vx
        out[n, 3] = vy
        out[n, 4] = th
        out[n, 5] = thl
        out[n, 6] = math.sqrt(gx * gx + gy * gy)
    return out, OK, nsteps


# ---------------------------------------------------------------------------
# uniform grid over polyline samples


@nb.njit(cache=True)
def grid_build(P, h):
    """Bucket the points ``P`` into square cells of side ``h``.

    Returns ``(origin, nx, ny, cell_start, order)``; within each cell the
    point indices are ascending.
    """
    n = P.shape[0]
    x0 = P[:, 0].min() - h
    y0 = P[:, 1].min() - h
    nx = int((P[:, 0].max() - x0) / h) + 2
    ny = int((P[:, 1].max() - y0) / h) + 2
    cid = np.empty(n, dtype=np.int64)
    for m in range(n):
        cid[m] = int((P[m, 0] - x0) / h) * ny + int((P[m, 1] - y0) / h)
    order = np.argsort(cid, kind="mergesort")
    counts = np.zeros(nx * ny + 1, dtype=np.int64)
    for m in range(n):
        counts[cid[m] + 1] += 1
    cell_start = np.cumsum(counts)
    origin = np.array([x0, y0])
    return origin, nx, ny, cell_start, order


@nb.njit(cache=True)
def _seg_dist2(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    L = ex * ex + ey * ey
    t = 0.0
    if L > 0.0:
        t = ((px - ax) * ex + (py - ay) * ey) / L
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    return dx * dx + dy * dy


@nb.njit(cache=True)
def grid_polyline_dist(P, origin, nx, ny, cell_start, order, h, q, reach, lo, hi):
    """Distance from ``q`` to the polyline segments ``[P[m], P[m+1]]``, ``lo <= m < hi``.

    Only segments with an endpoint within ``reach`` cells of ``q`` are
    examined, so the result is exact whenever it is below ``reach * h``
    minus the longest segment; otherwise ``inf`` may be returned.
    """
    ix = int((q[0] - origin[0]) / h)
    iy = int((q[1] - origin[1]) / h)
    best = np.inf
    for cx in range(ix - reach, ix + reach + 1):
        if cx < 0 or cx >= nx:
            continue
        for cy in range(iy - reach, iy + reach + 1):
            if cy < 0 or cy >= ny:
                continue
            c = cx * ny + cy
            for j in range(cell_start[c], cell_start[c + 1]):
                m = order[j]
                if m > hi:
                    break
                # point m is an endpoint of segments m-1 and m
                for s in (m - 1, m):
                    if s < lo or s >= hi:
                        continue
                    d2 = _seg_dist2(q[0], q[1], P[s, 0], P[s, 1], P[s + 1, 0], P[s + 1, 1])
                    if d2 < best:
                        best = d2
    return math.sqrt(best)


@nb.njit(cache=True)
def detect_U(X, U, spc1, radius, cos_thr, origin, nx, ny, cell_start, order, h):
    """First sample ``n`` (cell ``k >= 1``) with an earlier sample ``m <= (k-1) spc1``
    such that ``|X_n - X_m| < radius`` and ``|U_n . U_m| >= cos_thr``.

    ``U`` holds the unit momentum directions.

    Returns ``(n, m)`` or ``(-1, -1)``.
    """
    N = X.shape[0]
    reach = int(math.ceil(radius / h))
    r2 = radius * radius
    for n in range(spc1, N):
        lim = (n // spc1 - 1) * spc1
        ix = int((X[n, 0] - origin[0]) / h)
        iy = int((X[n, 1] - origin[1]) / h)
        best_m = -1
        for cx in range(ix - reach, ix + reach + 1):
            if cx < 0 or cx >= nx:
                continue
            for cy in range(iy - reach, iy + reach + 1):
                if cy < 0 or cy >= ny:
                    continue
                c = cx * ny + cy
                for j in range(cell_start[c], cell_start[c + 1]):
                    m = order[j]
                    if m > lim:
                        break
                    if best_m >= 0 and m >= best_m:
                        break
                    dx = X[n, 0] - X[m, 0]
                    dy = X[n, 1] - X[m, 1]
                    if dx * dx + dy * dy >= r2:
                        continue
                    cth = abs(U[n, 0] * U[m, 0] + U[n, 1] * U[m, 1])
                    if cth >= cos_thr:
                        best_m = m
                        break
        if best_m >= 0:
            return n, best_m
    return -1, -1
