"""Compiled kernels shared by the field, dynamics and cut-off modules.

Every field realization is flattened into a fixed tuple of arrays so that a
single compiled signature serves both field kinds::

    fa = (iparams, fparams, modes, centers, cell_start)

    iparams    int64[4]   kind, nx, ny, power
    fparams    float64[10] x0, y0, cell, xmin, xmax, ymin, ymax, amp, radius, mean
    modes      float64[n, 4] kx, ky, amplitude, phase      (spectral)
    centers    float64[m, 2] Poisson centers sorted by cell (bump)
    cell_start int64[nx*ny + 1] CSR offsets into ``centers`` (bump)
"""

import math

import numba as nb
import numpy as np

SPECTRAL = 0
BUMP = 1

OK = 0
OUT_OF_DOMAIN = 1

TWO_PI = 2.0 * math.pi


@nb.njit(cache=True)
def _spectral_jet(modes, x, y, order):
    h = 0.0
    gx = 0.0
    gy = 0.0
    hxx = 0.0
    hxy = 0.0
    hyy = 0.0
    for j in range(modes.shape[0]):
        kx = modes[j, 0]
        ky = modes[j, 1]
        a = modes[j, 2]
        arg = kx * x + ky * y + modes[j, 3]
        if order == 1:
            s = math.sin(arg)
            gx -= a * kx * s
            gy -= a * ky * s
        else:
            c = math.cos(arg)
            h += a * c
            if order >= 2:
                s = math.sin(arg)
                gx -= a * kx * s
                gy -= a * ky * s
                if order == 2:
                    hxx -= a * kx * kx * c
                    hxy -= a * kx * ky * c
                    hyy -= a * ky * ky * c
    return h, gx, gy, hxx, hxy, hyy


@nb.njit(cache=True)
def _bump_jet(ip, fp, centers, cell_start, x, y, order):
    if x < fp[3] or x > fp[4] or y < fp[5] or y > fp[6]:
        return OUT_OF_DOMAIN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    nx = ip[1]
    ny = ip[2]
    p = ip[3]
    cell = fp[2]
    amp = fp[7]
    rad = fp[8]
    inv_r2 = 1.0 / (rad * rad)
    ix = int(math.floor((x - fp[0]) / cell))
    iy = int(math.floor((y - fp[1]) / cell))
    h = -fp[9]
    gx = 0.0
    gy = 0.0
    hxx = 0.0
    hxy = 0.0
    hyy = 0.0
    for cx in range(ix - 1, ix + 2):
        if cx < 0 or cx >= nx:
            continue
        for cy in range(iy - 1, iy + 2):
            if cy < 0 or cy >= ny:
                continue
            c = cx * ny + cy
            for m in range(cell_start[c], cell_start[c + 1]):
                dx = x - centers[m, 0]
                dy = y - centers[m, 1]
                u = 1.0 - (dx * dx + dy * dy) * inv_r2
                if u <= 0.0:
                    continue
                up2 = u ** (p - 2)
                up1 = up2 * u
                h += amp * up1 * u
                if order >= 1:
                    g = -2.0 * amp * p * up1 * inv_r2
                    gx += g * dx
                    gy += g * dy
                    if order == 2:
                        q = 4.0 * amp * p * (p - 1) * up2 * inv_r2 * inv_r2
                        hxx += q * dx * dx + g
                        hxy += q * dx * dy
                        hyy += q * dy * dy + g
    return OK, h, gx, gy, hxx, hxy, hyy


@nb.njit(cache=True)
def field_jet(fa, x, y, order):
    """Return ``(status, H, Hx, Hy, Hxx, Hxy, Hyy)`` at one point.

    ``order`` 0 fills H only, 1 fills the gradient only (the integrator's hot
    path), 2 fills everything, 3 fills H and the gradient.
    """
    ip, fp, modes, centers, cell_start = fa
    if ip[0] == SPECTRAL:
        h, gx, gy, hxx, hxy, hyy = _spectral_jet(modes, x, y, order)
        return OK, h, gx, gy, hxx, hxy, hyy
    return _bump_jet(ip, fp, centers, cell_start, x, y, order)


@nb.njit(cache=True)
def batch_jet(fa, pts, order):
    n = pts.shape[0]
    out = np.zeros((n, 6))
    status = np.zeros(n, dtype=np.int64)
    for i in range(n):
        st, h, gx, gy, hxx, hxy, hyy = field_jet(fa, pts[i, 0], pts[i, 1], order)
        status[i] = st
        out[i, 0] = h
        out[i, 1] = gx
        out[i, 2] = gy
        out[i, 3] = hxx
        out[i, 4] = hxy
        out[i, 5] = hyy
    return out, status


@nb.njit(cache=True)
def wrap_angle(a):
    return (a + math.pi) % TWO_PI - math.pi


@nb.njit(cache=True)
def verlet(fa, x, y, vx, vy, coupling, dt, nsteps, stride, audit):
    """Velocity Verlet for ``x' = v, v' = -coupling * grad H(x)``.

    Samples every ``stride`` steps into ``out[:, (x, y, vx, vy, theta)]`` where
    theta is the velocity angle unwrapped at full step resolution.  Returns
    ``(out, status, steps_done, max_energy_dev, min_speed, max_speed)``; the
    energy deviation is only tracked when ``audit`` is set.
    """
    nout = nsteps // stride + 1
    out = np.empty((nout, 5))
    theta = math.atan2(vy, vx)
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = vx
    out[0, 3] = vy
    out[0, 4] = theta
    speed0 = math.sqrt(vx * vx + vy * vy)
    min_speed = speed0
    max_speed = speed0
    max_dev = 0.0
    st, h, gx, gy, _, _, _ = field_jet(fa, x, y, 3 if audit else 1)
    if st != OK:
        return out, st, 0, max_dev, min_speed, max_speed
    e0 = 0.5 * (vx * vx + vy * vy) + coupling * h
    half = 0.5 * dt * coupling
    j = 0
    for i in range(1, nsteps + 1):
        vx -= half * gx
        vy -= half * gy
        x += dt * vx
        y += dt * vy
        st, h, gx, gy, _, _, _ = field_jet(fa, x, y, 3 if audit else 1)
        if st != OK:
            return out[: j + 1], st, i - 1, max_dev, min_speed, max_speed
        vx -= half * gx
        vy -= half * gy
        ang = math.atan2(vy, vx)
        theta += wrap_angle(ang - theta)
        sp = math.sqrt(vx * vx + vy * vy)
        if sp < min_speed:
            min_speed = sp
        if sp > max_speed:
            max_speed = sp
        if audit:
            dev = abs(0.5 * (vx * vx + vy * vy) + coupling * h - e0)
            if dev > max_dev:
                max_dev = dev
        if i % stride == 0:
            j += 1
            out[j, 0] = x
            out[j, 1] = y
            out[j, 2] = vx
            out[j, 3] = vy
            out[j, 4] = theta
    return out, OK, nsteps, max_dev, min_speed, max_speed
