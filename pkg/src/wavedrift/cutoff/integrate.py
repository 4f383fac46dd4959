"""The modified (cut-off) dynamics."""

from __future__ import annotations

import math

import numpy as np

from .. import _jit
from ..dynamics import FieldDomainError, Trajectory, _as_state, geometric_dt
from ..field import FieldRealization
from . import _kernels as K
from .history import PathHistory
from .params import CutoffParams
from .stopping import StopReport, detect_stopping_times

__all__ = ["integrate_modified", "mesh_aligned_step"]


def mesh_aligned_step(params: CutoffParams, delta: float, dt_micro_target: float) -> tuple:
    """Largest macro step ``1/(lcm(p1, p2, p3) m)`` not above ``delta * dt_micro_target``.

    Returns ``(dt_macro, steps_per_unit)`` so that every mesh time is a step time.
    """
    L = params.lcm
    m = max(1, math.ceil(1.0 / (L * delta * dt_micro_target) - 1e-9))
    return 1.0 / (L * m), L * m


def integrate_modified(field: FieldRealization, delta: float, params: CutoffParams, x0, v0,
                       T: float, dt: float | None = None, *, seed=None,
                       check_speed: bool = True) -> tuple:
    """Cut-off dynamics on the macro interval ``[0, T]``.

    Velocity Verlet in the micro frame with force ``-sqrt(delta) Theta grad H``,
    where the cut-off ``Theta`` is evaluated from the path history recorded
    so far.  ``dt`` is a target micro step (default: the geometric step),
    reduced so that all mesh times fall on steps.  ``x0`` is a macro position.

    Returns
    -------
    traj : Trajectory
        Macro-frame path at every step.
    history : PathHistory
        Fine samples with the cut-off values used.
    report : StopReport
        Stopping times of the path.
    """
    if params.delta != delta:
        raise ValueError(f"params were derived for delta={params.delta}, not {delta}")
    x0, v0 = _as_state(x0, v0)
    speed = math.hypot(*v0)
    if check_speed and not 1.0 / params.M <= speed <= params.M:
        raise ValueError(f"|v0|={speed:.4g} is outside [1/M, M] for M={params.M}")
    if T <= 0:
        raise ValueError("T must be positive")
    if dt is None:
        dt = geometric_dt(field, speed, delta, x0=x0 / delta)
    dt_macro, per_unit = mesh_aligned_step(params, delta, dt)
    nsteps = int(round(T * per_unit))
    if abs(nsteps - T * per_unit) > 1e-6 * max(1.0, T * per_unit):
        raise ValueError(f"T={T} is not a multiple of the step 1/{per_unit}")
    dt_micro = dt_macro / delta
    spc = np.array([per_unit // params.mesh(i) for i in (1, 2, 3)], dtype=np.int64)
    Nf = np.array(params.N, dtype=float)
    out, status, done = K.modified_verlet(
        field._fa, x0[0] / delta, x0[1] / delta, v0[0], v0[1], float(delta), float(dt_micro),
        nsteps, spc, Nf, float(params.p2), int(params.p2 // params.p1), float(params.M_star))
    t = np.arange(len(out)) * dt_macro
    V = out[:, 2:4].copy()
    ang = np.unwrap(np.arctan2(V[:, 1], V[:, 0]))
    kick = dt_micro * math.sqrt(delta) * np.maximum(out[:, 4], out[:, 5]) * out[:, 6]
    meta = {"steps": int(done), "dt_macro": dt_macro, "mesh_steps": spc.tolist(),
            "theta_min": float(out[:, 4].min()), "kick_max": float(kick.max()),
            "frac_theta_zero": float(np.mean(out[:, 4] == 0.0))}
    traj = Trajectory("macro", float(delta), t, out[:, 0:2].copy(), V, ang, float(dt_micro),
                      seed, meta)
    if status != _jit.OK:
        raise FieldDomainError(f"path left the field domain after {done} steps", traj)
    history = PathHistory(t, traj.x, V, params, theta=out[:, 4].copy(),
                          theta_left=out[:, 5].copy(), grad_norm=out[:, 6].copy(),
                          dt_micro=float(dt_micro))
    history.kick_max = meta["kick_max"]
    report = detect_stopping_times(history)
    return traj, history, report
