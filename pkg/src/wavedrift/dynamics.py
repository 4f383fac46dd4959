"""Particle dynamics in a frozen random potential.

The micro system is ``z' = w, w' = -sqrt(delta) grad H(z)``.  With
``X(t) = delta z(t / delta)`` and ``V(t) = w(t / delta)`` this is the weakly
coupled flow on the macro scale, whose momentum converges to a Brownian
motion on the circle ``|v| = |v0|`` as ``delta -> 0``.

The integrator is velocity Verlet (compiled in :mod:`wavedrift._jit`).  The
reference limit process is simulated by :func:`simulate_circle_diffusion`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import _jit
from .field import FieldRealization

__all__ = [
    "Trajectory",
    "EnergyAudit",
    "FieldDomainError",
    "speed_band_constant",
    "geometric_dt",
    "select_dt",
    "integrate_micro",
    "integrate_rescaled",
    "rescale_trajectory",
    "simulate_circle_diffusion",
    "energy_audit",
]

DT_FACTOR = 0.05


class FieldDomainError(RuntimeError):
    """The path left the domain on which the field is defined.

    ``partial`` holds the trajectory up to the last stored sample.
    """

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass
class Trajectory:
    """Time-sampled path in the ``"micro"`` or ``"macro"`` frame.

    Attributes
    ----------
    t, x, v : ndarray
        Sample times ``(n,)``, positions and momenta ``(n, 2)``.
    theta : ndarray
        Momentum angle, unwrapped continuously at integrator resolution.
    delta : float
        Coupling parameter; the micro force is ``-sqrt(delta) grad H``.
    dt : float
        Micro integrator step.
    meta : dict
        Integrator diagnostics (``max_energy_dev``, ``min_speed``, ...).
    """

    frame: str
    delta: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    dt: float
    seed: object = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.frame not in ("micro", "macro"):
            raise ValueError("frame must be 'micro' or 'macro'")

    def __len__(self):
        return len(self.t)

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.v[:, 0], self.v[:, 1])

    @property
    def direction(self) -> np.ndarray:
        return self.v / self.speed[:, None]

    def to_csv(self, path) -> None:
        """Write columns ``t, x1, x2, v1, v2``."""
        data = np.column_stack([self.t, self.x, self.v])
        np.savetxt(path, data, delimiter=",", header="t,x1,x2,v1,v2", comments="",
                   fmt="%.17g")


@dataclass(frozen=True)
class EnergyAudit:
    """Total energy along a trajectory.

    ``max_drift`` is the largest deviation from the initial value, over the
    stored samples and, when the integrator tracked it, over every step.
    """

    t: np.ndarray
    energy: np.ndarray
    max_drift: float
    tolerance: float
    valid: bool

    def to_dict(self, speed_band_violations: int = 0) -> dict:
        return {"max_energy_drift": float(self.max_drift),
                "speed_band_violations": int(speed_band_violations)}


def speed_band_constant(M: float, D_tilde: float, delta_star: float = 0.1,
                        strict: bool = False) -> float:
    """Speed band ``M_*`` for initial momenta with ``1/M <= |v0| <= M``.

    ``M_* = max[(M^2/2 + 2 sqrt(delta_*) D)^(1/2), (1/(2M^2) - 2 sqrt(delta_*) D)^(-1/2)]``.
    When ``delta_*`` is too large for the second bracket to be positive the
    lower speed bound is void; ``strict`` raises, otherwise the first entry
    is used with a warning.
    """
    if M <= 0 or D_tilde < 0 or delta_star <= 0:
        raise ValueError("M, D_tilde and delta_star must be positive")
    slack = 2.0 * math.sqrt(delta_star) * D_tilde
    first = math.sqrt(M * M / 2.0 + slack)
    low = 1.0 / (2.0 * M * M) - slack
    if low <= 0:
        msg = (f"1/(2M^2) - 2 sqrt(delta_*) D_tilde = {low:.3g} <= 0: delta_*={delta_star} "
               "is not small enough for this M and D_tilde")
        if strict:
            raise ValueError(msg)
        warnings.warn(msg + "; using the upper entry only", stacklevel=2)
        return first
    return max(first, low ** -0.5)


def geometric_dt(field: FieldRealization, speed: float, delta: float = 1.0,
                 factor: float = DT_FACTOR, x0=None) -> float:
    """Step resolving the correlation length at the largest reachable speed.

    By energy conservation ``|v|^2 <= |v0|^2 + 2 sqrt(delta) (H(x0) + D0)``;
    without ``x0`` the worst case ``H(x0) = D0`` is used.
    """
    D0 = field.bounds[0]
    h0 = D0 if x0 is None else min(float(field.value(x0)[0]), D0)
    vmax = math.sqrt(speed * speed + 2.0 * math.sqrt(delta) * max(h0 + D0, 0.0))
    return factor * field.correlation_length / vmax


def _check_dt(field, x0, v0, dt, delta):
    speed = math.hypot(*v0)
    limit = geometric_dt(field, speed, delta, x0=x0)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:.4g} exceeds {DT_FACTOR} correlation lengths at the "
                         f"maximal speed (limit {limit:.4g})")


def _as_state(x0, v0):
    x0 = np.asarray(x0, dtype=float).reshape(2)
    v0 = np.asarray(v0, dtype=float).reshape(2)
    if not np.all(np.isfinite(x0)) or not np.all(np.isfinite(v0)):
        raise ValueError("initial state must be finite")
    if v0[0] == 0.0 and v0[1] == 0.0:
        raise ValueError("initial momentum must be nonzero")
    return x0, v0


def integrate_micro(field: FieldRealization, x0, v0, T: float, dt: float, *,
                    delta: float = 1.0, stride: int = 1, audit: bool = True,
                    check_dt: bool = True, seed=None) -> Trajectory:
    """Velocity Verlet for ``z' = w, w' = -sqrt(delta) grad H(z)`` on ``[0, T]``.

    ``T / dt`` is rounded to the nearest whole number of steps and every
    ``stride``-th state is stored.  Raises :class:`FieldDomainError` when a bump
    field is left.  With ``audit`` the energy is tracked at every step; that
    compiled path evaluates the gradient with differently vectorized
    trigonometry, so audited and unaudited runs agree only to rounding.
    """
    x0, v0 = _as_state(x0, v0)
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    if check_dt:
        _check_dt(field, x0, v0, dt, delta)
    nsteps = int(round(T / dt))
    stride = max(1, int(stride))
    if nsteps % stride:
        nsteps += stride - nsteps % stride
    coupling = math.sqrt(delta)
    out, status, done, dev, vmin, vmax = _jit.verlet(
        field._fa, x0[0], x0[1], v0[0], v0[1], coupling, float(dt), nsteps, stride, audit)
    t = np.arange(len(out)) * (stride * dt)
    traj = Trajectory("micro", float(delta), t, out[:, 0:2].copy(), out[:, 2:4].copy(),
                      out[:, 4].copy(), float(dt), seed,
                      {"steps": int(done), "stride": stride, "min_speed": vmin,
                       "max_speed": vmax,
                       "max_energy_dev": float(dev) if audit else None})
    if status != _jit.OK:
        raise FieldDomainError(f"path left the field domain after {done} steps", traj)
    return traj


def rescale_trajectory(traj: Trajectory, delta: float) -> Trajectory:
    """Map a micro trajectory to the macro frame: ``t -> delta t, z -> delta z``."""
    if traj.frame != "micro":
        raise ValueError("expected a micro-frame trajectory")
    if traj.delta != delta:
        raise ValueError(f"trajectory was integrated with delta={traj.delta}, not {delta}")
    return replace(traj, frame="macro", t=traj.t * delta, x=traj.x * delta,
                   v=traj.v.copy(), theta=traj.theta.copy(), meta=dict(traj.meta))


def integrate_rescaled(field: FieldRealization, delta: float, x0, v0, T_macro: float,
                       dt_micro: float | None = None, *, output_step: float | None = None,
                       M: float | None = None, delta_star: float = 0.1,
                       audit: bool = True, seed=None, check_dt: bool = True) -> Trajectory:
    """Weakly coupled flow on the macro scale ``[0, T_macro]``.

    Integrates the micro system for ``T_macro / delta`` from ``(x0 / delta, v0)``
    and rescales.  Samples are stored every ``output_step`` macro time units
    (default: every step); the micro step is then reduced to the nearest
    divisor of ``output_step / delta`` so samples fall exactly on the grid.  When ``M`` is given the momentum must start in
    ``1/M <= |v0| <= M`` and leaving ``((2M_*)^-1, 2M_*)`` is flagged in
    ``meta["speed_band_violation"]``.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    x0, v0 = _as_state(x0, v0)
    speed = math.hypot(*v0)
    if dt_micro is None:
        dt_micro = geometric_dt(field, speed, delta, x0=x0 / delta)
    stride = 1
    if output_step is not None:
        n_out = T_macro / output_step
        if abs(n_out - round(n_out)) > 1e-9 * max(1.0, n_out):
            raise ValueError("T_macro must be a whole multiple of output_step")
        stride = max(1, math.ceil(output_step / (delta * dt_micro) - 1e-9))
        dt_micro = output_step / delta / stride
    micro = integrate_micro(field, x0 / delta, v0, T_macro / delta, dt_micro, delta=delta,
                            stride=stride, audit=audit, seed=seed, check_dt=check_dt)
    traj = rescale_trajectory(micro, delta)
    if M is not None:
        if not 1.0 / M <= speed <= M:
            raise ValueError(f"|v0|={speed:.4g} is outside the shell [1/M, M] for M={M}")
        Ms = speed_band_constant(M, field.D_tilde, delta_star)
        lo, hi = 1.0 / (2 * Ms), 2 * Ms
        traj.meta["M_star"] = Ms
        traj.meta["speed_band_violation"] = bool(
            traj.meta["min_speed"] < lo or traj.meta["max_speed"] > hi)
    return traj


def select_dt(field: FieldRealization, delta: float, v0, tolerance: float, *,
              probe_T_macro: float = 0.1, max_halvings: int = 12, safety: float = 0.25,
              x0=(0.0, 0.0), dt0: float | None = None) -> tuple[float, list]:
    """Step-halving audit: largest ``dt = geometric_dt / 2^j`` meeting ``tolerance``.

    A probe trajectory of macro length ``probe_T_macro`` is integrated for each
    candidate; the step is accepted when its energy deviation is below
    ``safety * tolerance``.  Returns the step and the list of
    ``(dt, deviation)`` pairs tried.  ``dt0`` replaces the geometric starting
    step.
    """
    x0, v0 = _as_state(x0, v0)
    dt = geometric_dt(field, math.hypot(*v0), delta, x0=x0 / delta) if dt0 is None else dt0
    history = []
    for _ in range(max_halvings + 1):
        n = max(1, int(round(probe_T_macro / (delta * dt))))
        tr = integrate_micro(field, x0 / delta, v0, n * dt, dt, delta=delta, stride=n,
                             check_dt=False)
        dev = tr.meta["max_energy_dev"]
        history.append((dt, dev))
        if dev <= safety * tolerance:
            return dt, history
        dt /= 2
    raise RuntimeError(f"energy tolerance {tolerance:.3g} not reached after "
                       f"{max_halvings} halvings (last deviation {history[-1][1]:.3g})")


def energy_audit(field: FieldRealization, traj: Trajectory, delta: float,
                 tolerance: float | None = None) -> EnergyAudit:
    """Total energy ``|V|^2 / 2 + sqrt(delta) H`` along ``traj``.

    Macro trajectories are evaluated at ``X / delta``.  The default tolerance
    is ``1e-6 (1 + |v0|^2)``.
    """
    if traj.delta != delta:
        raise ValueError(f"trajectory was integrated with delta={traj.delta}, not {delta}")
    pts = traj.x if traj.frame == "micro" else traj.x / delta
    H = field.value(pts)
    e = 0.5 * (traj.v ** 2).sum(axis=1) + math.sqrt(delta) * H
    drift = float(np.abs(e - e[0]).max()) if len(e) else 0.0
    step_dev = traj.meta.get("max_energy_dev")
    if step_dev is not None:
        drift = max(drift, float(step_dev))
    if tolerance is None:
        tolerance = 1e-6 * (1.0 + float((traj.v[0] ** 2).sum()))
    return EnergyAudit(traj.t, e, drift, float(tolerance), drift <= tolerance)


def simulate_circle_diffusion(a: float, theta0: float, speed: float, T: float, dt: float,
                              seed=None, *, x0=(0.0, 0.0), n_paths: int | None = None,
                              stride: int = 1):
    """Euler-Maruyama for ``d theta = sqrt(2a) dW`` with ``V = speed (cos, sin)(theta)``.

    ``X`` is the trapezoidal integral of ``V``.  Returns one macro
    :class:`Trajectory`, or a list of ``n_paths`` independent ones drawn from a
    single generator.
    """
    if a < 0 or speed <= 0 or dt <= 0 or T < 0:
        raise ValueError("need a >= 0, speed > 0, dt > 0, T >= 0")
    rng = np.random.default_rng(seed)
    nsteps = int(round(T / dt))
    stride = max(1, int(stride))
    single = n_paths is None
    m = 1 if single else int(n_paths)
    dW = rng.standard_normal((m, nsteps)) * math.sqrt(2.0 * a * dt)
    theta = np.concatenate([np.full((m, 1), float(theta0)), theta0 + np.cumsum(dW, axis=1)],
                           axis=1)
    v = speed * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    dx = 0.5 * dt * (v[:, 1:] + v[:, :-1])
    x = np.concatenate([np.zeros((m, 1, 2)), np.cumsum(dx, axis=1)], axis=1)
    x += np.asarray(x0, dtype=float)
    t = np.arange(nsteps + 1) * dt
    sl = slice(None, None, stride)
    trajs = [Trajectory("macro", 0.0, t[sl], x[i, sl], v[i, sl], theta[i, sl], dt, seed,
                        {"a": a}) for i in range(m)]
    return trajs[0] if single else trajs
