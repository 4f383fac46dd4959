"""Limit diffusion coefficients on the momentum circle.

For a correlation model ``R`` and a momentum ``v`` the limit generator has

    D_mn(v) = -1/(2|v|) int_{-inf}^{inf} d2R/dy_n dy_m (s v^) ds
    E_m(v)  = -1/|v|^2  int_0^inf s d(Lap R)/dy_m (s v^) ds

and the angle of ``v`` diffuses with generator ``a d^2/dtheta^2`` where
``a(v) = v_perp^T D(v) v_perp / |v|^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

__all__ = [
    "Quadrature",
    "QuadratureError",
    "DiffusionCoefficients",
    "DirectionalCoefficient",
    "diffusion_matrix",
    "drift_vector",
    "angular_coefficient",
    "verify_divergence_identity",
    "coefficients",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Quadrature:
    """Integration controls.

    ``cutoff`` is the half-length ``S`` of the integration line; by default
    the model's support, or 12 decay lengths.  ``tail_tol`` bounds the
    integrand magnitude allowed at ``|s| = S``.
    """

    cutoff: float | None = None
    epsabs: float = 1e-13
    epsrel: float = 1e-12
    tail_tol: float = 1e-9

    def length(self, model) -> float:
        if self.cutoff is not None:
            return float(self.cutoff)
        support = getattr(model, "support", None)
        if support is not None:
            return max(float(support), 1e-12)
        return 12.0 * float(model.decay_length)


class DiffusionCoefficients(NamedTuple):
    v: np.ndarray
    D: np.ndarray
    E: np.ndarray
    a: float


class DirectionalCoefficient(NamedTuple):
    """Angle-resolved ``a(v)`` for anisotropic media."""

    angles: np.ndarray
    a: np.ndarray


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        raise ValueError("momentum must be nonzero")
    return v, n, v / n


def _check_tail(val, S, tol):
    if np.max(np.abs(val)) > tol:
        raise QuadratureError(
            f"integrand still {np.max(np.abs(val)):.3g} at cutoff S={S:.3g}; increase the cutoff"
        )


def _hessian_line_integral(model, vhat, quad: Quadrature):
    S = quad.length(model)
    ends = np.array([S * vhat, -S * vhat])
    _check_tail(model.evaluate(ends).hess, S, quad.tail_tol)

    def f(s):
        h = model.evaluate(s * vhat).hess[0]
        return np.array([h[0, 0], h[0, 1], h[1, 1]])

    val, err = integrate.quad_vec(f, -S, S, epsabs=quad.epsabs, epsrel=quad.epsrel,
                                  points=(0.0,))
    if not np.isfinite(val).all():
        raise QuadratureError("non-finite Hessian line integral")
    return val


def diffusion_matrix(model, v, quadrature: Quadrature | None = None) -> np.ndarray:
    """Momentum diffusion matrix ``D(v)``."""
    quad = quadrature or Quadrature()
    v, speed, vhat = _unit(v)
    h11, h12, h22 = _hessian_line_integral(model, vhat, quad)
    return -np.array([[h11, h12], [h12, h22]]) / (2.0 * speed)


def drift_vector(model, v, quadrature: Quadrature | None = None) -> np.ndarray:
    """Drift ``E(v)`` from the gradient of the Laplacian of ``R`` along the ray."""
    quad = quadrature or Quadrature()
    v, speed, vhat = _unit(v)
    S = quad.length(model)
    _check_tail(S * model.evaluate(S * vhat).grad_lap, S, quad.tail_tol)

    def f(s):
        return s * model.evaluate(s * vhat).grad_lap[0]

    val, err = integrate.quad_vec(f, 0.0, S, epsabs=quad.epsabs, epsrel=quad.epsrel)
    if not np.isfinite(val).all():
        raise QuadratureError("non-finite drift integral")
    return -val / speed**2


def _perp_coefficient(model, angle, speed, quad):
    vhat = np.array([math.cos(angle), math.sin(angle)])
    D = diffusion_matrix(model, speed * vhat, quad)
    perp = np.array([-vhat[1], vhat[0]])
    return float(perp @ D @ perp) / speed**2


def angular_coefficient(model, speed: float, quadrature: Quadrature | None = None,
                        n_directions: int = 16, rtol: float = 1e-8):
    """Angular diffusion rate ``a(v)`` on the circle of radius ``speed``.

    Returns a float when the rate does not depend on the direction (checked on
    ``n_directions`` angles), otherwise a :class:`DirectionalCoefficient`.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    quad = quadrature or Quadrature()
    if getattr(model, "isotropic", False):
        return max(_perp_coefficient(model, 0.0, speed, quad), 0.0)
    angles = np.linspace(0.0, math.pi, n_directions, endpoint=False)
    vals = np.array([_perp_coefficient(model, t, speed, quad) for t in angles])
    if np.ptp(vals) <= rtol * max(abs(vals).max(), 1e-300):
        return max(float(vals.mean()), 0.0)
    return DirectionalCoefficient(angles, vals)


def verify_divergence_identity(model, v, fd_step: float | None = None,
                               quadrature: Quadrature | None = None) -> np.ndarray:
    """Residual ``|E_m - sum_n dD_mn/dv_n|`` with central differences.

    The default step is ``1e-4 |v|``.  A half-step estimate is computed as a
    Richardson check; a warning is issued when the two disagree by more than
    the residual itself suggests is meaningful.
    """
    quad = quadrature or Quadrature()
    v, speed, _ = _unit(v)
    h = fd_step if fd_step is not None else 1e-4 * speed
    if h <= 0 or h >= 0.5 * speed:
        raise ValueError("fd_step must be small and positive")

    def divergence(step):
        div = np.zeros(2)
        for n in range(2):
            e = np.zeros(2)
            e[n] = step
            dD = (diffusion_matrix(model, v + e, quad) - diffusion_matrix(model, v - e, quad))
            div += dD[:, n] / (2 * step)
        return div

    div_h = divergence(h)
    div_h2 = divergence(h / 2)
    E = drift_vector(model, v, quad)
    scale = max(1.0, float(np.abs(E).max()))
    if np.abs(div_h - div_h2).max() > 1e-3 * scale:
        warnings.warn("divergence finite differences not converged at this step", stacklevel=2)
    return np.abs(E - div_h)


def coefficients(model, v, quadrature: Quadrature | None = None) -> DiffusionCoefficients:
    """Bundle ``D(v)``, ``E(v)`` and the transverse rate ``a`` at one momentum."""
    quad = quadrature or Quadrature()
    v, speed, vhat = _unit(v)
    D = diffusion_matrix(model, v, quad)
    E = drift_vector(model, v, quad)
    perp = np.array([-vhat[1], vhat[0]])
    a = max(float(perp @ D @ perp) / speed**2, 0.0)
    return DiffusionCoefficients(v, D, E, a)
