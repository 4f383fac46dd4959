"""Stationary random potentials on the plane and their correlation functions.

Two realization schemes are provided:

* spectral fields, ``H(x) = sqrt(2 R(0) / n) * sum_j cos(k_j . x + phi_j)``
  with wave-vectors drawn from the normalized power spectrum.  The two-point
  function of the ensemble is known in closed form, which makes these the
  reference model for the limit coefficients.
* bump fields, ``H(x) = sum_j V(x - r_j) - lambda * int V`` over a Poisson
  point set.  They are bounded with finite-range dependence.

Realizations are immutable and evaluate ``H``, ``grad H`` and the Hessian
analytically through the compiled kernels in :mod:`wavedrift._jit`.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special

from . import _jit

__all__ = [
    "GaussianSpectralDensity",
    "GridSpectralDensity",
    "PolynomialBump",
    "SpectralFieldSpec",
    "BumpFieldSpec",
    "FieldRealization",
    "FieldJet",
    "CorrelationJet",
    "GaussianCorrelation",
    "ZeroCorrelation",
    "BumpCorrelation",
    "GridSpectralCorrelation",
    "EmpiricalCorrelation",
    "build_spectral_field",
    "build_bump_field",
    "eval_field",
    "model_correlation",
    "empirical_correlation",
]

_SIGMA_ENVELOPE = 6.0


# ---------------------------------------------------------------------------
# power spectra


@dataclass(frozen=True)
class GaussianSpectralDensity:
    """Centered Gaussian density of wave-vectors with covariance ``cov``.

    The ensemble two-point function is ``R(0) exp(-y^T cov y / 2)``.  A rank-one
    ``cov`` puts all spectral mass on a single line through the origin.
    """

    cov: np.ndarray = dc_field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-14:
            raise ValueError("covariance of the spectral density must be symmetric PSD")
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, length: float = 1.0) -> "GaussianSpectralDensity":
        return cls(np.eye(2) / length**2)

    @property
    def isotropic_scale(self) -> float | None:
        """Per-axis standard deviation when ``cov`` is a multiple of the identity."""
        c = self.cov
        if c[0, 1] == 0.0 and c[0, 0] == c[1, 1]:
            return math.sqrt(c[0, 0])
        return None

    def sample(self, rng: np.random.Generator, n: int, stratified: bool = False) -> np.ndarray:
        """Draw ``n`` wave-vectors.

        With ``stratified`` the directions are spread one per sector of width
        ``pi / n`` (uniform inside the sector) and the radii are Rayleigh.  Each
        sector is a half-plane direction class, so the ensemble spectrum is
        unchanged while the resonant directions of a single realization have no
        large gaps.  Only available for isotropic densities.
        """
        if stratified:
            s = self.isotropic_scale
            if s is None:
                raise ValueError("stratified angular sampling needs an isotropic density")
            r = s * np.sqrt(-2.0 * np.log1p(-rng.uniform(size=n)))
            ang = (np.arange(n) + rng.uniform(size=n)) * (math.pi / n)
            return np.column_stack([r * np.cos(ang), r * np.sin(ang)])
        w, q = np.linalg.eigh(self.cov)
        root = q * np.sqrt(np.clip(w, 0.0, None))
        return rng.standard_normal((n, 2)) @ root.T

    def second_moment(self) -> np.ndarray:
        return self.cov

    def satisfies_nd(self) -> bool:
        # a Gaussian measure charges every line through 0 iff it is non-singular
        return bool(np.linalg.eigvalsh(self.cov).min() > 1e-12 * max(1.0, np.trace(self.cov)))

    def correlation(self, variance: float) -> "GaussianCorrelation":
        return GaussianCorrelation(variance, self.cov)


class GridSpectralDensity:
    """Arbitrary even spectral density given as a callable ``f(kx, ky)``.

    The density is normalized and sampled on a Cartesian grid over
    ``[-k_max, k_max]^2``; ``k_max`` is doubled until the captured mass
    converges.  Densities whose mass keeps growing are rejected.
    """

    def __init__(self, density: Callable, k_max: float = 8.0, n_grid: int = 400,
                 max_doublings: int = 8, rtol: float = 1e-6):
        self.density = density
        prev = None
        for _ in range(max_doublings + 1):
            kx, ky, w, mass = self._grid(k_max, n_grid)
            if not np.isfinite(mass) or mass < 0:
                raise ValueError("spectral density is not finite and nonnegative on the grid")
            if prev is not None and mass > 0 and abs(mass - prev) <= rtol * mass:
                break
            prev = mass
            k_max *= 2.0
        else:
            raise ValueError(
                "spectral density is not normalizable: captured mass keeps growing "
                f"(mass {mass:.6g} at k_max={k_max / 2:.3g})"
            )
        if mass <= 0:
            raise ValueError("spectral density has zero total mass")
        probe = np.random.default_rng(0).uniform(-k_max / 4, k_max / 4, (64, 2))
        a = np.asarray(density(probe[:, 0], probe[:, 1]), dtype=float)
        b = np.asarray(density(-probe[:, 0], -probe[:, 1]), dtype=float)
        if not np.allclose(a, b, rtol=1e-9, atol=1e-300):
            raise ValueError("spectral density must be even: f(k) != f(-k)")
        self.k_max = k_max
        self.h = 2 * k_max / n_grid
        self.nodes = np.column_stack([kx, ky])
        self.weights = w / mass

    def _grid(self, k_max, n):
        h = 2 * k_max / n
        c = -k_max + h * (np.arange(n) + 0.5)
        kx, ky = np.meshgrid(c, c, indexing="ij")
        f = np.asarray(self.density(kx, ky), dtype=float)
        f = np.where(np.isfinite(f), f, np.inf)
        w = (f * h * h).ravel()
        return kx.ravel(), ky.ravel(), w, w.sum()

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        jitter = rng.uniform(-0.5, 0.5, (n, 2)) * self.h
        return self.nodes[idx] + jitter

    def second_moment(self) -> np.ndarray:
        k = self.nodes
        return np.einsum("n,ni,nj->ij", self.weights, k, k)

    def satisfies_nd(self, n_lines: int = 360) -> bool:
        peak = self.weights.max()
        r = np.linspace(self.k_max * 1e-3, self.k_max, 2000)
        for ang in np.linspace(0.0, math.pi, n_lines, endpoint=False):
            vals = np.asarray(self.density(r * math.cos(ang), r * math.sin(ang)), dtype=float)
            if vals.max() * self.h * self.h <= 1e-12 * peak:
                return False
        return True

    def correlation(self, variance: float) -> "GridSpectralCorrelation":
        return GridSpectralCorrelation(variance, self.nodes, self.weights)


# ---------------------------------------------------------------------------
# bump profile


@dataclass(frozen=True)
class PolynomialBump:
    """Radial bump ``V(x) = amplitude * (1 - |x|^2 / radius^2)^power`` on the disk.

    ``power >= 3`` keeps ``V`` and its first two derivatives continuous at the
    rim.
    """

    amplitude: float = 1.0
    radius: float = 1.0
    power: int = 4

    def __post_init__(self):
        if self.power < 3:
            raise ValueError("bump power must be >= 3 for a C^2 profile")
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")

    def integral(self) -> float:
        return math.pi * self.amplitude * self.radius**2 / (self.power + 1)

    def hankel(self, k):
        """2D Fourier transform of V as a function of ``|k|``."""
        k = np.asarray(k, dtype=float)
        n = self.power
        ka = k * self.radius
        small = ka < 1e-3
        safe = np.where(small, 1.0, ka)
        val = special.jv(n + 1, safe) / safe ** (n + 1)
        # J_{n+1}(z)/z^{n+1} -> 1/(2^{n+1} (n+1)!) as z -> 0
        lim = 1.0 / (2 ** (n + 1) * math.factorial(n + 1))
        val = np.where(small, lim * (1 - ka**2 / (4 * (n + 2))), val)
        return 2 * math.pi * self.amplitude * self.radius**2 * 2**n * math.factorial(n) * val

    def radial_derivatives(self, r):
        """``(V, V', V'')`` as functions of the radius."""
        r = np.asarray(r, dtype=float)
        a2 = self.radius**2
        u = np.clip(1.0 - r * r / a2, 0.0, None)
        p = self.power
        v = self.amplitude * u**p
        d1 = self.amplitude * p * u ** (p - 1) * (-2 * r / a2)
        d2 = self.amplitude * (p * (p - 1) * u ** (p - 2) * (4 * r * r / a2**2)
                               - p * u ** (p - 1) * 2 / a2)
        return v, d1, d2

    def sup_bounds(self) -> tuple[float, float, float]:
        """Sup over the disk of ``|V|``, max ``|dV/dx_i|`` and max ``|d2V/dx_i dx_j|``."""
        r = np.linspace(0.0, self.radius, 200001)
        v, d1, d2 = self.radial_derivatives(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            d1_over_r = np.where(r > 0, d1 / r, d2[0])
        hess = np.max([np.abs(d2).max(), np.abs(d1_over_r).max(),
                       0.5 * np.abs(d2 - d1_over_r).max()])
        # one-sided grid sup; pad by the grid spacing times the next derivative scale
        pad = 1e-9 * max(1.0, abs(self.amplitude))
        return float(np.abs(v).max() + pad), float(np.abs(d1).max() + pad), float(hess + pad)


# ---------------------------------------------------------------------------
# field specs and realizations


@dataclass(frozen=True)
class SpectralFieldSpec:
    """Spectral synthesis recipe.

    ``variance`` is ``R(0) = E[H^2]``; ``n_modes`` sets the accuracy of the
    randomized cosine representation.  ``angular_sampling`` is ``"iid"``
    (wave-vectors i.i.d. from the density) or ``"stratified"`` (isotropic
    Gaussian densities only, see :meth:`GaussianSpectralDensity.sample`).

    With i.i.d. directions a single realization only pushes particles whose
    direction is nearly orthogonal to one of its wave-vectors; random gaps
    between those directions slow the angular diffusion at small coupling
    unless ``n_modes`` is large.  Stratification removes the gaps.
    """

    spectral_density: GaussianSpectralDensity | GridSpectralDensity = dc_field(
        default_factory=GaussianSpectralDensity)
    n_modes: int = 256
    variance: float = 1.0
    angular_sampling: str = "iid"

    def __post_init__(self):
        if int(self.n_modes) < 1:
            raise ValueError("n_modes must be >= 1")
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")
        if self.angular_sampling not in ("iid", "stratified"):
            raise ValueError("angular_sampling must be 'iid' or 'stratified'")
        if self.angular_sampling == "stratified" and (
                not isinstance(self.spectral_density, GaussianSpectralDensity)
                or self.spectral_density.isotropic_scale is None):
            raise ValueError("stratified angular sampling needs an isotropic Gaussian density")

    def correlation(self):
        return self.spectral_density.correlation(self.variance)

    def correlation_length(self) -> float:
        lam = np.linalg.eigvalsh(self.spectral_density.second_moment()).max()
        return float(1.0 / math.sqrt(lam)) if lam > 0 else math.inf


@dataclass(frozen=True)
class BumpFieldSpec:
    profile: PolynomialBump = dc_field(default_factory=PolynomialBump)
    intensity: float = 1.0
    domain_padding: float | None = None

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("Poisson intensity must be nonnegative")
        if self.domain_padding is not None and self.domain_padding < self.profile.radius:
            raise ValueError("domain padding must be at least the bump support radius")

    @property
    def padding(self) -> float:
        return self.profile.radius if self.domain_padding is None else self.domain_padding

    def correlation(self):
        return BumpCorrelation(self.profile, self.intensity)

    def correlation_length(self) -> float:
        return self.profile.radius


class FieldJet(NamedTuple):
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


class FieldRealization:
    """One frozen sample of the random potential.

    Attributes
    ----------
    kind : {"spectral", "bump"}
    bounds : tuple of float
        ``(D0, D1, D2)``: sup bounds of ``|H|``, of the gradient components and
        of the Hessian entries.  Exact for bump fields; for spectral fields the
        6-sigma envelope, capped by the deterministic mode-sum bound.
    bounds_kind : {"exact", "high-probability"}
    nd_ok : bool
        Whether the power spectrum charges every line through the origin.
    """

    def __init__(self, kind, fa, bounds, bounds_kind, correlation_length, domain=None,
                 nd_ok=True, seed=None, spec=None):
        for arr in fa:
            arr.setflags(write=False)
        self.kind = kind
        self._fa = fa
        self.bounds = tuple(float(b) for b in bounds)
        self.bounds_kind = bounds_kind
        self.correlation_length = float(correlation_length)
        self.domain = domain
        self.nd_ok = nd_ok
        self.seed = seed
        self.spec = spec

    @property
    def D_tilde(self) -> float:
        return sum(self.bounds)

    @property
    def modes(self) -> np.ndarray:
        return self._fa[2]

    @property
    def centers(self) -> np.ndarray:
        return self._fa[3]

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.domain is None:
            return np.ones(len(pts), dtype=bool)
        x0, x1, y0, y1 = self.domain
        return (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)

    def jet(self, pts, order: int = 2) -> FieldJet:
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(pts, dtype=float)))
        out, status = _jit.batch_jet(self._fa, pts, order)
        if status.any():
            bad = pts[np.flatnonzero(status)[0]]
            raise ValueError(f"point {tuple(bad)} lies outside the field domain {self.domain}")
        hess = np.empty((len(pts), 2, 2))
        hess[:, 0, 0] = out[:, 3]
        hess[:, 0, 1] = hess[:, 1, 0] = out[:, 4]
        hess[:, 1, 1] = out[:, 5]
        return FieldJet(out[:, 0], out[:, 1:3].copy(), hess)

    def value(self, pts) -> np.ndarray:
        return self.jet(pts, order=0).value

    def gradient(self, pts) -> np.ndarray:
        return self.jet(pts, order=1).grad

    def export_csv(self, path) -> None:
        """Write the mode table (kx,ky,amp,phase) or the center table (cx,cy)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.kind == "spectral":
                w.writerow(["kx", "ky", "amp", "phase"])
                rows = self.modes
            else:
                w.writerow(["cx", "cy"])
                rows = self.centers
            for row in rows:
                w.writerow([repr(float(v)) for v in row])


def _empty_bump_arrays():
    return np.zeros((0, 2)), np.zeros(1, dtype=np.int64)


def build_spectral_field(spec: SpectralFieldSpec, seed) -> FieldRealization:
    """Sample a spectral field; deterministic in ``seed``.

    ``seed`` may be an int, a sequence of ints or a ``numpy.random.SeedSequence``.
    """
    rng = np.random.default_rng(seed)
    n = int(spec.n_modes)
    if spec.angular_sampling == "stratified":
        k = spec.spectral_density.sample(rng, n, stratified=True)
    else:
        k = spec.spectral_density.sample(rng, n)
    k = np.asarray(k, dtype=float)
    phase = rng.uniform(0.0, 2 * math.pi, n)
    amp = np.full(n, math.sqrt(2.0 * spec.variance / n))
    modes = np.ascontiguousarray(np.column_stack([k, amp, phase]))
    ip = np.array([_jit.SPECTRAL, 0, 0, 0], dtype=np.int64)
    fp = np.zeros(10)
    centers, cell_start = _empty_bump_arrays()
    fa = (ip, fp, modes, centers, cell_start)

    a2 = amp**2 / 2
    sig0 = math.sqrt(a2.sum())
    sig1 = math.sqrt(max((a2 * k[:, 0] ** 2).sum(), (a2 * k[:, 1] ** 2).sum()))
    sig2 = math.sqrt(max((a2 * k[:, 0] ** 4).sum(), (a2 * k[:, 1] ** 4).sum(),
                         (a2 * (k[:, 0] * k[:, 1]) ** 2).sum()))
    hard0 = amp.sum()
    hard1 = max((amp * np.abs(k[:, 0])).sum(), (amp * np.abs(k[:, 1])).sum())
    hard2 = max((amp * k[:, 0] ** 2).sum(), (amp * k[:, 1] ** 2).sum(),
                (amp * np.abs(k[:, 0] * k[:, 1])).sum())
    bounds = (min(_SIGMA_ENVELOPE * sig0, hard0), min(_SIGMA_ENVELOPE * sig1, hard1),
              min(_SIGMA_ENVELOPE * sig2, hard2))
    nd_ok = spec.spectral_density.satisfies_nd()
    if not nd_ok:
        warnings.warn("power spectrum vanishes identically on a line through the origin: "
                      "non-degeneracy (ND) is violated", stacklevel=2)
    return FieldRealization("spectral", fa, bounds, "high-probability",
                            spec.correlation_length(), nd_ok=nd_ok, seed=seed, spec=spec)


def _zigzag(i: int) -> int:
    return 2 * i if i >= 0 else -2 * i - 1


def _seed_entropy(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy, tuple(seed.spawn_key)
    if isinstance(seed, (list, tuple)):
        return list(seed), ()
    return int(seed), ()


def build_bump_field(spec: BumpFieldSpec, window, seed, tile: float | None = None) -> FieldRealization:
    """Sample a Poisson bump field over ``window = (xmin, xmax, ymin, ymax)``.

    The plane is tiled into squares of side ``tile`` and each tile's points are
    drawn from its own seed stream, so overlapping windows built with the same
    seed see the same point set while disjoint windows are independent.
    Evaluation is allowed on ``window``; centers are drawn on the window
    enlarged by ``spec.padding`` so every admissible point sees all bumps that
    reach it.
    """
    x0, x1, y0, y1 = map(float, window)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("window must be a nonempty rectangle")
    prof = spec.profile
    pad = spec.padding
    px0, px1, py0, py1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    tile = float(tile or 16.0 * prof.radius)
    entropy, key = _seed_entropy(seed)
    pts = []
    if spec.intensity > 0:
        for ti in range(math.floor(px0 / tile), math.floor(px1 / tile) + 1):
            for tj in range(math.floor(py0 / tile), math.floor(py1 / tile) + 1):
                ss = np.random.SeedSequence(entropy, spawn_key=key + (_zigzag(ti), _zigzag(tj)))
                rng = np.random.default_rng(ss)
                m = rng.poisson(spec.intensity * tile * tile)
                p = rng.uniform(0.0, tile, (m, 2)) + (ti * tile, tj * tile)
                keep = (p[:, 0] >= px0) & (p[:, 0] < px1) & (p[:, 1] >= py0) & (p[:, 1] < py1)
                pts.append(p[keep])
    centers = np.concatenate(pts) if pts else np.zeros((0, 2))

    # cells at least one support radius; coarser when the window is mostly empty
    area = (px1 - px0) * (py1 - py0)
    cell = max(prof.radius, math.sqrt(area / max(4 * len(centers), 1_000_000)))
    nx = max(1, math.ceil((px1 - px0) / cell))
    ny = max(1, math.ceil((py1 - py0) / cell))
    ix = np.clip(((centers[:, 0] - px0) // cell).astype(np.int64), 0, nx - 1)
    iy = np.clip(((centers[:, 1] - py0) // cell).astype(np.int64), 0, ny - 1)
    cid = ix * ny + iy
    order = np.argsort(cid, kind="stable")
    centers = np.ascontiguousarray(centers[order])
    counts = np.bincount(cid, minlength=nx * ny)
    cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])

    mean = spec.intensity * prof.integral()
    ip = np.array([_jit.BUMP, nx, ny, prof.power], dtype=np.int64)
    fp = np.array([px0, py0, cell, x0, x1, y0, y1, prof.amplitude, prof.radius, mean])
    fa = (ip, fp, np.zeros((0, 4)), centers, cell_start)

    # every disk of radius a lies in a 3x3 block of cells
    grid = counts.reshape(nx, ny)
    padded = np.pad(grid, 1)
    block = sum(padded[i:i + nx, j:j + ny] for i in range(3) for j in range(3))
    n_max = int(block.max()) if centers.size else 0
    v0, v1, v2 = prof.sup_bounds()
    bounds = (max(n_max * v0 - mean, mean), n_max * v1, n_max * v2)
    return FieldRealization("bump", fa, bounds, "exact", spec.correlation_length(),
                            domain=(x0, x1, y0, y1), seed=seed, spec=spec)


def eval_field(field: FieldRealization, x) -> FieldJet:
    """Analytic jet ``(H, grad H, Hessian)`` at one point or an ``(n, 2)`` array.

    A single point returns scalars / a 2-vector / a 2x2 matrix.
    """
    x = np.asarray(x, dtype=float)
    jet = field.jet(x, order=2)
    if x.ndim == 1:
        return FieldJet(float(jet.value[0]), jet.grad[0], jet.hess[0])
    return jet


# ---------------------------------------------------------------------------
# correlation models


class CorrelationJet(NamedTuple):
    """Derivatives of ``R`` at a batch of lags."""

    R: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    lap: np.ndarray
    grad_lap: np.ndarray


def _as_lags(y):
    y = np.asarray(y, dtype=float)
    return np.atleast_2d(y), y.ndim == 1


def _squeeze(jet: CorrelationJet, single: bool) -> CorrelationJet:
    if not single:
        return jet
    return CorrelationJet(float(jet.R[0]), jet.grad[0], jet.hess[0], float(jet.lap[0]),
                          jet.grad_lap[0])


class GaussianCorrelation:
    """``R(y) = variance * exp(-y^T A y / 2)`` with a symmetric PSD matrix ``A``."""

    def __init__(self, variance: float = 1.0, A=None):
        self.variance = float(variance)
        self.A = np.eye(2) if A is None else np.array(A, dtype=float).reshape(2, 2)
        w = np.linalg.eigvalsh(self.A)
        self.isotropic = bool(abs(w[1] - w[0]) <= 1e-14 * max(1.0, abs(w[1])))
        self.decay_length = float(1.0 / math.sqrt(w.min())) if w.min() > 0 else math.inf
        self.support = None

    @classmethod
    def isotropic_model(cls, variance: float = 1.0, length: float = 1.0):
        return cls(variance, np.eye(2) / length**2)

    def evaluate(self, y) -> CorrelationJet:
        y, _ = _as_lags(y)
        A = self.A
        Ay = y @ A
        r = self.variance * np.exp(-0.5 * np.einsum("ni,ni->n", y, Ay))
        grad = -Ay * r[:, None]
        hess = (Ay[:, :, None] * Ay[:, None, :] - A) * r[:, None, None]
        q = np.einsum("ni,ni->n", Ay, Ay) - np.trace(A)
        lap = q * r
        grad_lap = (2 * Ay @ A - q[:, None] * Ay) * r[:, None]
        return CorrelationJet(r, grad, hess, lap, grad_lap)


class ZeroCorrelation:
    """``R == 0``: the deterministic, field-free medium."""

    isotropic = True
    decay_length = 1.0
    support = 0.0
    variance = 0.0

    def evaluate(self, y) -> CorrelationJet:
        y, _ = _as_lags(y)
        n = len(y)
        return CorrelationJet(np.zeros(n), np.zeros((n, 2)), np.zeros((n, 2, 2)), np.zeros(n),
                              np.zeros((n, 2)))


def _radial_jet(y, f0, f1, f2, f3, r_small):
    """Cartesian derivatives of a radial function from ``f, f', f'', f'''``."""
    r = np.sqrt(np.einsum("ni,ni->n", y, y))
    small = r < r_small
    rs = np.where(small, 1.0, r)
    u = y / rs[:, None]
    f1r = np.where(small, f2, f1 / rs)
    grad = np.where(small[:, None], 0.0, f1[:, None] * u)
    uu = u[:, :, None] * u[:, None, :]
    eye = np.eye(2)[None]
    hess = f2[:, None, None] * uu + f1r[:, None, None] * (eye - uu)
    hess = np.where(small[:, None, None], f2[:, None, None] * eye, hess)
    lap = f2 + f1r
    gl = f3 + f2 / rs - f1 / rs**2
    grad_lap = np.where(small[:, None], 0.0, gl[:, None] * u)
    return CorrelationJet(f0, grad, hess, lap, grad_lap)


def _bessel_0123(x):
    j0 = special.j0(x)
    j1 = special.j1(x)
    small = x < 8.0
    xs = np.where(small, 1.0, x)
    # upward recurrence is stable for x above the order
    j2 = np.where(small, special.jv(2, np.where(small, x, 0.0)), 2 * j1 / xs - j0)
    j3 = np.where(small, special.jv(3, np.where(small, x, 0.0)), 4 * j2 / xs - j1)
    return j0, j1, j2, j3


class BumpCorrelation:
    """Two-point function of a Poisson bump field, ``R = lambda * (V * V~)``.

    Radial derivatives come from the Hankel representation
    ``R^(m)(r) = lambda/(2 pi) int Vhat(k)^2 k^(m+1) J0^(m)(k r) dk``, integrated
    with a fixed composite Gauss-Legendre rule.
    """

    isotropic = True

    def __init__(self, profile: PolynomialBump, intensity: float, k_max: float = 120.0,
                 panels: int = 120, order: int = 24):
        self.profile = profile
        self.intensity = float(intensity)
        self.decay_length = profile.radius
        self.support = 2.0 * profile.radius
        k_max = k_max / profile.radius
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, k_max, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        self._k = (mid[:, None] + half[:, None] * x[None]).ravel()
        wk = (half[:, None] * w[None]).ravel()
        self._w = self.intensity / (2 * math.pi) * profile.hankel(self._k) ** 2 * self._k * wk
        self.variance = float(self.radial(np.zeros(1))[0][0])

    def radial(self, r):
        """``(f, f', f'', f''')`` at radii ``r``, zero beyond the support."""
        r = np.asarray(r, dtype=float)
        out = [np.zeros_like(r) for _ in range(4)]
        inside = r < self.support
        if inside.any():
            kr = np.outer(r[inside], self._k)
            k = self._k
            j0, j1, j2, j3 = _bessel_0123(kr)
            out[0][inside] = j0 @ self._w
            out[1][inside] = -j1 @ (self._w * k)
            out[2][inside] = 0.5 * (j2 - j0) @ (self._w * k**2)
            out[3][inside] = 0.25 * (3 * j1 - j3) @ (self._w * k**3)
        return tuple(out)

    def evaluate(self, y) -> CorrelationJet:
        y, _ = _as_lags(y)
        r = np.sqrt(np.einsum("ni,ni->n", y, y))
        f0, f1, f2, f3 = self.radial(r)
        return _radial_jet(y, f0, f1, f2, f3, 1e-7 * self.profile.radius)

    def convolution_quadrature(self, y, n: int = 801) -> float:
        """Direct 2D grid quadrature of ``lambda * int V(x) V(x + y) dx``.

        Independent of the Hankel route; used as a cross-check.
        """
        a = self.profile.radius
        g = np.linspace(-a, a, n)
        h = g[1] - g[0]
        X, Y = np.meshgrid(g, g, indexing="ij")
        v0 = self.profile.radial_derivatives(np.hypot(X, Y))[0]
        v1 = self.profile.radial_derivatives(np.hypot(X + y[0], Y + y[1]))[0]
        wx = np.full(n, h)
        wx[[0, -1]] = h / 2
        return float(self.intensity * np.einsum("i,j,ij->", wx, wx, v0 * v1))


class GridSpectralCorrelation:
    """``R(y) = variance * sum_c w_c cos(k_c . y)`` from a tabulated spectrum."""

    def __init__(self, variance, nodes, weights):
        self.variance = float(variance)
        self.nodes = np.asarray(nodes, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        m2 = np.einsum("n,ni,nj->ij", self.weights, self.nodes, self.nodes)
        w = np.linalg.eigvalsh(m2)
        self.isotropic = bool(abs(w[1] - w[0]) <= 1e-6 * w[1])
        self.decay_length = float(1.0 / math.sqrt(w.max())) if w.max() > 0 else 1.0
        self.support = None

    def evaluate(self, y) -> CorrelationJet:
        y, _ = _as_lags(y)
        k = self.nodes
        arg = y @ k.T
        c = np.cos(arg) * (self.variance * self.weights)
        s = np.sin(arg) * (self.variance * self.weights)
        k2 = (k**2).sum(1)
        R = c.sum(1)
        grad = -s @ k
        hess = -np.einsum("nc,ci,cj->nij", c, k, k)
        lap = -c @ k2
        grad_lap = s @ (k * k2[:, None])
        return CorrelationJet(R, grad, hess, lap, grad_lap)


def model_correlation(model, y) -> CorrelationJet:
    """``(R, grad R, Hessian R, Laplacian R, grad Laplacian R)`` at lag(s) ``y``."""
    y, single = _as_lags(y)
    return _squeeze(model.evaluate(y), single)


# ---------------------------------------------------------------------------
# empirical correlation


class EmpiricalCorrelation(NamedTuple):
    lags: np.ndarray
    estimate: np.ndarray
    se: np.ndarray


def _probe_box(field: FieldRealization, lag_span: float):
    if field.domain is None:
        L = 1000.0 * (field.correlation_length if math.isfinite(field.correlation_length) else 1.0)
        return (0.0, L, 0.0, L)
    x0, x1, y0, y1 = field.domain
    m = lag_span
    if x1 - x0 <= 2 * m or y1 - y0 <= 2 * m:
        raise ValueError("field window too small for the requested lags")
    return (x0 + m, x1 - m, y0 + m, y1 - m)


def empirical_correlation(fields: Sequence[FieldRealization], lags, n_probes: int = 1000,
                          seed=0) -> EmpiricalCorrelation:
    """Monte Carlo estimate of ``E[H(x) H(x + lag)]``.

    Probe points are uniform in each realization's admissible region.  With
    several realizations the standard error comes from the spread of the
    per-realization means; with one realization from the spread over probes.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("empty ensemble")
    if n_probes < 1:
        raise ValueError("n_probes must be positive")
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    span = float(np.abs(lags).max()) if lags.size else 0.0
    rng = np.random.default_rng(seed)
    per_field = np.empty((len(fields), len(lags)))
    per_probe = []
    for f_i, f in enumerate(fields):
        x0, x1, y0, y1 = _probe_box(f, span)
        pts = np.column_stack([rng.uniform(x0, x1, n_probes), rng.uniform(y0, y1, n_probes)])
        h0 = f.value(pts)
        prods = np.empty((len(lags), n_probes))
        for l_i, lag in enumerate(lags):
            prods[l_i] = h0 * f.value(pts + lag)
        per_field[f_i] = prods.mean(1)
        per_probe.append(prods)
    est = per_field.mean(0)
    if len(fields) >= 2:
        se = per_field.std(0, ddof=1) / math.sqrt(len(fields))
    else:
        prods = per_probe[0]
        se = prods.std(1, ddof=1) / math.sqrt(n_probes) if n_probes > 1 else np.zeros(len(lags))
    return EmpiricalCorrelation(lags, est, se)
