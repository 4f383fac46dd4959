"""Mesh sizes, alignment thresholds and the speed band of the cut-off dynamics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict, replace

from ..dynamics import speed_band_constant

__all__ = ["CutoffParams", "ConstraintError", "derive_params", "DEFAULT_EPS"]

MODES = ("illustrative", "strict")

# Exponents that exercise every mesh at delta = 1e-2:
# p = (3, 6, 9, 31), N = (2, 4, 3, 2).
DEFAULT_EPS = (0.3, 0.16, 0.25, 0.75, 0.2, 0.2, 0.25, 0.2)


class ConstraintError(ValueError):
    """Raised with the list of violated inequalities."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _floor_pow(delta, e):
    # integer part of delta^-e, guarded against 9.999999 -> 9
    x = delta ** (-e)
    k = math.floor(x)
    if x - k > 1 - 1e-12:
        k += 1
    return max(int(k), 0)


@dataclass(frozen=True)
class CutoffParams:
    """Derived cut-off parameters.

    ``p = (p1, p2, p3, p4)`` are the reciprocal mesh sizes (``p4`` the tube
    width), ``N = (N1, N2, N3, N4)`` the alignment thresholds and ``M_star`` the
    speed band constant.  ``overrides`` lists fields set by hand rather than
    derived from the exponents.
    """

    delta: float
    eps: tuple
    M: float
    D_tilde: float
    delta_star: float
    mode: str
    p1: int
    p2: int
    p3: int
    p4: int
    N1: int
    N2: int
    N3: int
    N4: int
    M_star: float
    notes: tuple = ()
    overrides: tuple = ()

    @property
    def p(self) -> tuple:
        return (self.p1, self.p2, self.p3, self.p4)

    @property
    def N(self) -> tuple:
        return (self.N1, self.N2, self.N3, self.N4)

    def mesh(self, i: int) -> int:
        """Reciprocal mesh size ``p_i`` for ``i = 1, 2, 3``."""
        return self.p[i - 1]

    def threshold(self, i: int) -> int:
        return self.N[i - 1]

    @property
    def lcm(self) -> int:
        return math.lcm(self.p1, self.p2, self.p3)

    def occupancy_scale(self) -> float:
        """Reference scale ``N4^(1/2) p2^2 / (p1 p4)`` of the tube occupancy bound."""
        return math.sqrt(self.N4) * self.p2 ** 2 / (self.p1 * self.p4)

    def with_overrides(self, **kw) -> "CutoffParams":
        """Copy with some derived integers replaced (for scaling studies)."""
        allowed = {"p1", "p2", "p3", "p4", "N1", "N2", "N3", "N4", "M_star"}
        bad = set(kw) - allowed
        if bad:
            raise ValueError(f"cannot override {sorted(bad)}")
        new = replace(self, **kw, overrides=tuple(sorted(set(self.overrides) | set(kw))))
        if new.p2 % new.p1 or new.p3 % new.p1:
            raise ValueError("p2 and p3 must stay multiples of p1")
        return new

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps"] = list(self.eps)
        d["notes"] = list(self.notes)
        d["overrides"] = list(self.overrides)
        return d


def _check(eps, mode):
    e1, e2, e3, e4, e5, e6, e7, e8 = eps
    bad = []
    for name, val in (("eps1", e1), ("eps4", e4), ("eps5", e5), ("eps7", e7), ("eps8", e8)):
        if not 0 < val < 1:
            bad.append(f"{name} in (0, 1) violated ({name}={val})")
    for name, val in (("eps1+eps2", e1 + e2), ("eps1+eps3", e1 + e3), ("eps6+eps8", e6 + e8)):
        if not 0 < val < 1:
            bad.append(f"{name} in (0, 1) violated ({name}={val:.6g})")
    if min(eps) <= 0:
        bad.append("all exponents must be positive")
    if not e5 < e1:
        bad.append(f"N1 << p1 needs eps5 < eps1 ({e5} >= {e1})")
    if not e6 + e8 < e1 + e2:
        bad.append(f"N2 << p2 needs eps6+eps8 < eps1+eps2 ({e6 + e8:.6g} >= {e1 + e2:.6g})")
    if not e7 < e1 + e3:
        bad.append(f"N3 << p3 needs eps7 < eps1+eps3 ({e7} >= {e1 + e3:.6g})")
    if not 2 * (e1 + e2) < 1:
        bad.append(f"2(eps1+eps2) < 1 violated ({2 * (e1 + e2):.6g})")
    if not 0.5 < e4 < 1:
        bad.append(f"eps4 in (1/2, 1) violated (eps4={e4})")
    if mode == "strict":
        for i, val in enumerate(eps, start=1):
            if i in (3, 4, 7):
                continue
            if not 0 < val < 1e-3:
                bad.append(f"strict mode needs eps{i} in (0, 1e-3) (eps{i}={val})")
        if not 1 / 7 < e3 < 1 / 6:
            bad.append(f"strict mode needs eps3 in (1/7, 1/6) (eps3={e3})")
        if not 15 / 16 < e4 < 1:
            bad.append(f"strict mode needs eps4 in (15/16, 1) (eps4={e4})")
        if not 1 / 15 < e7 < 1 / 10:
            bad.append(f"strict mode needs eps7 in (1/15, 1/10) (eps7={e7})")
    return bad


def derive_params(delta: float, eps=DEFAULT_EPS, M: float = 11.0, D_tilde: float = 0.0,
                  mode: str = "illustrative", delta_star: float = 0.1) -> CutoffParams:
    """Derive meshes and thresholds from the exponents ``eps = (eps1, ..., eps8)``.

    ``p1 = [delta^-eps1]``, ``p2 = p1 [delta^-eps2]``, ``p3 = p1 [delta^-eps3]``,
    ``p4 = [delta^-eps4]``, ``N1 = [delta^-eps5]``, ``N2 = N4 [delta^-eps6]``,
    ``N3 = [delta^-eps7]``, ``N4 = [delta^-eps8]``.

    Raises :class:`ConstraintError` listing every violated inequality.  In
    ``"strict"`` mode the narrow exponent ranges of the mixing estimate
    are enforced as well, and a void lower speed bound is an error.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    eps = tuple(float(e) for e in eps)
    if len(eps) != 8:
        raise ValueError("need exactly eight exponents")
    if not M > 10:
        raise ConstraintError([f"M > 10 violated (M={M})"])
    bad = _check(eps, mode)
    if bad:
        raise ConstraintError(bad)
    e1, e2, e3, e4, e5, e6, e7, e8 = eps
    p1 = _floor_pow(delta, e1)
    p2 = p1 * _floor_pow(delta, e2)
    p3 = p1 * _floor_pow(delta, e3)
    p4 = _floor_pow(delta, e4)
    N4 = _floor_pow(delta, e8)
    N1 = _floor_pow(delta, e5)
    N2 = N4 * _floor_pow(delta, e6)
    N3 = _floor_pow(delta, e7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Ms = speed_band_constant(M, D_tilde, delta_star, strict=(mode == "strict"))
    notes = []
    if p1 < 2:
        msg = (f"p1 = [delta^-eps1] = {p1}: delta^-eps1 < 2, the meshes degenerate at "
               f"delta={delta:g}")
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    low = 1.0 / (2 * M * M) - 2 * math.sqrt(delta_star) * D_tilde
    if low <= 0:
        notes.append("lower speed bound void; M_star uses the upper entry only")
    return CutoffParams(delta, eps, float(M), float(D_tilde), float(delta_star), mode,
                        p1, p2, p3, p4, N1, N2, N3, N4, Ms, tuple(notes))
