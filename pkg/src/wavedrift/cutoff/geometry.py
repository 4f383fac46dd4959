"""Tube occupancy, re-entry, transversality and the geometric inequalities of
the cut-off dynamics, as checks on recorded paths."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .history import PathHistory, PolylineHash, polyline_distance_linear
from .params import CutoffParams
from .theta import theta

__all__ = [
    "OccupancyRecord", "tube_occupancy", "tube_occupancy_linear", "occupancy_table",
    "write_occupancy_csv", "ReentryReport", "reentry_check", "sample_reentry_pairs",
    "GeometryReport", "check_path_geometry", "TransversalityReport", "check_transversality",
    "theta_fd_probe", "derivative_scale", "derivative_scaling",
]

INF = math.inf


# ---------------------------------------------------------------------------
# tube occupancy


@dataclass(frozen=True)
class OccupancyRecord:
    k: int
    measure: float
    reference_scale: float

    @property
    def ratio(self) -> float:
        return self.measure / self.reference_scale


def _tube_window(history, k):
    spc1 = int(history.spc[0])
    if k < 1:
        raise ValueError("tube occupancy needs k >= 1")
    lo, hi = k * spc1, (k + 2) * spc1
    if hi >= len(history):
        raise ValueError(f"path ends before t_{k + 2}")
    return lo, hi, (k - 1) * spc1


def _theta_nonzero(history):
    if history.theta is None:
        raise ValueError("history carries no cut-off values")
    return history.theta != 0.0


def tube_occupancy(history: PathHistory, k: int, p4: int | None = None,
                   params: CutoffParams | None = None) -> OccupancyRecord:
    """Time spent in ``[t_k, t_{k+2})`` (mesh 1) within ``1/p4`` of the path up to
    ``t_{k-1}`` while the cut-off is nonzero.

    ``p4`` overrides the tube width of ``params`` (the dynamics does not
    depend on it, so one path serves every width).
    """
    params = params or history.params
    p4 = params.p4 if p4 is None else int(p4)
    lo, hi, past = _tube_window(history, k)
    r = 1.0 / p4
    alive = _theta_nonzero(history)
    count = 0
    if past == 0:
        x0 = history.X[0]
        for n in range(lo, hi):
            if alive[n] and math.dist(history.X[n], x0) <= r:
                count += 1
    else:
        hsh = history.polyline_hash(r)
        for n in range(lo, hi):
            if alive[n] and hsh.distance(history.X[n], 0, past) <= r:
                count += 1
    scale = math.sqrt(params.N4) * params.p2 ** 2 / (params.p1 * p4)
    return OccupancyRecord(int(k), count * history.dt, scale)


def tube_occupancy_linear(history: PathHistory, k: int, p4: int | None = None) -> float:
    """Linear-scan oracle for the measure of :func:`tube_occupancy`."""
    p4 = history.params.p4 if p4 is None else int(p4)
    lo, hi, past = _tube_window(history, k)
    alive = _theta_nonzero(history)
    count = 0
    for n in range(lo, hi):
        if not alive[n]:
            continue
        if past == 0:
            d = math.dist(history.X[n], history.X[0])
        else:
            d = polyline_distance_linear(history.X, history.X[n], 0, past)
        count += d <= 1.0 / p4
    return count * history.dt


def occupancy_table(history: PathHistory, p4: int | None = None) -> list:
    """:func:`tube_occupancy` for every ``k >= 1`` whose window fits in the path."""
    spc1 = int(history.spc[0])
    kmax = (len(history) - 1) // spc1 - 2
    if (kmax + 2) * spc1 >= len(history):
        kmax -= 1
    return [tube_occupancy(history, k, p4) for k in range(1, kmax + 1)]


def write_occupancy_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "measure", "reference_scale"])
        for r in records:
            w.writerow([r.k, repr(float(r.measure)), repr(float(r.reference_scale))])


# ---------------------------------------------------------------------------
# re-entry into a tube


@dataclass
class ReentryReport:
    """Entrance ``sigma0``, exit ``sigma1`` and second entrance ``sigma2`` of the
    probe arc into the tube around the source arc (``inf`` if absent)."""

    i: int
    j: int
    sigma0: float = INF
    sigma1: float = INF
    sigma2: float = INF
    premises: dict = dc_field(default_factory=dict)

    @property
    def entered(self) -> bool:
        return self.sigma0 < INF

    @property
    def exited(self) -> bool:
        return self.sigma1 < INF

    @property
    def reentered(self) -> bool:
        return self.sigma2 < INF

    @property
    def premises_hold(self) -> bool:
        return bool(self.premises) and all(self.premises.values())

    def to_dict(self) -> dict:
        f = lambda x: None if x == INF else float(x)  # noqa: E731
        return {"i": self.i, "j": self.j, "entered": self.entered, "exited": self.exited,
                "reentered": self.reentered, "sigma0": f(self.sigma0),
                "sigma1": f(self.sigma1), "sigma2": f(self.sigma2),
                "premises": dict(self.premises)}


def _arc(history, cell):
    spc2 = int(history.spc[1])
    lo, hi = cell * spc2, (cell + 1) * spc2
    if hi >= len(history):
        raise ValueError(f"mesh-2 cell {cell} is not complete in the path")
    return lo, hi


def _oscillation(ang) -> float:
    return float(ang.max() - ang.min())


def reentry_check(history: PathHistory, i: int, j: int, p4: int | None = None) -> ReentryReport:
    """Entrance and exit times of mesh-2 arc ``i`` into the ``1/p4`` tube of arc ``j``.

    The premises recorded are: transversality of the arcs
    (``|V^(s) . V^(t)| <= 1 - 1/(4 N4)`` for all sample pairs) and small
    bending (the tangent-angle oscillations of both arcs sum to less than the
    smallest crossing angle).
    """
    p = history.params
    p4 = p.p4 if p4 is None else int(p4)
    lo_i, hi_i = _arc(history, i)
    lo_j, hi_j = _arc(history, j)
    r = 1.0 / p4
    hsh = PolylineHash(history.X[lo_j:hi_j + 1], r)
    inside = np.array([hsh.distance(history.X[n]) <= r for n in range(lo_i, hi_i + 1)])
    rep = ReentryReport(int(i), int(j))
    idx = np.flatnonzero(inside)
    if idx.size:
        a = idx[0]
        rep.sigma0 = float(history.t[lo_i + a])
        out = np.flatnonzero(~inside[a:])
        if out.size:
            b = a + out[0]
            rep.sigma1 = float(history.t[lo_i + b])
            back = np.flatnonzero(inside[b:])
            if back.size:
                rep.sigma2 = float(history.t[lo_i + b + back[0]])
    Vh = history.Vhat
    cos = np.abs(Vh[lo_i:hi_i + 1] @ Vh[lo_j:hi_j + 1].T)
    ang = np.unwrap(np.arctan2(history.V[:, 1], history.V[:, 0]))
    min_cross = float(np.arccos(np.clip(cos.max(), -1.0, 1.0)))
    bend = _oscillation(ang[lo_i:hi_i + 1]) + _oscillation(ang[lo_j:hi_j + 1])
    rep.premises = {"transversal": bool(cos.max() <= 1 - 1 / (4 * p.N4)),
                    "small_bending": bool(bend < min_cross)}
    return rep


def sample_reentry_pairs(history: PathHistory, p4: int | None = None, min_gap: int = 2) -> list:
    """:func:`reentry_check` over all mesh-2 cell pairs ``j <= i - min_gap`` whose
    arcs come within the tube width of each other."""
    p = history.params
    p4 = p.p4 if p4 is None else int(p4)
    spc2 = int(history.spc[1])
    ncell = (len(history) - 1) // spc2
    out = []
    for i in range(ncell):
        lo_i, hi_i = i * spc2, (i + 1) * spc2
        for j in range(0, i - min_gap + 1):
            lo_j, hi_j = j * spc2, (j + 1) * spc2
            # cheap bounding-box rejection before the exact check
            a = history.X[lo_i:hi_i + 1]
            b = history.X[lo_j:hi_j + 1]
            r = 1.0 / p4
            if (a[:, 0].min() > b[:, 0].max() + r or b[:, 0].min() > a[:, 0].max() + r
                    or a[:, 1].min() > b[:, 1].max() + r or b[:, 1].min() > a[:, 1].max() + r):
                continue
            rep = reentry_check(history, i, j, p4)
            if rep.entered:
                out.append(rep)
    return out


# ---------------------------------------------------------------------------
# geometric inequalities along a cut-off path


@dataclass
class GeometryReport:
    """Worst slack of each inequality (negative means violated beyond tolerance).

    ``slack[name][i]`` is ``min(lhs - bound)`` over the checked samples of
    mesh ``i`` for the direction inequalities and ``min(bound - lhs)`` for the
    momentum-tether bound.
    """

    slack: dict
    tolerance_angle: float
    tolerance_momentum: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return all(v >= 0 for d in self.slack.values() for v in d.values())

    def to_dict(self) -> dict:
        return {"ok": self.ok, "slack": {k: {str(i): float(v) for i, v in d.items()}
                                         for k, d in self.slack.items()},
                "tolerance_angle": self.tolerance_angle,
                "tolerance_momentum": self.tolerance_momentum, "n_samples": self.n_samples}


def _kick(history):
    k = getattr(history, "kick_max", None)
    if k is None:
        if history.theta is None or history.grad_norm is None or history.dt_micro is None:
            raise ValueError("history lacks force records; pass kick explicitly")
        th = history.theta if history.theta_left is None else np.maximum(history.theta,
                                                                         history.theta_left)
        k = float((history.dt_micro * math.sqrt(history.delta) * th * history.grad_norm).max())
    return k


def check_path_geometry(history: PathHistory, until: float | None = None,
                           kick: float | None = None) -> GeometryReport:
    """Check the direction and momentum bounds on every sample with ``t <= until``.

    For each mesh ``i`` and cell ``k``, with ``l(t)`` the momentum:

    * ``V^(t) . V^(t_{k-1}) >= 1 - 2/N_i`` on ``[t_{k-1}, t_{k+1})``;
    * ``V^(t) . V^(t_{k-1}) >= 1 - 18/N_i`` on ``[t_{k+1}, t_{k+2})``;
    * ``V^(s) . V^(t) >= 1 - 8/N_i`` for ``s, t`` in one cell;
    * ``|l(t) - l(t_k)| <= 1/(M* sqrt(N_i))`` on ``[t_k, t_{k+1})``.

    The direction bounds allow ``4 kick / |v|`` and the momentum bound
    ``2 kick``, ``kick`` being the largest momentum change of one half-step.
    """
    p = history.params
    kick = _kick(history) if kick is None else float(kick)
    end = len(history) if until is None or until == INF else int(
        np.searchsorted(history.t, until, side="right"))
    end = max(end, 1)
    Vh = history.Vhat[:end]
    V = history.V[:end]
    speed = np.hypot(V[:, 0], V[:, 1])
    tol_a = 4 * kick / speed.min()
    tol_m = 2 * kick
    ang = np.unwrap(np.arctan2(V[:, 1], V[:, 0]))
    slack = {"direction": {}, "direction_later": {}, "pairwise": {}, "momentum": {}}
    n = np.arange(end)
    for i in (1, 2, 3):
        spc = int(history.spc[i - 1])
        N = p.threshold(i)
        k = n // spc
        # reference t_{k-1} for samples in cells k-1 and k, i.e. ref cell = k-1 and k
        s1 = [np.inf]
        s2 = [np.inf]
        for shift, bucket, bound in ((0, s1, 2.0), (1, s1, 2.0), (2, s2, 18.0)):
            ref = k - shift
            ok = ref >= 0
            if not ok.any():
                continue
            dots = (Vh[ok] * history.Vhat[ref[ok] * spc]).sum(axis=1)
            bucket.append(float((dots - (1 - bound / N) + tol_a).min()))
        slack["direction"][i] = min(s1)
        slack["direction_later"][i] = min(s2)
        pw = np.inf
        mom = np.inf
        for c in range(k[-1] + 1):
            a, b = c * spc, min((c + 1) * spc, end)
            spread = _oscillation(ang[a:b])
            mind = math.cos(min(spread, math.pi))
            pw = min(pw, mind - (1 - 8 / N) + tol_a)
            dv = np.hypot(*(V[a:b] - history.V[a]).T).max()
            mom = min(mom, 1 / (p.M_star * math.sqrt(N)) + tol_m - dv)
        slack["pairwise"][i] = pw
        slack["momentum"][i] = mom
    return GeometryReport(slack, float(tol_a), float(tol_m), int(end))


# ---------------------------------------------------------------------------
# transversality of near approaches


@dataclass
class TransversalityReport:
    """Near approaches while the cut-off is active.

    ``violations`` counts mesh-2 point pairs closer than ``1/(2 p2)`` with
    ``|cos| > 1 - 1/(4 N4)``; ``cell_violations`` counts the same over all
    earlier fine samples (a stricter diagnostic that the cut-off does not
    enforce).
    """

    n_checked: int
    violations: int
    max_abs_cos: float
    cell_checked: int
    cell_violations: int
    cell_max_abs_cos: float

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("n_checked", "violations", "max_abs_cos",
                                              "cell_checked", "cell_violations",
                                              "cell_max_abs_cos")} | {"ok": self.ok}


def check_transversality(history: PathHistory) -> TransversalityReport:
    p = history.params
    alive = _theta_nonzero(history)
    Vh = history.Vhat
    r = 0.5 / p.p2
    thr = 1 - 1 / (4 * p.N4)
    spc1, spc2 = int(history.spc[0]), int(history.spc[1])
    ratio = p.p2 // p.p1
    mx = history.mesh_X(2)
    mvh = Vh[::spc2]
    checked = viol = cchecked = cviol = 0
    worst = cworst = 0.0
    for n in np.flatnonzero(alive):
        k1 = n // spc1
        if k1 < 1:
            continue
        for l in history.mesh2_near(history.X[n], (k1 - 1) * ratio):
            if math.dist(history.X[n], mx[l]) <= r:
                c = abs(float(Vh[n] @ mvh[l]))
                checked += 1
                worst = max(worst, c)
                viol += c > thr
        lim = (k1 - 1) * spc1
        d = np.hypot(*(history.X[:lim + 1] - history.X[n]).T)
        near = np.flatnonzero(d <= r)
        if near.size:
            c = np.abs(Vh[near] @ Vh[n])
            cchecked += near.size
            cworst = max(cworst, float(c.max()))
            cviol += int((c > thr).sum())
    return TransversalityReport(checked, int(viol), worst, cchecked, cviol, cworst)


# ---------------------------------------------------------------------------
# finite-difference derivative bounds of the cut-off


def derivative_scale(params: CutoffParams, beta: tuple) -> float:
    """Reference scale ``p2^(2 b1 + b2) (N1 N2 N3 N4)^(b2/2)`` of the derivative bound."""
    b1, b2 = beta
    prodN = params.N1 * params.N2 * params.N3 * params.N4
    return params.p2 ** (2 * b1 + b2) * prodN ** (b2 / 2)


def theta_fd_probe(history: PathHistory, n_probes: int = 1000, seed=0,
                   h: float = 1e-7, params: CutoffParams | None = None) -> dict:
    """Largest central-difference gradients of the cut-off in ``y`` and ``v``.

    Probe points sit near the recorded path: ``y`` within ``1/p2`` of a past
    mesh-2 point, ``v`` within the tether radius of the current momentum, so
    that the transition bands of every factor are visited.
    """
    p = params or history.params
    rng = np.random.default_rng(seed)
    spc1 = int(history.spc[0])
    ratio = p.p2 // p.p1
    mx = history.mesh_X(2)
    n_lo = spc1 + 1
    if n_lo >= len(history):
        raise ValueError("path too short for probing")
    sup_y = sup_v = 0.0
    for _ in range(n_probes):
        n = int(rng.integers(n_lo, len(history)))
        t = history.t[n]
        k1 = history.cell_of_time(1, t)
        lmax = min((k1 - 1) * ratio, len(mx) - 1)
        base = mx[int(rng.integers(0, lmax + 1))] if lmax >= 0 and rng.random() < 0.5 \
            else history.X[n]
        rad = rng.uniform(0, 1.0 / p.p2)
        phase = rng.uniform(0, 2 * math.pi)
        y = base + rad * np.array([math.cos(phase), math.sin(phase)])
        vr = rng.uniform(0, 1.5 / (p.M_star * math.sqrt(min(p.N[:3]))))
        vphase = rng.uniform(0, 2 * math.pi)
        v = history.V[n] + vr * np.array([math.cos(vphase), math.sin(vphase)])
        gy = np.empty(2)
        gv = np.empty(2)
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            gy[d] = (theta(t, y + e, v, history, p) - theta(t, y - e, v, history, p)) / (2 * h)
            gv[d] = (theta(t, y, v + e, history, p) - theta(t, y, v - e, history, p)) / (2 * h)
        sup_y = max(sup_y, float(np.hypot(*gy)))
        sup_v = max(sup_v, float(np.hypot(*gv)))
    return {"sup_dy": sup_y, "sup_dv": sup_v, "n_probes": int(n_probes),
            "scale_dy": derivative_scale(p, (1, 0)), "scale_dv": derivative_scale(p, (0, 1))}


def derivative_scaling(field, delta: float, params: CutoffParams, x0, v0, T: float,
                n_probes: int = 1000, seed=0, factor: float = 2.0) -> dict:
    """Fit the derivative constants at ``params`` and test them after doubling
    ``p2`` and, separately, ``N4`` (with ``N2 = N4 [delta^-eps6]`` following).

    For each variant the measured sup must stay below ``factor`` times the
    fitted constant times the variant's reference scale.
    """
    from .integrate import integrate_modified

    variants = {"base": params,
                "p2x2": params.with_overrides(p2=2 * params.p2),
                "N4x2": params.with_overrides(N4=2 * params.N4, N2=2 * params.N2)}
    res = {}
    for name, pv in variants.items():
        _, hist, _ = integrate_modified(field, delta, pv, x0, v0, T)
        res[name] = theta_fd_probe(hist, n_probes, seed=seed)
    base = res["base"]
    C_y = base["sup_dy"] / base["scale_dy"]
    C_v = base["sup_dv"] / base["scale_dv"]
    checks = {}
    for name in ("p2x2", "N4x2"):
        r = res[name]
        checks[name] = {
            "dy_ratio": r["sup_dy"] / (C_y * r["scale_dy"]) if C_y > 0 else 0.0,
            "dv_ratio": r["sup_dv"] / (C_v * r["scale_dv"]) if C_v > 0 else 0.0,
        }
        checks[name]["ok"] = (checks[name]["dy_ratio"] <= factor
                              and checks[name]["dv_ratio"] <= factor)
    return {"C_dy": C_y, "C_dv": C_v, "probes": res, "checks": checks,
            "ok": all(c["ok"] for c in checks.values())}
