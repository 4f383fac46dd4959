"""Violent-turn and self-intersection stopping times of a recorded path.

Detection runs on the fine samples after integration.  The cut-off dynamics
never looks ahead, so a post-hoc scan sees exactly the history available to
an online detector at every step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels as K
from .history import PathHistory

__all__ = ["StopReport", "detect_stopping_times", "detect_violent_turn",
           "detect_self_intersection", "violent_turn_linear", "self_intersection_linear",
           "u_radius"]

INF = math.inf


def _dot(a, b) -> float:
    return float(a[0] * b[0] + a[1] * b[1])


def _dist2(a, b) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return float(dx * dx + dy * dy)


def _json_time(x):
    return None if x == INF else float(x)


@dataclass
class StopReport:
    """Stopping times (``inf`` when the defining set is empty) and their witnesses.

    Each witness is a dict with ``kind`` (``"S1"``, ``"S2"``, ``"S3"`` or
    ``"U"``), the sample index ``n`` and time ``t`` of the event and the data
    needed to re-check it against the raw path.
    """

    S1: float = INF
    S2: float = INF
    S3: float = INF
    U: float = INF
    witnesses: list = dc_field(default_factory=list)

    @property
    def S(self) -> float:
        return min(self.S1, self.S2, self.S3)

    @property
    def tau(self) -> float:
        return min(self.S, self.U)

    def component(self, i: int) -> float:
        return (self.S1, self.S2, self.S3)[i - 1]

    def to_dict(self) -> dict:
        return {"S1": _json_time(self.S1), "S2": _json_time(self.S2),
                "S3": _json_time(self.S3), "U": _json_time(self.U),
                "S": _json_time(self.S), "tau": _json_time(self.tau),
                "witnesses": [dict(w) for w in self.witnesses]}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d) -> "StopReport":
        conv = lambda x: INF if x is None else float(x)  # noqa: E731
        return cls(conv(d["S1"]), conv(d["S2"]), conv(d["S3"]), conv(d["U"]),
                   list(d.get("witnesses", [])))

    def verify(self, history: PathHistory, pad: bool = True) -> bool:
        """Re-check every witness against the raw samples of ``history``."""
        p = history.params
        Vh = history.Vhat
        for w in self.witnesses:
            n = w["n"]
            if not math.isclose(history.t[n], w["t"], rel_tol=0, abs_tol=1e-12):
                return False
            if w["kind"] == "U":
                m = w["m"]
                k = n // history.spc[0]
                if k < 1 or m > (k - 1) * history.spc[0]:
                    return False
                r = u_radius(history, pad)
                c = abs(_dot(Vh[n], Vh[m]))
                if not (_dist2(history.X[n], history.X[m]) < r * r and c >= 1 - 1 / p.N4):
                    return False
            else:
                i = int(w["kind"][1])
                spc = history.spc[i - 1]
                k = n // spc
                N = p.threshold(i)
                c1 = k >= 1 and _dot(Vh[n], Vh[(k - 1) * spc]) <= 1 - 1 / N
                c2 = (math.sqrt(_dist2(history.V[n], history.V[k * spc]))
                      >= 1 / (math.sqrt(2 * N) * p.M_star))
                if not (c1 or c2):
                    return False
        times = {"S1": self.S1, "S2": self.S2, "S3": self.S3, "U": self.U}
        for kind, t in times.items():
            ws = [w for w in self.witnesses if w["kind"] == kind]
            if (t == INF) != (not ws):
                return False
            if ws and not math.isclose(ws[0]["t"], t, rel_tol=0, abs_tol=1e-12):
                return False
        return True


# ---------------------------------------------------------------------------
# violent turns


def detect_violent_turn(history: PathHistory, i: int):
    """First sample of the mesh-``i`` violent-turn set, as ``(n, witness)`` or ``(None, None)``.

    In cell ``k`` a sample is offending when its direction makes
    ``V^(t_{k-1}) . V^(t) <= 1 - 1/N_i`` or ``|V(t_k) - V(t)| >= 1/(sqrt(2 N_i) M*)``;
    the first clause is skipped on cell ``k = 0``.
    """
    p = history.params
    spc = int(history.spc[i - 1])
    N = p.threshold(i)
    n = np.arange(len(history))
    k = n // spc
    Vh = history.Vhat
    ref_prev = Vh[np.maximum(k - 1, 0) * spc]
    c1 = (k >= 1) & (Vh[:, 0] * ref_prev[:, 0] + Vh[:, 1] * ref_prev[:, 1] <= 1 - 1 / N)
    d = history.V - history.V[k * spc]
    c2 = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) >= 1 / (math.sqrt(2 * N) * p.M_star)
    hit = np.flatnonzero(c1 | c2)
    if hit.size == 0:
        return None, None
    j = int(hit[0])
    return j, _turn_witness(history, i, j, bool(c1[j]), bool(c2[j]))


def _turn_witness(history, i, n, c1, c2):
    spc = int(history.spc[i - 1])
    k = n // spc
    return {"kind": f"S{i}", "n": int(n), "t": float(history.t[n]), "mesh": i, "cell": int(k),
            "ref_prev": int((k - 1) * spc) if k >= 1 else None, "ref_cell": int(k * spc),
            "direction_clause": c1, "momentum_clause": c2}


def violent_turn_linear(history: PathHistory, i: int):
    """Sample-by-sample oracle for :func:`detect_violent_turn`."""
    p = history.params
    spc = int(history.spc[i - 1])
    N = p.threshold(i)
    Vh = history.Vhat.tolist()
    V = history.V.tolist()
    for n in range(len(history)):
        k = n // spc
        c1 = False
        if k >= 1:
            a, b = Vh[n], Vh[(k - 1) * spc]
            c1 = a[0] * b[0] + a[1] * b[1] <= 1 - 1 / N
        a, b = V[n], V[k * spc]
        dx, dy = a[0] - b[0], a[1] - b[1]
        c2 = math.sqrt(dx * dx + dy * dy) >= 1 / (math.sqrt(2 * N) * p.M_star)
        if c1 or c2:
            return n, _turn_witness(history, i, n, c1, c2)
    return None, None


# ---------------------------------------------------------------------------
# self-intersections


def u_radius(history: PathHistory, pad: bool = True) -> float:
    """Distance threshold ``1/p2``, padded by ``2 max|V| dt`` to cover inter-sample times."""
    r = 1.0 / history.params.p2
    if pad:
        r += 2 * float(np.hypot(history.V[:, 0], history.V[:, 1]).max()) * history.dt
    return r


def _u_witness(history, n, m):
    Vh = history.Vhat
    return {"kind": "U", "n": int(n), "m": int(m), "t": float(history.t[n]),
            "s": float(history.t[m]), "distance": math.dist(history.X[n], history.X[m]),
            "abs_cos": abs(_dot(Vh[n], Vh[m]))}


def detect_self_intersection(history: PathHistory, pad: bool = True):
    """First sample ``t`` in mesh-1 cell ``k >= 1`` that comes back near an earlier
    sample ``s <= t_{k-1}`` with nearly parallel momentum.  Uses a grid over the samples."""
    r = u_radius(history, pad)
    spc1 = int(history.spc[0])
    if len(history) <= spc1:
        return None, None
    origin, nx, ny, cs, order = K.grid_build(history.X, r)
    n, m = K.detect_U(history.X, history.Vhat, spc1, r, 1 - 1 / history.params.N4,
                      origin, nx, ny, cs, order, r)
    if n < 0:
        return None, None
    return int(n), _u_witness(history, n, m)


def self_intersection_linear(history: PathHistory, pad: bool = True):
    """Quadratic-scan oracle for :func:`detect_self_intersection`."""
    r = u_radius(history, pad)
    spc1 = int(history.spc[0])
    thr = 1 - 1 / history.params.N4
    X, Vh = history.X, history.Vhat
    for n in range(spc1, len(history)):
        lim = (n // spc1 - 1) * spc1
        dx = X[n, 0] - X[:lim + 1, 0]
        dy = X[n, 1] - X[:lim + 1, 1]
        c = np.abs(Vh[n, 0] * Vh[:lim + 1, 0] + Vh[n, 1] * Vh[:lim + 1, 1])
        hit = np.flatnonzero((dx * dx + dy * dy < r * r) & (c >= thr))
        if hit.size:
            return n, _u_witness(history, n, int(hit[0]))
    return None, None


# ---------------------------------------------------------------------------


def detect_stopping_times(history: PathHistory, pad: bool = True, linear: bool = False) -> StopReport:
    """All stopping times of ``history``; ``linear`` selects the scan oracles."""
    vt = violent_turn_linear if linear else detect_violent_turn
    si = self_intersection_linear if linear else detect_self_intersection
    rep = StopReport()
    times = []
    for i in (1, 2, 3):
        n, w = vt(history, i)
        times.append(INF if n is None else float(history.t[n]))
        if w is not None:
            rep.witnesses.append(w)
    rep.S1, rep.S2, rep.S3 = times
    n, w = si(history, pad)
    if n is not None:
        rep.U = float(history.t[n])
        rep.witnesses.append(w)
    return rep
