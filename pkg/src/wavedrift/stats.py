"""Estimators and tests for the momentum-direction statistics of an ensemble.

The limit law of the momentum direction is a Brownian motion on the circle
with generator ``a d^2/dtheta^2``: ``E cos(theta_t - theta_0) = exp(-a t)``
and increments over a lag ``s`` are ``N(0, 2 a s)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats as sps

__all__ = [
    "Ensemble",
    "Autocorrelation",
    "DecayFit",
    "KSResult",
    "SpeedBandReport",
    "EnsembleSummary",
    "direction_autocorrelation",
    "fit_decay_rate",
    "angle_increment_test",
    "speed_band_report",
    "summarize",
]

MIN_TRAJECTORIES = 64
MIN_BATCHES = 16


@dataclass
class Ensemble:
    """Angles and speeds of ``n`` trajectories on a shared time grid.

    ``theta`` is ``(n, m)`` and unwrapped; ``speed_sq_dev`` holds, per
    trajectory, ``max_t | |V(t)|^2 - |V(0)|^2 |`` (at integrator resolution when
    available).
    """

    t: np.ndarray
    theta: np.ndarray
    delta: float
    frame: str = "macro"
    speed_sq_dev: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if self.theta.shape[1] != len(self.t):
            raise ValueError("theta columns must match the time grid")

    @property
    def n_traj(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def from_trajectories(cls, trajs) -> "Ensemble":
        trajs = list(trajs)
        if not trajs:
            raise ValueError("empty ensemble")
        first = trajs[0]
        for tr in trajs[1:]:
            if tr.frame != first.frame or tr.delta != first.delta:
                raise ValueError("ensemble mixes frames or coupling values")
            if len(tr.t) != len(first.t) or not np.array_equal(tr.t, first.t):
                raise ValueError("ensemble trajectories are sampled on different grids")
        theta = np.stack([tr.theta for tr in trajs])
        dev = []
        for tr in trajs:
            s2 = (tr.v ** 2).sum(axis=1)
            d = float(np.abs(s2 - s2[0]).max())
            lo, hi = tr.meta.get("min_speed"), tr.meta.get("max_speed")
            if lo is not None:
                d = max(d, abs(hi * hi - s2[0]), abs(lo * lo - s2[0]))
            dev.append(d)
        return cls(first.t, theta, first.delta, first.frame, np.array(dev))


def _as_ensemble(ens) -> Ensemble:
    if isinstance(ens, Ensemble):
        return ens
    return Ensemble.from_trajectories(ens)


@dataclass(frozen=True)
class Autocorrelation:
    lags: np.ndarray
    C: np.ndarray
    se: np.ndarray
    batch_means: np.ndarray | None = None


def _batches(n: int, n_batches: int):
    edges = np.linspace(0, n, n_batches + 1).round().astype(int)
    return [slice(edges[i], edges[i + 1]) for i in range(n_batches)]


def direction_autocorrelation(ensemble, lags=None, n_batches: int = MIN_BATCHES,
                              min_traj: int = MIN_TRAJECTORIES) -> Autocorrelation:
    """``C(t) = mean_i cos(theta_i(t) - theta_i(0))`` with batch-means standard errors.

    ``lags`` selects sample times (default: all).  Trajectories are split in
    order into ``n_batches >= 16`` contiguous batches.
    """
    ens = _as_ensemble(ensemble)
    if ens.n_traj < min_traj:
        raise ValueError(f"need at least {min_traj} trajectories, got {ens.n_traj}")
    if n_batches < MIN_BATCHES or n_batches > ens.n_traj:
        raise ValueError(f"n_batches must lie in [{MIN_BATCHES}, n_traj]")
    idx = _lag_indices(ens.t, lags)
    c = np.cos(ens.theta[:, idx] - ens.theta[:, :1])
    c[:, idx == 0] = 1.0
    bm = np.stack([c[sl].mean(axis=0) for sl in _batches(ens.n_traj, n_batches)])
    C = c.mean(axis=0)
    se = bm.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return Autocorrelation(ens.t[idx] - ens.t[0], C, se, bm)


def _lag_indices(t, lags):
    t = np.asarray(t) - t[0]
    if lags is None:
        return np.arange(len(t))
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    step = t[1] - t[0] if len(t) > 1 else 1.0
    idx = np.rint(lags / step).astype(int)
    if np.any(idx < 0) or np.any(idx >= len(t)) or np.any(np.abs(t[idx] - lags) > 1e-9 * max(step, 1)):
        raise ValueError("lags must be sample times of the ensemble")
    return idx


@dataclass(frozen=True)
class DecayFit:
    """Fitted rate of ``C(t) = exp(-a t)``; ``ci`` is a two-sided 95% interval."""

    a_hat: float
    se: float
    ci: tuple
    n_points: int
    window: tuple


def _through_origin(t, y, w):
    sw = (w * t * t).sum()
    return float((w * t * y).sum() / sw)


def fit_decay_rate(table: Autocorrelation, window=(0.2, 0.95)) -> DecayFit:
    """Weighted least squares of ``-log C(t) = a t`` over lags with ``C`` in ``window``.

    The line passes through the origin because ``C(0) = 1``.  Weights are
    ``(C / se)^2``; with zero standard errors the fit is unweighted.  When
    ``C`` never drops below the upper end of the window every positive lag is
    used.  The standard error is a jackknife over batches when batch means
    are available, otherwise propagated from ``se``.
    """
    lo, hi = window
    if not 0 < lo < hi <= 1:
        raise ValueError("window must satisfy 0 < lo < hi <= 1")
    t = np.asarray(table.lags, dtype=float)
    C = np.asarray(table.C, dtype=float)
    se = np.asarray(table.se, dtype=float)
    pos = t > 0
    sel = pos & (C >= lo) & (C <= hi)
    if not sel.any():
        if np.all(C[pos] > hi):
            sel = pos
        else:
            raise ValueError("no lag with C(t) inside the fit window")
    if np.any(C[sel] <= 0.05):
        raise ValueError("C(t) must exceed 0.05 on the fit window")
    tt, y = t[sel], -np.log(C[sel])
    if np.all(se[sel] > 0):
        w = (C[sel] / se[sel]) ** 2
    else:
        w = np.ones_like(tt)
    a = _through_origin(tt, y, w)

    bm = table.batch_means
    if bm is not None and len(bm) >= 2 and np.all(bm[:, sel] > 0):
        nb = len(bm)
        loo = (bm.sum(axis=0) - bm) / (nb - 1)
        reps = np.array([_through_origin(tt, -np.log(row[sel]), w) for row in loo])
        err = math.sqrt((nb - 1) / nb * ((reps - reps.mean()) ** 2).sum())
    else:
        var_y = (se[sel] / C[sel]) ** 2
        err = math.sqrt(float((w * w * tt * tt * var_y).sum())) / float((w * tt * tt).sum())
    z = sps.norm.ppf(0.975)
    return DecayFit(a, err, (a - z * err, a + z * err), int(sel.sum()), (lo, hi))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n: int
    increments: np.ndarray = dc_field(repr=False)


def angle_increments(ensemble, lag: float, disjoint: bool = True) -> np.ndarray:
    """Angle increments ``theta(t + lag) - theta(t)`` at ``t = 0, lag, 2 lag, ...``."""
    ens = _as_ensemble(ensemble)
    t = ens.t - ens.t[0]
    if len(t) < 2:
        raise ValueError("ensemble has a single sample time")
    step = t[1] - t[0]
    if lag < step * (1 - 1e-9):
        raise ValueError("lag is shorter than the sampling step")
    k = int(round(lag / step))
    if abs(k * step - lag) > 1e-9 * lag:
        raise ValueError("lag must be a multiple of the sampling step")
    starts = np.arange(0, len(t) - k, k if disjoint else 1)
    return (ens.theta[:, starts + k] - ens.theta[:, starts]).ravel()


def angle_increment_test(ensemble, lag: float, a_ref: float) -> KSResult:
    """Two-sided KS test of increments over disjoint windows against ``N(0, 2 a lag)``."""
    if a_ref <= 0:
        raise ValueError("reference rate must be positive")
    inc = angle_increments(ensemble, lag)
    res = sps.kstest(inc, "norm", args=(0.0, math.sqrt(2.0 * a_ref * lag)))
    return KSResult(float(res.statistic), float(res.pvalue), len(inc), inc)


@dataclass(frozen=True)
class SpeedBandReport:
    max_dev: float
    bound: float
    ok: bool


def speed_band_report(ensemble, delta: float, D0: float, tolerance: float = 1e-5
                      ) -> SpeedBandReport:
    """``max | |V(t)|^2 - |V(0)|^2 |`` against ``4 sqrt(delta) D0 + tolerance``."""
    ens = _as_ensemble(ensemble)
    if ens.frame != "macro":
        raise ValueError("speed band is stated for macro-frame ensembles")
    if ens.speed_sq_dev is None:
        raise ValueError("ensemble carries no speed information")
    m = float(np.max(ens.speed_sq_dev)) if ens.n_traj else 0.0
    bound = 4.0 * math.sqrt(delta) * D0 + tolerance
    return SpeedBandReport(m, bound, m <= bound)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class EnsembleSummary:
    """Aggregate statistics for one ensemble."""

    delta: float
    n_traj: int
    a_ref: float | None
    acf: Autocorrelation
    fit: DecayFit | None
    ks: KSResult | None
    speed_band: SpeedBandReport | None
    ks_lag: float | None = None
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "delta": self.delta,
            "n_traj": self.n_traj,
            "a_ref": self.a_ref,
            "a_hat": self.fit.a_hat if self.fit else None,
            "a_ci": list(self.fit.ci) if self.fit else None,
            "ks_stat": self.ks.statistic if self.ks else None,
            "ks_p": self.ks.pvalue if self.ks else None,
            "speed_band_max": self.speed_band.max_dev if self.speed_band else None,
            "lags": [float(x) for x in self.acf.lags],
            "C": [float(x) for x in self.acf.C],
            "se": [float(x) for x in self.acf.se],
        }
        d.update(self.extra)
        return {k: _jsonable(v) for k, v in d.items()}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "C", "se"])
            for row in zip(self.acf.lags, self.acf.C, self.acf.se):
                w.writerow([repr(float(v)) for v in row])


def summarize(ensemble, a_ref=None, *, ks_lag=None, D0=None, window=(0.2, 0.95),
              n_batches: int = MIN_BATCHES, speed_tolerance: float = 1e-5) -> EnsembleSummary:
    """Run the whole battery on one ensemble.

    The decay fit is skipped when ``C`` leaves the admissible range, and the KS
    test when ``a_ref`` is missing or zero.
    """
    ens = _as_ensemble(ensemble)
    acf = direction_autocorrelation(ens, n_batches=n_batches)
    try:
        fit = fit_decay_rate(acf, window)
    except ValueError:
        fit = None
    ks = None
    if ks_lag is not None and a_ref:
        ks = angle_increment_test(ens, ks_lag, a_ref)
    band = None
    if D0 is not None and ens.speed_sq_dev is not None:
        band = speed_band_report(ens, ens.delta, D0, speed_tolerance)
    return EnsembleSummary(ens.delta, ens.n_traj, a_ref, acf, fit, ks, band, ks_lag)
