"""Experiment configuration, seeding, parallel ensembles and result files.

A run is described by one JSON document (see :data:`CONFIG_SCHEMA`).  Every
trajectory ``i`` draws its own field realization from the seed stream
``SeedSequence(seed, spawn_key=(i,))``, so results do not depend on how the
trajectories are distributed over workers, and ``n_traj = 1`` reproduces the
first trajectory of any larger run.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .coefficients import angular_coefficient
from .dynamics import (FieldDomainError, geometric_dt, integrate_rescaled, select_dt,
                       simulate_circle_diffusion)
from .field import (BumpFieldSpec, GaussianSpectralDensity, PolynomialBump, SpectralFieldSpec,
                    build_bump_field, build_spectral_field)
from .stats import Ensemble, angle_increments, summarize

__all__ = [
    "CONFIG_SCHEMA", "ConfigError", "RunError", "ExperimentConfig", "load_config",
    "load_preset", "list_presets", "trajectory_seed", "build_field", "run_experiment",
    "convergence_sweep", "calibrate", "check_sweep", "run_cutoff_experiment", "RunResult",
]

log = logging.getLogger(__name__)

MAX_BUMP_CENTERS = 2_000_000
CALIBRATION_KEY = 2 ** 31 - 1

_dt_policy = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["geometric", "audited", "fixed"]},
        "factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "dt_micro": {"type": "number", "exclusiveMinimum": 0},
        "energy_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "probe_T_macro": {"type": "number", "exclusiveMinimum": 0},
        "probe_n_traj": {"type": "integer", "minimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "wavedrift experiment",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "field": {
            "oneOf": [
                {"type": "object",
                 "properties": {
                     "kind": {"const": "spectral"},
                     "correlation_length": {"type": "number", "exclusiveMinimum": 0},
                     "variance": {"type": "number", "minimum": 0},
                     "n_modes": {"type": "integer", "minimum": 1},
                     "angular_sampling": {"enum": ["iid", "stratified"]}},
                 "required": ["kind"], "additionalProperties": False},
                {"type": "object",
                 "properties": {
                     "kind": {"const": "bump"},
                     "intensity": {"type": "number", "minimum": 0},
                     "amplitude": {"type": "number"},
                     "radius": {"type": "number", "exclusiveMinimum": 0},
                     "power": {"type": "integer", "minimum": 3}},
                 "required": ["kind"], "additionalProperties": False},
            ]
        },
        "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                              "maximum": 1},
                   "minItems": 1, "uniqueItems": True},
        "T_macro": {"type": "number", "exclusiveMinimum": 0},
        "output_step_macro": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "dt_policy": _dt_policy,
        "n_traj": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "v0": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "chunk_size": {"type": "integer", "minimum": 1},
        "energy_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "output_dir": {"type": "string"},
        "statistics": {
            "type": "object",
            "properties": {
                "ks_lag_macro": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "window": {"type": "array", "items": {"type": "number"},
                           "minItems": 2, "maxItems": 2},
                "n_batches": {"type": "integer", "minimum": 16},
                "ks_blocks": {"type": "integer", "minimum": 1},
                "ks_alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "ks_min_pass": {"type": ["integer", "null"], "minimum": 0},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "speed_tolerance": {"type": "number", "minimum": 0},
                "calibration": {"type": "boolean"},
                "calibration_substeps": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "cutoff": {
            "type": ["object", "null"],
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": ["array", "null"], "items": {"type": "number"},
                        "minItems": 8, "maxItems": 8},
                "M": {"type": "number"},
                "mode": {"enum": ["illustrative", "strict"]},
                "delta_star": {"type": "number", "exclusiveMinimum": 0},
                "T_macro": {"type": "number", "exclusiveMinimum": 0},
                "n_traj": {"type": "integer", "minimum": 1},
                "p4_factors": {"type": "array", "items": {"type": "integer", "minimum": 1},
                               "minItems": 1},
                "derivative_probes": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "required": ["field", "deltas", "T_macro", "n_traj", "seed"],
    "additionalProperties": False,
}

DEFAULTS = {
    "name": "experiment",
    "output_step_macro": None,
    "dt_policy": {"kind": "geometric", "factor": 0.05},
    "v0": [1.0, 0.0],
    "chunk_size": 64,
    "energy_tolerance": 1e-6,
    "output_dir": "wavedrift-out",
    "statistics": {"ks_lag_macro": None, "window": [0.2, 0.95], "n_batches": 16,
                   "ks_blocks": 1, "ks_alpha": 0.01, "ks_min_pass": None, "rel_tol": 0.15,
                   "speed_tolerance": 1e-5, "calibration": False,
                   "calibration_substeps": 10},
    "cutoff": None,
}

CUTOFF_DEFAULTS = {"delta": 0.01, "eps": None, "M": 11.0, "mode": "illustrative",
                   "delta_star": 0.1, "T_macro": 1.0, "n_traj": 16, "p4_factors": [1, 2],
                   "derivative_probes": 0}

FIELD_DEFAULTS = {
    "spectral": {"correlation_length": 1.0, "variance": 1.0, "n_modes": 256,
                 "angular_sampling": "iid"},
    "bump": {"intensity": 1.0, "amplitude": 1.0, "radius": 1.0, "power": 4},
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


class RunError(RuntimeError):
    """A worker failed; completed chunks are checkpointed and the run can resume."""


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_multiple(x, step):
    n = x / step
    return abs(n - round(n)) <= 1e-9 * max(1.0, n)


@dataclass
class ExperimentConfig:
    """Validated experiment description (all defaults filled in)."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errs = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errs:
            raise ConfigError([f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: "
                               f"{e.message}" for e in errs])
        d = _merge(DEFAULTS, raw)
        d["field"] = _merge(FIELD_DEFAULTS[raw["field"]["kind"]], raw["field"])
        if raw.get("cutoff") is not None:
            d["cutoff"] = _merge(CUTOFF_DEFAULTS, raw["cutoff"])
        d["deltas"] = sorted((float(x) for x in d["deltas"]), reverse=True)
        cfg = cls(d)
        cfg._cross_check()
        return cfg

    # convenient accessors
    def __getitem__(self, key):
        return self.data[key]

    @property
    def v0(self) -> np.ndarray:
        return np.asarray(self.data["v0"], dtype=float)

    @property
    def speed(self) -> float:
        return float(math.hypot(*self.data["v0"]))

    @property
    def stats(self) -> dict:
        return self.data["statistics"]

    @property
    def output_step(self) -> float:
        s = self.data["output_step_macro"]
        return float(s) if s is not None else self.data["T_macro"] / 40

    def field_spec(self):
        f = self.data["field"]
        if f["kind"] == "spectral":
            return SpectralFieldSpec(GaussianSpectralDensity.isotropic(f["correlation_length"]),
                                     n_modes=f["n_modes"], variance=f["variance"],
                                     angular_sampling=f["angular_sampling"])
        prof = PolynomialBump(f["amplitude"], f["radius"], f["power"])
        return BumpFieldSpec(prof, f["intensity"])

    def correlation_model(self):
        return self.field_spec().correlation()

    def a_ref(self) -> float:
        """Angular rate of the limit diffusion at ``|v0|``."""
        spec = self.field_spec()
        if isinstance(spec, SpectralFieldSpec) and spec.variance == 0:
            return 0.0
        if isinstance(spec, BumpFieldSpec) and (spec.intensity == 0
                                                or spec.profile.amplitude == 0):
            return 0.0
        a = angular_coefficient(self.correlation_model(), self.speed)
        if not isinstance(a, float):
            raise ConfigError(["field: the angular rate depends on direction; no scalar "
                               "reference is available"])
        return a

    def correlation_length(self) -> float:
        f = self.data["field"]
        return float(f["correlation_length"] if f["kind"] == "spectral" else f["radius"])

    def digest(self) -> str:
        """Hash of everything that affects the numbers (not the output location)."""
        d = {k: v for k, v in self.data.items() if k not in ("output_dir", "name")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def replace(self, **kw) -> "ExperimentConfig":
        raw = _merge(self.data, kw)
        if raw.get("cutoff") is None:
            raw.pop("cutoff", None)
        return ExperimentConfig.from_dict(raw)

    def _cross_check(self):
        d = self.data
        errs = []
        v0 = self.v0
        if not np.any(v0):
            errs.append("v0: initial momentum must be nonzero")
        T = d["T_macro"]
        step = self.output_step
        if step > T:
            errs.append("output_step_macro: longer than T_macro")
        elif not _is_multiple(T, step):
            errs.append(f"output_step_macro: T_macro={T} is not a multiple of {step}")
        st = d["statistics"]
        lag = st["ks_lag_macro"]
        if lag is not None:
            if lag < step * (1 - 1e-9):
                errs.append(f"statistics/ks_lag_macro: lag {lag} is shorter than the "
                            f"sampling step {step}")
            elif not _is_multiple(lag, step):
                errs.append(f"statistics/ks_lag_macro: lag {lag} is not a multiple of the "
                            f"sampling step {step}")
            elif lag > T:
                errs.append("statistics/ks_lag_macro: lag exceeds T_macro")
        lo, hi = st["window"]
        if not 0 < lo < hi <= 1:
            errs.append("statistics/window: need 0 < lo < hi <= 1")
        nb = st["n_batches"]
        if d["n_traj"] >= 64 and nb > d["n_traj"]:
            errs.append("statistics/n_batches: more batches than trajectories")
        if st["ks_blocks"] > d["n_traj"]:
            errs.append("statistics/ks_blocks: more blocks than trajectories")
        if st["ks_min_pass"] is not None and st["ks_min_pass"] > st["ks_blocks"]:
            errs.append("statistics/ks_min_pass: exceeds ks_blocks")
        pol = d["dt_policy"]
        ell = self.correlation_length()
        if pol["kind"] == "fixed":
            if "dt_micro" not in pol:
                errs.append("dt_policy/dt_micro: required for the fixed policy")
            else:
                # worst case over the deltas: the strongest coupling
                dmax = max(d["deltas"])
                limit = 0.05 * ell / math.sqrt(self.speed ** 2 + 4 * math.sqrt(dmax)
                                               * self._D0_guess())
                if pol["dt_micro"] > limit:
                    errs.append(f"dt_policy/dt_micro: {pol['dt_micro']} exceeds 0.05 "
                                f"correlation lengths per step at the largest speed "
                                f"(limit {limit:.4g})")
        if pol["kind"] == "audited" and "energy_tolerance" not in pol:
            pol["energy_tolerance"] = d["energy_tolerance"]
        # angle unwrapping needs per-step turns well below pi/4
        if not errs:
            try:
                a = self.a_ref()
            except ConfigError as e:
                errs.extend(e.errors)
                a = 0.0
            for delta in d["deltas"]:
                dt = self._dt_estimate(delta)
                turn = 4 * math.sqrt(2 * a * delta * dt) if a > 0 else 0.0
                if turn >= math.pi / 4:
                    errs.append(f"dt_policy: per-step angle change {turn:.3g} at "
                                f"delta={delta} is not below pi/4")
        c = d.get("cutoff")
        if c is not None and c["eps"] is not None and len(c["eps"]) != 8:
            errs.append("cutoff/eps: need eight exponents")
        if c is not None and not c["M"] > 10:
            errs.append(f"cutoff/M: M > 10 violated (M={c['M']})")
        if errs:
            raise ConfigError(errs)

    def _D0_guess(self) -> float:
        f = self.data["field"]
        if f["kind"] == "spectral":
            return 6.0 * math.sqrt(f["variance"])
        mean = f["intensity"] * math.pi * f["radius"] ** 2 / (f["power"] + 1)
        return abs(f["amplitude"]) * max(1.0, 4 * mean + 4)

    def _dt_estimate(self, delta) -> float:
        pol = self.data["dt_policy"]
        if pol["kind"] == "fixed":
            return pol["dt_micro"]
        vmax = math.sqrt(self.speed ** 2 + 4 * math.sqrt(delta) * self._D0_guess())
        return pol.get("factor", 0.05) * self.correlation_length() / vmax


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError([f"<file>: not valid JSON ({e})"]) from None
    if isinstance(raw, dict) and "preset" in raw:
        base = _preset_raw(raw.pop("preset"))
        raw = _merge(base, raw)
    return ExperimentConfig.from_dict(raw)


def list_presets() -> list:
    return sorted(p.name[:-5] for p in resources.files("wavedrift.presets").iterdir()
                  if p.name.endswith(".json"))


def _preset_raw(name) -> dict:
    path = resources.files("wavedrift.presets") / f"{name}.json"
    if not path.is_file():
        raise ConfigError([f"preset: unknown preset {name!r} (have {list_presets()})"])
    return json.loads(path.read_text())


def load_preset(name: str, **overrides) -> ExperimentConfig:
    """Bundled configuration ``name``, optionally with top-level overrides."""
    return ExperimentConfig.from_dict(_merge(_preset_raw(name), overrides))


# ---------------------------------------------------------------------------
# fields and seeds


def trajectory_seed(master: int, i: int) -> np.random.SeedSequence:
    """Seed stream of trajectory ``i``; independent of every other index."""
    return np.random.SeedSequence(int(master), spawn_key=(int(i),))


def build_field(cfg: ExperimentConfig, seed, delta: float, T_macro: float | None = None):
    """Field realization for one trajectory at coupling ``delta``.

    Bump fields are sampled on a window covering every point the particle can
    reach by ``T_macro``.
    """
    spec = cfg.field_spec()
    if isinstance(spec, SpectralFieldSpec):
        return build_spectral_field(spec, seed)
    T = cfg["T_macro"] if T_macro is None else T_macro
    vmax = math.sqrt(cfg.speed ** 2 + 4 * math.sqrt(delta) * cfg._D0_guess())
    R = vmax * T / delta + 2 * spec.profile.radius
    side = 2 * (R + spec.padding)
    expected = spec.intensity * side * side
    if expected > MAX_BUMP_CENTERS:
        raise ConfigError([f"field: a bump field reaching {R:.3g} micro units holds about "
                           f"{expected:.3g} centers at delta={delta}, above the limit "
                           f"{MAX_BUMP_CENTERS}; lower intensity, T_macro or 1/delta"])
    return build_bump_field(spec, (-R, R, -R, R), seed)


def decide_dt(cfg: ExperimentConfig, delta: float) -> tuple:
    """Micro step shared by a whole delta block.

    Starts from the worst-case geometric step; the audited policy then halves
    it until ``probe_n_traj`` realizations (default 8) integrated over
    ``probe_T_macro`` (default ``T_macro``) keep a quarter of the tolerance.
    """
    pol = cfg["dt_policy"]
    if pol["kind"] == "fixed":
        return float(pol["dt_micro"]), {"policy": "fixed"}
    field = build_field(cfg, trajectory_seed(cfg["seed"], 0), delta)
    factor = pol.get("factor", 0.05)
    # worst case over starting points and realizations, since dt is shared
    dt = min(geometric_dt(field, cfg.speed, delta, factor=factor),
             cfg._dt_estimate(delta))
    if pol["kind"] == "geometric":
        return float(dt), {"policy": "geometric", "factor": factor}
    tol = pol["energy_tolerance"] * (1 + cfg.speed ** 2)
    probe = pol.get("probe_T_macro", cfg["T_macro"])
    # the drift varies between realizations; audit several full-length paths
    hist = []
    for i in range(min(pol.get("probe_n_traj", 8), cfg["n_traj"])):
        f = field if i == 0 else build_field(cfg, trajectory_seed(cfg["seed"], i), delta)
        dt, h = select_dt(f, delta, cfg.v0, tol, probe_T_macro=probe, dt0=dt)
        hist.extend(h)
    return float(dt), {"policy": "audited", "tolerance": tol,
                       "halvings": [[float(a), float(b)] for a, b in hist]}


# ---------------------------------------------------------------------------
# workers


def _run_chunk(payload):
    cfg = ExperimentConfig(payload["cfg"])
    delta, dt, idx = payload["delta"], payload["dt"], payload["indices"]
    T, step = cfg["T_macro"], cfg.output_step
    v0 = cfg.v0
    thetas, dev, edev, d0 = [], [], [], []
    for i in idx:
        ss = trajectory_seed(cfg["seed"], i)
        field = build_field(cfg, ss, delta)
        tr = integrate_rescaled(field, delta, (0.0, 0.0), v0, T, dt, output_step=step,
                                seed=int(i), check_dt=False)
        thetas.append(tr.theta)
        s2 = float(v0 @ v0)
        dev.append(max(abs(tr.meta["max_speed"] ** 2 - s2), abs(tr.meta["min_speed"] ** 2 - s2)))
        edev.append(tr.meta["max_energy_dev"])
        d0.append(field.bounds[0])
        t = tr.t
    return {"indices": np.asarray(idx), "t": t, "theta": np.array(thetas),
            "speed_sq_dev": np.array(dev), "energy_dev": np.array(edev),
            "D0": min(d0)}


def _chunks(n, size):
    return [list(range(s, min(s + size, n))) for s in range(0, n, size)]


def _map(fn, payloads, workers):
    if workers <= 1 or len(payloads) <= 1:
        for p in payloads:
            yield fn(p)
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, p) for p in payloads]
        for f in futures:
            yield f.result()


def _dtag(delta) -> str:
    return f"{delta:g}"


def _run_block(cfg: ExperimentConfig, delta: float, dt: float, workers: int,
               ckpt: Path | None):
    chunks = _chunks(cfg["n_traj"], cfg["chunk_size"])
    results = [None] * len(chunks)
    todo = []
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)
        manifest = ckpt / "manifest.json"
        meta = {"digest": cfg.digest(), "delta": delta, "dt": dt}
        if manifest.exists():
            old = json.loads(manifest.read_text())
            if old != meta:
                raise RunError(f"checkpoint {ckpt} belongs to a different configuration; "
                               "remove it or choose another output directory")
        else:
            manifest.write_text(json.dumps(meta, sort_keys=True))
    for c, idx in enumerate(chunks):
        f = None if ckpt is None else ckpt / f"chunk_{c:05d}.npz"
        if f is not None and f.exists():
            with np.load(f) as z:
                results[c] = {k: z[k] for k in z.files}
        else:
            todo.append(c)
    payloads = [{"cfg": cfg.data, "delta": delta, "dt": dt, "indices": chunks[c]}
                for c in todo]
    try:
        for c, res in zip(todo, _map(_run_chunk, payloads, workers)):
            results[c] = res
            if ckpt is not None:
                tmp = ckpt / f"chunk_{c:05d}.tmp.npz"
                np.savez(tmp, **res)
                os.replace(tmp, ckpt / f"chunk_{c:05d}.npz")
    except FieldDomainError as e:
        raise RunError(f"delta={delta}: {e}") from e
    except ConfigError:
        raise
    except Exception as e:  # worker crash: keep what is checkpointed
        raise RunError(f"delta={delta}: worker failed ({type(e).__name__}: {e}); "
                       "completed chunks are checkpointed") from e
    theta = np.concatenate([r["theta"] for r in results])
    return {"t": results[0]["t"], "theta": theta,
            "speed_sq_dev": np.concatenate([r["speed_sq_dev"] for r in results]),
            "energy_dev": np.concatenate([r["energy_dev"] for r in results]),
            "D0": float(min(np.min(r["D0"]) for r in results))}


# ---------------------------------------------------------------------------
# statistics of one block


def _ks_blocks(ens: Ensemble, lag, a_ref, n_blocks, alpha):
    from scipy import stats as sps

    edges = np.linspace(0, ens.n_traj, n_blocks + 1).round().astype(int)
    pvals = []
    for b in range(n_blocks):
        sub = Ensemble(ens.t, ens.theta[edges[b]:edges[b + 1]], ens.delta, ens.frame)
        inc = angle_increments(sub, lag)
        pvals.append(float(sps.kstest(inc, "norm",
                                      args=(0.0, math.sqrt(2 * a_ref * lag))).pvalue))
    return {"n_blocks": n_blocks, "alpha": alpha, "pvalues": pvals,
            "n_pass": int(sum(p > alpha for p in pvals))}


def _summarize_block(cfg, ens, a_ref, D0, extra):
    st = cfg.stats
    lag = st["ks_lag_macro"]
    summ = summarize(ens, a_ref, ks_lag=lag if a_ref else None, D0=D0,
                     window=tuple(st["window"]),
                     n_batches=min(st["n_batches"], max(ens.n_traj, 1)),
                     speed_tolerance=st["speed_tolerance"]) if ens.n_traj >= 64 else None
    if summ is None:
        return None
    if lag is not None and a_ref and st["ks_blocks"] > 1:
        extra["ks_blocks"] = _ks_blocks(ens, lag, a_ref, st["ks_blocks"], st["ks_alpha"])
    if summ.fit is not None and a_ref is not None:
        extra["abs_err"] = abs(summ.fit.a_hat - a_ref)
    summ.extra.update(extra)
    return summ


def _f(x):
    return None if x is None else float(x)


@dataclass
class RunResult:
    out_dir: Path | None
    summaries: dict
    a_ref: float
    audit_ok: bool
    audit: dict
    ensembles: dict = dc_field(default_factory=dict, repr=False)
    calibration: object = None

    def table(self) -> list:
        rows = []
        for delta in sorted(self.summaries, reverse=True):
            s = self.summaries[delta]
            d = s.to_dict() if s is not None else {}
            rows.append({"delta": delta, "a_hat": d.get("a_hat"),
                         "ci_lo": _f((d.get("a_ci") or [None, None])[0]),
                         "ci_hi": _f((d.get("a_ci") or [None, None])[1]),
                         "a_ref": self.a_ref, "abs_err": d.get("abs_err"),
                         "ks_p": d.get("ks_p")})
        return rows


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1,
                   resume: bool = True, keep_ensembles: bool = False) -> RunResult:
    """Integrate ``n_traj`` trajectories for every delta and summarize each block.

    Writes ``summary_delta_<d>.json`` and ``acf_delta_<d>.csv`` per delta, the
    resolved configuration and a ``run_log.json`` with timings into
    ``out_dir``; chunk checkpoints go to ``out_dir/checkpoints``.  Summaries
    contain no timing or host information, so they are byte-identical for
    identical configurations.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", cfg.to_dict())
    a_ref = cfg.a_ref()
    summaries, audit, ensembles, timings = {}, {}, {}, {}
    tol = cfg["energy_tolerance"] * (1 + cfg.speed ** 2)
    audit_ok = True
    for delta in cfg["deltas"]:
        t0 = time.perf_counter()
        dt, dt_info = decide_dt(cfg, delta)
        ckpt = (out / "checkpoints" / f"delta_{_dtag(delta)}") if (out and resume) else None
        blk = _run_block(cfg, delta, dt, workers, ckpt)
        ens = Ensemble(blk["t"], blk["theta"], delta, "macro", blk["speed_sq_dev"])
        emax = float(blk["energy_dev"].max())
        ok = emax <= tol
        audit_ok &= ok
        audit[delta] = {"max_energy_drift": emax, "tolerance": tol, "ok": ok}
        extra = {"dt_micro": dt, "dt_policy": dt_info["policy"], "max_energy_drift": emax,
                 "energy_ok": ok, "output_step_macro": cfg.output_step,
                 "T_macro": cfg["T_macro"], "D0": blk["D0"]}
        summ = _summarize_block(cfg, ens, a_ref, blk["D0"], extra)
        summaries[delta] = summ
        if keep_ensembles:
            ensembles[delta] = ens
        if out is not None and summ is not None:
            summ.to_json(out / f"summary_delta_{_dtag(delta)}.json")
            summ.to_csv(out / f"acf_delta_{_dtag(delta)}.csv")
        timings[_dtag(delta)] = {"seconds": time.perf_counter() - t0, "dt_info": dt_info}
        log.info("delta=%g: %d trajectories in %.1fs", delta, cfg["n_traj"],
                 timings[_dtag(delta)]["seconds"])
    res = RunResult(out, summaries, a_ref, audit_ok, audit, ensembles)
    if out is not None:
        _write_json(out / "run_log.json", {"workers": workers, "timings": timings})
    return res


# ---------------------------------------------------------------------------
# calibration and sweeps


def calibrate(cfg: ExperimentConfig, a_ref: float | None = None):
    """Run the statistics battery on circle-diffusion paths with the reference rate."""
    a = cfg.a_ref() if a_ref is None else a_ref
    sub = cfg.stats["calibration_substeps"]
    step = cfg.output_step
    seed = trajectory_seed(cfg["seed"], CALIBRATION_KEY)
    paths = simulate_circle_diffusion(a, math.atan2(cfg.v0[1], cfg.v0[0]), cfg.speed,
                                      cfg["T_macro"], step / sub, seed,
                                      n_paths=cfg["n_traj"], stride=sub)
    t = paths[0].t
    ens = Ensemble(t, np.stack([p.theta for p in paths]), 0.0, "macro",
                   np.zeros(len(paths)))
    return _summarize_block(cfg, ens, a, None, {"simulator": "circle-diffusion"})


def convergence_sweep(cfg: ExperimentConfig, out_dir=None, workers: int = 1,
                      resume: bool = True) -> RunResult:
    """:func:`run_experiment` over at least two deltas plus the convergence table
    ``convergence.csv`` (delta, a_hat, ci_lo, ci_hi, a_ref, abs_err, ks_p), sorted
    by decreasing delta, and the circle-diffusion calibration when enabled."""
    if len(cfg["deltas"]) < 2:
        raise ConfigError(["deltas: a sweep needs at least two values"])
    res = run_experiment(cfg, out_dir, workers, resume)
    if cfg.stats["calibration"] and res.a_ref > 0:
        res.calibration = calibrate(cfg, res.a_ref)
    if res.out_dir is not None:
        rows = res.table()
        with open(res.out_dir / "convergence.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if v is None else repr(float(v))) for k, v in r.items()})
        _write_json(res.out_dir / "convergence.json", rows)
        if res.calibration is not None:
            res.calibration.to_json(res.out_dir / "calibration.json")
    return res


def _battery(summ, a_ref, st) -> dict:
    out = {}
    if summ is None or summ.fit is None:
        return {"fit": False}
    err = abs(summ.fit.a_hat - a_ref)
    out["fit"] = err <= st["rel_tol"] * a_ref if a_ref > 0 else err <= st["rel_tol"]
    kb = summ.extra.get("ks_blocks")
    if kb is not None:
        need = st["ks_min_pass"]
        if need is None:
            need = math.ceil(0.9 * kb["n_blocks"])
        out["ks"] = kb["n_pass"] >= need
    elif summ.ks is not None:
        out["ks"] = summ.ks.pvalue > st["ks_alpha"]
    return out


def check_sweep(res: RunResult, cfg: ExperimentConfig) -> dict:
    """Statistical acceptance of a sweep.

    At the smallest delta the fitted rate must lie within ``rel_tol`` of the
    reference and be closer to it than at the largest delta; angle increments
    must pass the KS test (in at least ``ks_min_pass`` blocks, default 90%).
    The calibration ensemble, when present, must pass the same battery.
    """
    st = cfg.stats
    small, large = min(res.summaries), max(res.summaries)
    items = {}
    bat = _battery(res.summaries[small], res.a_ref, st)
    items.update({f"{k}_smallest_delta": v for k, v in bat.items()})
    s_small, s_large = res.summaries[small], res.summaries[large]
    if res.a_ref > 0 and s_small is not None and s_large is not None \
            and s_small.fit is not None and s_large.fit is not None:
        items["error_decreases"] = (abs(s_small.fit.a_hat - res.a_ref)
                                    < abs(s_large.fit.a_hat - res.a_ref))
    if res.calibration is not None:
        items.update({f"calibration_{k}": v
                      for k, v in _battery(res.calibration, res.a_ref, st).items()})
    items = {k: bool(v) for k, v in items.items()}
    report = {"ok": all(items.values()), "checks": items}
    if res.out_dir is not None:
        _write_json(res.out_dir / "check.json", report)
    return report


# ---------------------------------------------------------------------------
# cut-off experiments


def _cutoff_params(cfg):
    from .cutoff import DEFAULT_EPS, derive_params

    c = cfg["cutoff"]
    eps = DEFAULT_EPS if c["eps"] is None else tuple(c["eps"])
    field0 = build_field(cfg, trajectory_seed(cfg["seed"], 0), c["delta"], c["T_macro"])
    return derive_params(c["delta"], eps, c["M"], field0.D_tilde, c["mode"], c["delta_star"])


def _run_cutoff_chunk(payload):
    from .cutoff import (check_path_geometry, check_transversality, occupancy_table,
                         integrate_modified, sample_reentry_pairs)
    from .cutoff.params import CutoffParams

    cfg = ExperimentConfig(payload["cfg"])
    c = cfg["cutoff"]
    pd = dict(payload["params"])
    pd["eps"] = tuple(pd["eps"])
    pd["notes"] = tuple(pd["notes"])
    pd["overrides"] = tuple(pd["overrides"])
    params = CutoffParams(**pd)
    out = []
    for i in payload["indices"]:
        field = build_field(cfg, trajectory_seed(cfg["seed"], i), c["delta"], c["T_macro"])
        tr, hist, rep = integrate_modified(field, c["delta"], params, (0.0, 0.0), cfg.v0,
                                           c["T_macro"], seed=int(i))
        lem_tau = check_path_geometry(hist, until=rep.tau)
        lem_all = check_path_geometry(hist)
        trans = check_transversality(hist)
        occ = {f: [(r.k, r.measure, r.reference_scale)
                   for r in occupancy_table(hist, params.p4 * f)] for f in c["p4_factors"]}
        pairs = sample_reentry_pairs(hist)
        out.append({"traj": int(i), "report": rep.to_dict(), "verified": rep.verify(hist),
                    "geometry_tau": lem_tau.to_dict(), "geometry_all": lem_all.to_dict(),
                    "transversality": trans.to_dict(), "occupancy": occ,
                    "reentry": [p.to_dict() for p in pairs],
                    "frac_theta_zero": tr.meta["frac_theta_zero"]})
    return out


def run_cutoff_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1,
                          report_path=None) -> dict:
    """Modified dynamics on ``cutoff.n_traj`` trajectories with all path checks.

    Writes ``stop_reports.json`` (one stopping-time report per trajectory),
    ``occupancy/traj_<i>.csv`` (k, measure, reference_scale) and
    ``cutoff_summary.json``.
    """
    from .cutoff import write_occupancy_csv, OccupancyRecord

    if cfg["cutoff"] is None:
        raise ConfigError(["cutoff: section required for cut-off runs"])
    c = cfg["cutoff"]
    params = _cutoff_params(cfg)
    chunks = _chunks(c["n_traj"], max(1, min(cfg["chunk_size"], 16)))
    payloads = [{"cfg": cfg.data, "params": params.to_dict(), "indices": idx} for idx in chunks]
    rows = []
    for res in _map(_run_cutoff_chunk, payloads, workers):
        rows.extend(res)
    reports = [dict(r["report"], traj=r["traj"]) for r in rows]
    pairs = [p for r in rows for p in r["reentry"]]
    prem = [p for p in pairs if all(p["premises"].values())]
    ratios = {}
    for f in c["p4_factors"]:
        vals = [m / s for r in rows for (_, m, s) in r["occupancy"][f]]
        ratios[str(f)] = max(vals) if vals else 0.0
    summary = {
        "params": params.to_dict(),
        "n_traj": len(rows),
        "witnesses_verified": all(r["verified"] for r in rows),
        "n_tau_finite": sum(r["report"]["tau"] is not None for r in rows),
        "geometry_up_to_tau_ok": all(r["geometry_tau"]["ok"] for r in rows),
        "geometry_whole_path_ok": all(r["geometry_all"]["ok"] for r in rows),
        "transversality_ok": all(r["transversality"]["ok"] for r in rows),
        "transversality_checked": sum(r["transversality"]["n_checked"] for r in rows),
        "transversality_cell_violations": sum(r["transversality"]["cell_violations"]
                                              for r in rows),
        "reentry_pairs": len(pairs),
        "reentry_pairs_with_premises": len(prem),
        "reentries_with_premises": sum(p["reentered"] for p in prem),
        "occupancy_max_ratio": ratios,
        "mean_frac_theta_zero": float(np.mean([r["frac_theta_zero"] for r in rows])),
    }
    summary["ok"] = bool(summary["witnesses_verified"] and summary["geometry_up_to_tau_ok"]
                         and summary["transversality_ok"]
                         and summary["reentries_with_premises"] == 0)
    if c["derivative_probes"]:
        from .cutoff import derivative_scaling

        field0 = build_field(cfg, trajectory_seed(cfg["seed"], 0), c["delta"], c["T_macro"])
        deriv = derivative_scaling(field0, c["delta"], params, (0.0, 0.0), cfg.v0,
                                   c["T_macro"], n_probes=c["derivative_probes"],
                                   seed=cfg["seed"])
        summary["derivative_scaling"] = {k: deriv[k] for k in ("C_dy", "C_dv", "checks", "ok")}
    if out_dir is not None:
        out = Path(out_dir)
        (out / "occupancy").mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", cfg.to_dict())
        _write_json(out / "stop_reports.json", reports)
        for r in rows:
            recs = [OccupancyRecord(k, m, s) for (k, m, s) in r["occupancy"][c["p4_factors"][0]]]
            write_occupancy_csv(recs, out / "occupancy" / f"traj_{r['traj']:05d}.csv")
        _write_json(out / "cutoff_summary.json", summary)
    if report_path is not None:
        _write_json(report_path, reports[0] if len(reports) == 1 else reports)
    return summary
