"""Command line entry point ``wavedrift``.

Exit codes: 0 success, 2 configuration error, 3 numerical audit failure,
4 statistical acceptance failure (``sweep --check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AUDIT = 3
EXIT_STATS = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavedrift",
                                description="Particles in weak random potentials.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help="experiment JSON file, or preset:<name> for a bundled preset")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("--out", help="output directory (default: config output_dir)")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("coeffs", help="limit diffusion coefficients at v0"))
    common(sub.add_parser("run", help="simulate every delta of the configuration"))
    sw = common(sub.add_parser("sweep", help="convergence table over the deltas"))
    sw.add_argument("--check", action="store_true",
                    help="apply the statistical acceptance checks (exit 4 on failure)")
    sw.add_argument("--no-resume", action="store_true", help="ignore existing checkpoints")
    co = common(sub.add_parser("cutoff-run", help="cut-off dynamics with path checks"))
    co.add_argument("--delta", type=float)
    co.add_argument("--eps", help="eight comma-separated exponents e1,...,e8")
    co.add_argument("--mode", choices=["illustrative", "strict"])
    co.add_argument("--report", help="write the stopping-time report(s) here")
    return p


def _load(args):
    from .harness import ConfigError, load_config, load_preset

    src = args.config
    if src.startswith("preset:"):
        cfg = load_preset(src.split(":", 1)[1])
    else:
        if not Path(src).is_file():
            raise ConfigError([f"--config: no such file {src}"])
        cfg = load_config(src)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.command == "cutoff-run":
        c = dict(cfg["cutoff"] or {})
        if args.delta is not None:
            c["delta"] = args.delta
        if args.eps is not None:
            try:
                c["eps"] = [float(x) for x in args.eps.split(",")]
            except ValueError:
                raise ConfigError(["--eps: expected comma-separated numbers"]) from None
        if args.mode is not None:
            c["mode"] = args.mode
        over["cutoff"] = c
    if over:
        cfg = cfg.replace(**over)
    out = Path(args.out or cfg["output_dir"])
    return cfg, out


def _coeffs(cfg, out):
    from .coefficients import coefficients, verify_divergence_identity

    model = cfg.correlation_model()
    c = coefficients(model, cfg.v0)
    res = verify_divergence_identity(model, cfg.v0)
    d = {"v": c.v.tolist(), "D": np.asarray(c.D).tolist(), "E": np.asarray(c.E).tolist(),
         "a": float(c.a), "divergence_residual": float(np.max(res))}
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "coeffs.json", "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(d, indent=2, sort_keys=True))
    return EXIT_OK


def _print_table(res):
    print(f"{'delta':>10} {'a_hat':>10} {'a_ref':>10} {'abs_err':>10} {'ks_p':>10}")
    for r in res.table():
        fmt = lambda x: "-" if x is None else f"{x:.4g}"  # noqa: E731
        print(f"{r['delta']:>10g} {fmt(r['a_hat']):>10} {fmt(r['a_ref']):>10} "
              f"{fmt(r['abs_err']):>10} {fmt(r['ks_p']):>10}")


def main(argv=None) -> int:
    from .cutoff import ConstraintError
    from .harness import (ConfigError, RunError, check_sweep, convergence_sweep,
                          run_cutoff_experiment, run_experiment)

    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out = _load(args)
        if args.workers < 1:
            raise ConfigError(["--workers: must be at least 1"])
        if args.command == "coeffs":
            return _coeffs(cfg, out)
        if args.command == "run":
            res = run_experiment(cfg, out, args.workers)
            _print_table(res)
            return EXIT_OK if res.audit_ok else EXIT_AUDIT
        if args.command == "sweep":
            res = convergence_sweep(cfg, out, args.workers, resume=not args.no_resume)
            _print_table(res)
            if not res.audit_ok:
                print("energy audit failed:", json.dumps(res.audit, default=str),
                      file=sys.stderr)
                return EXIT_AUDIT
            if args.check:
                rep = check_sweep(res, cfg)
                for k, v in rep["checks"].items():
                    print(f"{'PASS' if v else 'FAIL'} {k}")
                if not rep["ok"]:
                    return EXIT_STATS
            return EXIT_OK
        if args.command == "cutoff-run":
            summ = run_cutoff_experiment(cfg, out, args.workers, args.report)
            keys = ("n_traj", "n_tau_finite", "witnesses_verified", "geometry_up_to_tau_ok",
                    "geometry_whole_path_ok",
                    "transversality_ok", "reentry_pairs_with_premises",
                    "reentries_with_premises", "occupancy_max_ratio")
            for k in keys:
                print(f"{k}: {summ[k]}")
            return EXIT_OK if summ["ok"] else EXIT_AUDIT
    except (ConfigError, ConstraintError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RunError as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
