"""Small convergence sweep with the ``quick`` preset (a few minutes on one CPU).

256 paths per delta and a 128-mode field make the estimates noisy, so the
checks printed at the end can fail; the ``convergence`` preset is the real test.

    python demos/quick_sweep.py [OUT_DIR] [WORKERS]
"""
import os
import sys

from wavedrift.harness import check_sweep, convergence_sweep, load_preset

out = sys.argv[1] if len(sys.argv) > 1 else "quick_sweep_out"
workers = int(sys.argv[2]) if len(sys.argv) > 2 else (os.cpu_count() or 1)

cfg = load_preset("quick")
res = convergence_sweep(cfg, out, workers=workers)
print(f"{'delta':>8} {'a_hat':>8} {'ci':>19} {'abs_err':>8} {'ks_p':>7}")
for r in res.table():
    print(f"{r['delta']:8.3g} {r['a_hat']:8.4f} [{r['ci_lo']:.4f}, {r['ci_hi']:.4f}] "
          f"{r['abs_err']:8.4f} {r['ks_p']:7.3f}")
print(f"a_ref = {res.a_ref:.5f}, energy audit ok: {res.audit_ok}")
print("checks:", check_sweep(res, cfg))
print("outputs in", out)
