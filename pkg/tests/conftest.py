import math

import numpy as np
import pytest

from wavedrift.cutoff import PathHistory, derive_params
from wavedrift.field import (BumpFieldSpec, GaussianSpectralDensity, PolynomialBump,
                             SpectralFieldSpec, build_bump_field, build_spectral_field)

SQRT_2PI_HALF = math.sqrt(2 * math.pi) / 2  # 1.25331...


@pytest.fixture(scope="session")
def gauss_spec():
    return SpectralFieldSpec(GaussianSpectralDensity.isotropic(1.0), n_modes=256, variance=1.0)


@pytest.fixture(scope="session")
def gauss_field(gauss_spec):
    return build_spectral_field(gauss_spec, 12345)


@pytest.fixture(scope="session")
def bump_field():
    spec = BumpFieldSpec(PolynomialBump(1.0, 1.0, 4), intensity=2.0)
    return build_bump_field(spec, (-20.0, 20.0, -20.0, 20.0), 7)


@pytest.fixture(scope="session")
def params():
    # p = (3, 6, 9, 31), N = (2, 4, 3, 2)
    return derive_params(0.01, D_tilde=0.0)


def make_history(params, angle_fn, T=2.0, m=20, speed=1.0, x0=(0.0, 0.0), theta=None):
    """Unit-speed synthetic path with prescribed momentum angle ``angle_fn(t)``.

    The step is ``1 / (lcm(p1, p2, p3) m)`` so every mesh time is a sample.
    """
    dt = 1.0 / (params.lcm * m)
    n = int(round(T / dt))
    t = np.arange(n + 1) * dt
    ang = np.asarray(angle_fn(t), dtype=float) * np.ones_like(t)
    V = speed * np.column_stack([np.cos(ang), np.sin(ang)])
    X = np.zeros_like(V)
    X[1:] = np.cumsum(0.5 * dt * (V[1:] + V[:-1]), axis=0)
    X += np.asarray(x0, dtype=float)
    th = np.ones(n + 1) if theta is None else theta(t)
    return PathHistory(t, X, V, params, theta=th, delta=params.delta)


@pytest.fixture
def history_factory(params):
    def make(angle_fn, **kw):
        return make_history(kw.pop("params", params), angle_fn, **kw)
    return make


# -- acceptance report -------------------------------------------------------------

ACCEPTANCE = {}


def record(n, ok, detail=""):
    """Store the verdict of acceptance criterion ``n`` for the summary lines."""
    ACCEPTANCE[n] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    ran = [r for rs in terminalreporter.stats.values() for r in rs
           if getattr(r, "nodeid", "").startswith("tests/test_acceptance.py")]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: FAIL  (not evaluated)")
