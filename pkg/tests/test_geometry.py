import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_history
from wavedrift.cutoff import (PolylineHash, check_path_geometry, check_transversality,
                              integrate_modified, derivative_scaling, occupancy_table,
                              polyline_distance_linear, reentry_check, sample_reentry_pairs,
                              tube_occupancy, tube_occupancy_linear, write_occupancy_csv)


def _piecewise(segments):
    """Angle function for straight legs ``[(duration, angle), ...]``."""
    ends = np.cumsum([d for d, _ in segments])
    angs = np.array([a for _, a in segments])

    def f(t):
        return angs[np.minimum(np.searchsorted(ends, t, side="right"), len(angs) - 1)]
    return f


# -- polyline distance ----------------------------------------------------------


@given(st.integers(2, 60), st.integers(0, 10_000), st.floats(0.01, 0.5))
@settings(max_examples=60, deadline=None)
def test_polyline_hash_matches_linear(n, seed, radius):
    rng = np.random.default_rng(seed)
    P = np.cumsum(rng.normal(0, 0.1, (n, 2)), axis=0)
    hsh = PolylineHash(P, radius)
    for _ in range(20):
        q = P[rng.integers(n)] + rng.normal(0, radius, 2)
        lo = int(rng.integers(0, n))
        hi = int(rng.integers(lo, n))
        d_lin = polyline_distance_linear(P, q, lo, hi)
        d = hsh.distance(q, lo, hi)
        if d_lin <= radius:
            assert d == pytest.approx(d_lin, abs=1e-14)
        else:
            assert d > radius


# -- tube occupancy --------------------------------------------------------------


def test_occupancy_zero_without_revisits(history_factory):
    h = history_factory(lambda t: 0.3 * np.sin(t), T=3.0)
    recs = occupancy_table(h)
    assert recs and all(r.measure == 0.0 for r in recs)


def test_occupancy_zero_when_cutoff_vanishes(history_factory):
    h = history_factory(lambda t: 5.0 * t, T=3.0, theta=lambda t: np.zeros_like(t))
    assert all(r.measure == 0.0 for r in occupancy_table(h))


def test_occupancy_on_revisiting_path(params, history_factory):
    h = history_factory(lambda t: 5.0 * t, T=3.0)
    recs = occupancy_table(h)
    assert any(r.measure > 0 for r in recs)
    for r in recs:
        assert r.measure == tube_occupancy_linear(h, r.k)
        assert math.isfinite(r.ratio)
        assert r.measure <= 2 / params.p1 + 1e-12
    wide = occupancy_table(h, p4=2 * params.p4)
    assert all(w.measure <= r.measure for w, r in zip(wide, recs))


def test_occupancy_window_errors(history_factory):
    h = history_factory(lambda t: 0 * t, T=1.0)
    with pytest.raises(ValueError):
        tube_occupancy(h, 0)
    with pytest.raises(ValueError):
        tube_occupancy(h, 5)


def test_occupancy_csv(tmp_path, history_factory):
    h = history_factory(lambda t: 5.0 * t, T=2.0)
    write_occupancy_csv(occupancy_table(h), tmp_path / "occ.csv")
    lines = (tmp_path / "occ.csv").read_text().splitlines()
    assert lines[0] == "k,measure,reference_scale"
    assert len(lines) == len(occupancy_table(h)) + 1


# -- re-entry --------------------------------------------------------------------


def _crossing_history(params, zigzag):
    # east along y = 0, then a detour that comes back south across the first leg
    legs = [(1.0, 0.0), (0.5, math.pi / 2), (0.35, math.pi)]
    if zigzag:
        legs += [(0.55, 1.5 * math.pi), (1.0, 0.5 * math.pi)]
    else:
        legs += [(1.5, 1.5 * math.pi)]
    return make_history(params, _piecewise(legs), T=3.0)


def test_transversal_crossing_does_not_reenter(params):
    h = _crossing_history(params, zigzag=False)
    i = int(2.35 * params.p2)   # arc holding the crossing at t = 2.35
    j = int(0.65 * params.p2)   # arc of the first leg through x = 0.65
    rep = reentry_check(h, i, j)
    assert rep.entered and rep.exited and not rep.reentered
    assert rep.premises_hold
    found = [r for r in sample_reentry_pairs(h) if (r.i, r.j) == (i, j)]
    assert found and not found[0].reentered


def test_violent_turn_reenters_without_premises(params):
    h = _crossing_history(params, zigzag=True)
    i = int(2.40 * params.p2)
    j = int(0.65 * params.p2)
    rep = reentry_check(h, i, j)
    assert rep.reentered
    assert rep.premises["transversal"] and not rep.premises["small_bending"]
    assert not rep.premises_hold
    d = rep.to_dict()
    assert d["reentered"] and d["sigma2"] is not None


# -- cut-off paths ---------------------------------------------------------------


@pytest.fixture(scope="module")
def modified_path(gauss_field, params):
    return integrate_modified(gauss_field, params.delta, params, (0, 0), (1, 0), 1.0)


def test_geometry_hold_up_to_tau(modified_path):
    _, h, rep = modified_path
    assert check_path_geometry(h, until=rep.tau).ok


def test_geometry_flag_violent_synthetic_turn(params, history_factory):
    h = history_factory(_piecewise([(0.5, 0.0), (2.0, 2.0)]), T=2.0)
    res = check_path_geometry(h, kick=0.0)
    assert not res.ok
    assert res.slack["direction"][1] < 0


def test_transversality_on_modified_path(modified_path):
    _, h, _ = modified_path
    assert check_transversality(h).ok


def test_transversality_detects_tangential_return(history_factory):
    h = history_factory(lambda t: 5.0 * t, T=2.0)
    rep = check_transversality(h)
    assert rep.violations > 0 and not rep.ok
    dead = history_factory(lambda t: 5.0 * t, T=2.0, theta=lambda t: (t < 0.5).astype(float))
    rep = check_transversality(dead)
    assert rep.n_checked == 0 and rep.ok


def test_derivative_scaling(gauss_field, params):
    res = derivative_scaling(gauss_field, params.delta, params, (0, 0), (1, 0), 1.0, n_probes=200)
    assert set(res["checks"]) == {"p2x2", "N4x2"}
    assert res["C_dy"] >= 0 and res["C_dv"] >= 0
    assert res["ok"], res["checks"]
