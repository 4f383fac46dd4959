import math

import numpy as np
import pytest

from conftest import make_history
from wavedrift.cutoff import HistoryGapError, phi, theta, theta_bruteforce


def _unit(a):
    return np.array([math.cos(a), math.sin(a)])


def test_one_before_first_mesh_time(params, history_factory):
    h = history_factory(lambda t: 0.4 + 0 * t, T=1.0)
    for t in np.linspace(0, 1 / params.p1, 7, endpoint=False):
        n = int(round(t / h.dt))
        assert theta(t, h.X[n], h.V[0], h) == 1.0
        assert theta_bruteforce(t, h.X[n], h.V[0], h) == 1.0


def test_one_along_straight_path(history_factory):
    h = history_factory(lambda t: 1.1 + 0 * t, T=2.0)
    for n in range(0, len(h), 7):
        assert theta(h.t[n], h.X[n], h.V[n], h) == 1.0


@pytest.mark.parametrize("i", [1, 2, 3])
def test_zero_past_kill_threshold(params, history_factory, i):
    h = history_factory(lambda t: 0 * t, T=1.0)
    N = params.threshold(i)
    k = 2
    t = k / params.mesh(i) + 0.5 / params.lcm
    ref = h.mesh_V(i)[k - 1]
    a = math.atan2(ref[1], ref[0]) + math.acos(max(-1.0, 1 - 3 / N))
    assert theta(t, h.X[int(round(t / h.dt))], _unit(a), h) == 0.0


def test_self_intersection_factor_kills_return(params, history_factory):
    # circle of radius 0.2 returns to its start, tangentially, after 0.4 pi
    h = history_factory(lambda t: 5.0 * t, T=2.0)
    n = int(round(2 * math.pi / 5 / h.dt))
    t = h.t[n]
    x0, v0 = h.mesh_X(2)[0], h.mesh_V(2)[0]
    assert phi(h.X[n], h.V[n], x0, v0, params.p2, params.N4) == 0.0
    assert theta_bruteforce(t, h.X[n], h.V[n], h) == 0.0
    assert theta(t, h.X[n], h.V[n], h) == 0.0


def _queries(h, rng, n):
    for _ in range(n):
        m = int(rng.integers(0, len(h)))
        y = h.X[m] + rng.uniform(0, 0.25) * _unit(rng.uniform(0, 2 * math.pi))
        d = rng.normal(0, 0.3)
        rot = np.array([[math.cos(d), -math.sin(d)], [math.sin(d), math.cos(d)]])
        v = rng.uniform(0.8, 1.2) * rot @ h.V[m]
        yield h.t[m], y, v


def test_hashed_equals_bruteforce_on_loop(params):
    p = params.with_overrides(M_star=1.0)
    h = make_history(p, lambda t: 2.0 * t, T=4.0, m=4)
    rng = np.random.default_rng(3)
    vals = []
    for t, y, v in _queries(h, rng, 1000):
        a, b = theta(t, y, v, h), theta_bruteforce(t, y, v, h)
        assert a == b, (t, y, v)
        vals.append(a)
    vals = np.array(vals)
    # the queries visit plateau, kill zone and transition band
    assert (vals == 1).any() and (vals == 0).any()
    assert ((vals > 0) & (vals < 1)).mean() > 0.05


def test_hashed_equals_bruteforce_on_modified_path(gauss_field, params):
    from wavedrift.cutoff import integrate_modified

    _, h, _ = integrate_modified(gauss_field, params.delta, params, (0, 0), (1, 0), 1.0)
    rng = np.random.default_rng(5)
    for t, y, v in _queries(h, rng, 300):
        assert theta(t, y, v, h) == theta_bruteforce(t, y, v, h)


def test_recorded_theta_matches_reevaluation(gauss_field, params):
    from wavedrift.cutoff import integrate_modified

    _, h, _ = integrate_modified(gauss_field, params.delta, params, (0, 0), (1, 0), 0.5)
    for n in range(0, len(h), max(1, len(h) // 50)):
        assert theta(h.t[n], h.X[n], h.V[n], h) == h.theta[n]


def test_rescaled_positions(history_factory):
    h = history_factory(lambda t: 3.0 * t, T=2.0)
    y = np.array([0.05, 0.1])
    t = 1.5
    v = h.V[int(round(t / h.dt))]
    assert theta(t, y / h.delta, v, h, rescaled=True) == theta(t, y, v, h)


def test_history_gap(history_factory):
    h = history_factory(lambda t: 0 * t, T=1.0)
    with pytest.raises(HistoryGapError):
        theta(1.5, (0, 0), (1, 0), h)
    with pytest.raises(HistoryGapError):
        theta_bruteforce(1.5, (0, 0), (1, 0), h)


def test_history_rejects_misaligned_step(params):
    t = np.arange(11) * 0.013
    X = np.zeros((11, 2))
    V = np.tile([1.0, 0.0], (11, 1))
    from wavedrift.cutoff import PathHistory

    with pytest.raises(ValueError, match="whole number"):
        PathHistory(t, X, V, params)
