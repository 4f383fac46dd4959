import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavedrift.dynamics import simulate_circle_diffusion
from wavedrift.stats import (Autocorrelation, Ensemble, angle_increment_test, angle_increments,
                             direction_autocorrelation, fit_decay_rate, speed_band_report,
                             summarize)

A_REF = math.sqrt(2 * math.pi) / 2


@pytest.fixture(scope="module")
def circle_ens():
    paths = simulate_circle_diffusion(A_REF, 0.0, 1.0, 1.0, 0.0025, seed=17, n_paths=4096,
                                      stride=10)
    return Ensemble.from_trajectories(paths)


def test_lag_zero_is_one(circle_ens):
    acf = direction_autocorrelation(circle_ens)
    assert acf.C[0] == 1.0
    assert acf.se[0] == 0.0


def test_circle_acf_matches_exponential(circle_ens):
    acf = direction_autocorrelation(circle_ens)
    z = np.abs(acf.C[1:] - np.exp(-A_REF * acf.lags[1:])) / acf.se[1:]
    assert np.all(z < 3.0)


def test_zero_field_constant_one():
    t = np.linspace(0, 1, 41)
    ens = Ensemble(t, np.full((64, 41), 0.3), 0.01)
    acf = direction_autocorrelation(ens)
    assert np.all(acf.C == 1.0)
    fit = fit_decay_rate(acf)
    assert fit.a_hat == 0.0


def test_exact_table_fit():
    t = np.linspace(0, 2, 81)
    tab = Autocorrelation(t, np.exp(-1.25331 * t), np.zeros_like(t))
    fit = fit_decay_rate(tab)
    assert abs(fit.a_hat - 1.25331) < 1e-6


def test_circle_fit_within_five_percent(circle_ens):
    fit = fit_decay_rate(direction_autocorrelation(circle_ens))
    assert abs(fit.a_hat - A_REF) < 0.05 * A_REF
    assert fit.ci[0] < fit.a_hat < fit.ci[1]


def test_fit_rejects_noise_window():
    t = np.linspace(0, 1, 11)
    tab = Autocorrelation(t, np.r_[1.0, np.full(10, 0.01)], np.full(11, 0.001))
    with pytest.raises(ValueError):
        fit_decay_rate(tab)


def test_min_trajectories_enforced():
    ens = Ensemble(np.linspace(0, 1, 5), np.zeros((10, 5)), 0.1)
    with pytest.raises(ValueError, match="at least"):
        direction_autocorrelation(ens)


def test_mixed_frames_rejected():
    a = simulate_circle_diffusion(1.0, 0, 1, 0.1, 0.01, seed=1)
    b = simulate_circle_diffusion(1.0, 0, 1, 0.1, 0.01, seed=2)
    b.delta = 0.5
    with pytest.raises(ValueError, match="mixes"):
        Ensemble.from_trajectories([a, b])


def test_ks_passes_for_correct_rate(circle_ens):
    res = angle_increment_test(circle_ens, 0.25, A_REF)
    assert res.pvalue > 0.01
    assert res.n == 4096 * 4


def test_ks_pass_rate_over_seeds():
    passes = 0
    for seed in range(20):
        paths = simulate_circle_diffusion(A_REF, 0.0, 1.0, 1.0, 0.005, seed=seed, n_paths=256,
                                          stride=5)
        passes += angle_increment_test(Ensemble.from_trajectories(paths), 0.25,
                                       A_REF).pvalue > 0.01
    assert passes >= 19


def test_ks_rejects_straight_paths():
    t = np.linspace(0, 1, 41)
    ens = Ensemble(t, np.zeros((64, 41)), 0.01)
    assert angle_increment_test(ens, 0.25, A_REF).pvalue < 1e-10


def test_lag_shorter_than_step():
    t = np.linspace(0, 1, 11)
    with pytest.raises(ValueError, match="shorter"):
        angle_increments(Ensemble(t, np.zeros((64, 11)), 0.1), 0.05)


@given(st.integers(1, 8))
@settings(max_examples=8, deadline=None)
def test_increments_telescoping(k):
    rng = np.random.default_rng(k)
    t = np.arange(41) * 0.025
    th = np.cumsum(rng.standard_normal((3, 41)), axis=1)
    inc = angle_increments(Ensemble(t, th, 0.1), k * 0.025).reshape(3, -1)
    m = inc.shape[1]
    assert np.allclose(inc.sum(1), th[:, m * k] - th[:, 0])


def test_speed_band_report():
    t = np.linspace(0, 1, 5)
    ens = Ensemble(t, np.zeros((64, 5)), 0.01, speed_sq_dev=np.zeros(64))
    r = speed_band_report(ens, 0.01, 6.0)
    assert r.max_dev == 0.0 and r.ok
    assert math.isclose(r.bound, 4 * 0.1 * 6.0 + 1e-5)
    r2 = speed_band_report(ens, 0.005, 6.0)
    assert math.isclose((r2.bound - 1e-5) / (r.bound - 1e-5), 1 / math.sqrt(2))


def test_se_shrinks_with_ensemble_size():
    ratios = []
    for rep in range(5):
        small = simulate_circle_diffusion(A_REF, 0, 1, 0.5, 0.025, seed=100 + rep, n_paths=2048)
        big = simulate_circle_diffusion(A_REF, 0, 1, 0.5, 0.025, seed=200 + rep, n_paths=4096)
        s1 = direction_autocorrelation(Ensemble.from_trajectories(small)).se[-1]
        s2 = direction_autocorrelation(Ensemble.from_trajectories(big)).se[-1]
        ratios.append(s2 / s1)
    assert abs(np.mean(ratios) - 1 / math.sqrt(2)) < 0.2 / math.sqrt(2)


def test_summary_schema(circle_ens, tmp_path):
    s = summarize(circle_ens, A_REF, ks_lag=0.25, D0=0.0)
    d = json.loads(s.to_json(tmp_path / "s.json"))
    for key in ("delta", "n_traj", "a_ref", "a_hat", "a_ci", "ks_stat", "ks_p",
                "speed_band_max", "lags", "C", "se"):
        assert key in d
    assert d["C"][0] == 1.0
    s.to_csv(tmp_path / "acf.csv")
    assert (tmp_path / "acf.csv").read_text().splitlines()[0] == "lag,C,se"
