import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavedrift.field import (BumpFieldSpec, GaussianCorrelation, GaussianSpectralDensity,
                             GridSpectralDensity, PolynomialBump, SpectralFieldSpec,
                             ZeroCorrelation, build_bump_field, build_spectral_field,
                             empirical_correlation, eval_field, model_correlation)


def _fd_grad(field, x, h=1e-6):
    g = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g[i] = (field.value(x + e)[0] - field.value(x - e)[0]) / (2 * h)
    return g


def _fd_hess(field, x, h=1e-6):
    H = np.zeros((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        H[:, i] = (field.gradient(x + e)[0] - field.gradient(x - e)[0]) / (2 * h)
    return H


# -- spectral fields ---------------------------------------------------------


def test_spectral_mean_zero_and_variance():
    spec = SpectralFieldSpec(GaussianSpectralDensity.isotropic(), n_modes=64, variance=1.0)
    f = build_spectral_field(spec, 1)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1000, (10_000, 2))
    h = f.value(pts)
    se = h.std(ddof=1) / math.sqrt(len(h))
    assert abs(h.mean()) < 3 * se
    assert abs((h ** 2).mean() - 1.0) < 0.05


def test_spectral_same_seed_bit_identical(gauss_spec):
    a = build_spectral_field(gauss_spec, 99)
    b = build_spectral_field(gauss_spec, 99)
    assert a.modes.tobytes() == b.modes.tobytes()
    c = build_spectral_field(gauss_spec, 100)
    assert not np.array_equal(a.modes, c.modes)


def test_spectral_seed_sequence_accepted(gauss_spec):
    ss = np.random.SeedSequence(5, spawn_key=(3,))
    a = build_spectral_field(gauss_spec, ss)
    b = build_spectral_field(gauss_spec, np.random.SeedSequence(5, spawn_key=(3,)))
    assert np.array_equal(a.modes, b.modes)


def test_line_spectrum_accepted_but_flagged():
    dens = GaussianSpectralDensity(np.array([[1.0, 0.0], [0.0, 0.0]]))
    spec = SpectralFieldSpec(dens, n_modes=16)
    with pytest.warns(UserWarning, match="non-degeneracy"):
        f = build_spectral_field(spec, 1)
    assert not f.nd_ok
    # every wave-vector lies on the k_x axis
    assert np.all(f.modes[:, 1] == 0.0)


def test_isotropic_spectrum_satisfies_nd(gauss_field):
    assert gauss_field.nd_ok


def test_grid_density_rejects_non_normalizable():
    with pytest.raises(ValueError, match="not normalizable"):
        GridSpectralDensity(lambda kx, ky: np.ones_like(kx), k_max=2.0, n_grid=40,
                            max_doublings=3)


def test_grid_density_rejects_odd():
    with pytest.raises(ValueError, match="even"):
        GridSpectralDensity(lambda kx, ky: np.exp(-(kx - 1) ** 2 - ky ** 2), n_grid=80)


def test_grid_density_matches_gaussian_second_moment():
    g = GridSpectralDensity(lambda kx, ky: np.exp(-(kx ** 2 + ky ** 2) / 2), k_max=4.0,
                            n_grid=200)
    assert np.allclose(g.second_moment(), np.eye(2), atol=1e-3)
    assert g.satisfies_nd()


def test_spectral_gradient_matches_fd(gauss_field):
    rng = np.random.default_rng(1)
    for x in rng.uniform(-50, 50, (100, 2)):
        jet = eval_field(gauss_field, x)
        g = _fd_grad(gauss_field, x)
        assert np.linalg.norm(jet.grad - g) / (1 + np.linalg.norm(jet.grad)) < 1e-5
        H = _fd_hess(gauss_field, x)
        assert np.abs(jet.hess - H).max() / (1 + np.abs(jet.hess).max()) < 1e-5


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=50, deadline=None)
def test_hessian_symmetric_exactly(x, y):
    spec = SpectralFieldSpec(GaussianSpectralDensity.isotropic(), n_modes=32)
    f = build_spectral_field(spec, 4)
    jet = eval_field(f, np.array([x, y]))
    assert jet.hess[0, 1] == jet.hess[1, 0]


def test_stationarity_translated_grids(gauss_spec):
    fields = [build_spectral_field(gauss_spec, s) for s in range(40)]
    g = np.stack(np.meshgrid(np.arange(10.0), np.arange(10.0)), -1).reshape(-1, 2) * 3.1
    m1 = np.array([(f.value(g) ** 2).mean() for f in fields])
    m2 = np.array([(f.value(g + 517.3) ** 2).mean() for f in fields])
    d = m1 - m2
    assert abs(d.mean()) < 3 * d.std(ddof=1) / math.sqrt(len(d))


def test_spectral_bounds_envelope(gauss_field):
    D0, D1, D2 = gauss_field.bounds
    assert gauss_field.bounds_kind == "high-probability"
    assert math.isclose(D0, 6.0)
    pts = np.random.default_rng(3).uniform(-100, 100, (20_000, 2))
    jet = gauss_field.jet(pts)
    assert np.abs(jet.value).max() <= D0
    assert np.abs(jet.grad).max() <= D1
    assert np.abs(jet.hess).max() <= D2


def test_export_csv_modes(tmp_path, gauss_field):
    p = tmp_path / "modes.csv"
    gauss_field.export_csv(p)
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert data.shape == (256, 4)
    assert np.array_equal(data, gauss_field.modes)
    assert p.read_text().splitlines()[0] == "kx,ky,amp,phase"


# -- bump fields -------------------------------------------------------------


def test_empty_bump_field_is_zero():
    spec = BumpFieldSpec(PolynomialBump(), intensity=0.0)
    f = build_bump_field(spec, (-5, 5, -5, 5), 1)
    pts = np.random.default_rng(0).uniform(-5, 5, (200, 2))
    jet = f.jet(pts)
    assert np.all(jet.value == 0.0)
    assert np.all(jet.grad == 0.0)
    assert np.all(jet.hess == 0.0)


def test_bump_mean_zero():
    spec = BumpFieldSpec(PolynomialBump(1.0, 1.0, 4), intensity=2.0)
    f = build_bump_field(spec, (0.0, 250.0, 0.0, 250.0), 7)
    # probes 2.5 apart exceed the correlation range 2, so they are independent
    g = (np.arange(100) + 0.5) * 2.5
    pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    h = f.value(pts)
    se = h.std(ddof=1) / math.sqrt(len(h))
    assert abs(h.mean()) < 3 * se


def test_bump_outside_window_raises(bump_field):
    with pytest.raises(ValueError, match="outside the field domain"):
        bump_field.value([25.0, 0.0])


def test_bump_padding_must_cover_support():
    with pytest.raises(ValueError, match="padding"):
        BumpFieldSpec(PolynomialBump(radius=2.0), intensity=1.0, domain_padding=1.0)


def test_bump_bounds_are_exact_upper_bounds(bump_field):
    assert bump_field.bounds_kind == "exact"
    D0, D1, D2 = bump_field.bounds
    pts = np.random.default_rng(5).uniform(-20, 20, (100_000, 2))
    jet = bump_field.jet(pts)
    assert np.abs(jet.value).max() <= D0
    assert np.abs(jet.grad).max() <= D1
    assert np.abs(jet.hess).max() <= D2


def test_bump_disjoint_windows_independent_overlap_shared():
    spec = BumpFieldSpec(PolynomialBump(), intensity=1.0)
    a = build_bump_field(spec, (0, 40, 0, 40), 11)
    b = build_bump_field(spec, (100, 140, 0, 40), 11)
    c = build_bump_field(spec, (0, 40, 0, 40), 11)
    assert np.array_equal(a.centers, c.centers)
    ka = {tuple(p) for p in a.centers}
    assert not ka & {tuple(p) for p in b.centers}
    # a wider window with the same seed agrees on the common region
    wide = build_bump_field(spec, (-10, 60, -10, 60), 11)
    pts = np.random.default_rng(1).uniform(2, 38, (500, 2))
    assert np.allclose(a.value(pts), wide.value(pts), atol=1e-12)


def test_bump_gradient_matches_fd(bump_field):
    rng = np.random.default_rng(8)
    for x in rng.uniform(-15, 15, (100, 2)):
        jet = eval_field(bump_field, x)
        g = _fd_grad(bump_field, x)
        assert np.linalg.norm(jet.grad - g) / (1 + np.linalg.norm(jet.grad)) < 1e-5


def test_bump_profile_is_c2_at_rim():
    prof = PolynomialBump(1.0, 1.0, 4)
    v, d1, d2 = prof.radial_derivatives(np.array([1.0, 1.5]))
    assert np.all(v == 0) and np.all(d1 == 0) and np.all(d2 == 0)
    with pytest.raises(ValueError):
        PolynomialBump(power=2)


def test_bump_export_csv(tmp_path, bump_field):
    p = tmp_path / "centers.csv"
    bump_field.export_csv(p)
    assert p.read_text().splitlines()[0] == "cx,cy"
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert np.array_equal(data, bump_field.centers)


# -- correlation models ------------------------------------------------------


@pytest.mark.parametrize("s", [0.0, 0.3, 1.0, 2.5])
def test_gaussian_correlation_second_derivative(s):
    jet = model_correlation(GaussianCorrelation(), np.array([s, 0.0]))
    assert math.isclose(jet.hess[1, 1], -math.exp(-s * s / 2), rel_tol=1e-14, abs_tol=1e-300)
    assert math.isclose(jet.hess[0, 0], (s * s - 1) * math.exp(-s * s / 2), abs_tol=1e-15)


def test_gradient_vanishes_at_zero_lag():
    for model in (GaussianCorrelation(), ZeroCorrelation(),
                  BumpFieldSpec(PolynomialBump(), 1.0).correlation()):
        jet = model_correlation(model, np.zeros(2))
        assert np.all(jet.grad == 0.0)


@given(st.floats(-4, 4), st.floats(-4, 4))
@settings(max_examples=50, deadline=None)
def test_gaussian_correlation_even_and_bounded(x, y):
    m = GaussianCorrelation(2.0)
    a = model_correlation(m, np.array([x, y]))
    b = model_correlation(m, np.array([-x, -y]))
    assert a.R == b.R
    assert abs(a.R) <= m.variance


def test_gaussian_correlation_derivatives_fd():
    m = GaussianCorrelation(1.0, np.array([[1.3, 0.2], [0.2, 0.7]]))
    y = np.array([0.4, -0.9])
    h = 1e-5
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        lp, lm = model_correlation(m, y + e), model_correlation(m, y - e)
        assert abs((lp.R - lm.R) / (2 * h) - model_correlation(m, y).grad[i]) < 1e-8
        assert abs((lp.lap - lm.lap) / (2 * h) - model_correlation(m, y).grad_lap[i]) < 1e-7


@pytest.mark.parametrize("r", [0.0, 0.4, 1.1, 1.7])
def test_bump_correlation_hankel_vs_convolution(r):
    m = BumpFieldSpec(PolynomialBump(1.0, 1.0, 4), 2.0).correlation()
    y = np.array([r, 0.0])
    assert abs(model_correlation(m, y).R - m.convolution_quadrature(y)) < 1e-5


def test_bump_correlation_vs_empirical():
    spec = BumpFieldSpec(PolynomialBump(1.0, 1.0, 4), 2.0)
    fields = [build_bump_field(spec, (0, 60, 0, 60), s) for s in range(30)]
    lags = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 1.2]])
    emp = empirical_correlation(fields, lags, n_probes=2000, seed=3)
    R = model_correlation(spec.correlation(), lags).R
    assert np.all(np.abs(emp.estimate - R) < 3 * emp.se + 1e-12)


def test_empirical_correlation_lag_zero_and_far(gauss_spec):
    fields = [build_spectral_field(gauss_spec, s) for s in range(30)]
    emp = empirical_correlation(fields, [[0.0, 0.0], [30.0, 0.0]], n_probes=500, seed=1)
    assert abs(emp.estimate[0] - 1.0) < 3 * emp.se[0]
    assert abs(emp.estimate[1]) < 3 * emp.se[1]


def test_empirical_correlation_single_probe_exact(gauss_field):
    emp = empirical_correlation([gauss_field], [[0.0, 0.0]], n_probes=1, seed=4)
    rng = np.random.default_rng(4)
    x0, x1, y0, y1 = 0.0, 1000.0, 0.0, 1000.0
    p = np.array([[rng.uniform(x0, x1), rng.uniform(y0, y1)]])
    # same draw order: x then y coordinates for n_probes = 1
    assert emp.estimate[0] == gauss_field.value(p)[0] ** 2


def test_empirical_correlation_empty():
    with pytest.raises(ValueError, match="empty"):
        empirical_correlation([], [[0.0, 0.0]])


def test_spectral_empirical_matches_model(gauss_spec):
    fields = [build_spectral_field(gauss_spec, 1000 + s) for s in range(40)]
    lags = np.array([[0.5, 0.0], [1.0, 1.0]])
    emp = empirical_correlation(fields, lags, n_probes=400, seed=2)
    R = model_correlation(gauss_spec.correlation(), lags).R
    assert np.all(np.abs(emp.estimate - R) < 3 * emp.se)


def test_no_warning_for_regular_field(gauss_spec):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_spectral_field(gauss_spec, 3)
