import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import poly_product_coeffs
from tvsar.errors import InvalidArgument
from tvsar.evaluation import builtin_experiment
from tvsar.model import (NoiseState, ParamPaths, SarStructure, conditional_loglik,
                         design_matrix, design_vector, expand_coeffs, expand_paths,
                         expansion_jacobian, fit_static_ar, log_spectral_density,
                         simulate_tvsar, spectral_density)
from tvsar.stability import companion_eigenvalues, theta_to_phi, phi_to_theta


def theta_for(structure, phis):
    return np.concatenate([phi_to_theta(p) if len(p) else np.empty(0) for p in phis])


def test_structure_basics():
    st_ = SarStructure((1, 12), (2, 1))
    assert st_.r == 3
    assert list(st_.lags) == [1, 2, 12, 13, 14]
    assert st_.p_max == 14
    assert st_.coefficient_names() == ["lag1", "lag2", "s12_lag1"]
    with pytest.raises(InvalidArgument):
        SarStructure((1, 12), (1,))
    with pytest.raises(InvalidArgument):
        SarStructure((0,), (1,))


def test_expand_two_polynomials():
    st_ = SarStructure((1, 12), (1, 1))
    reg = expand_coeffs(st_, theta_for(st_, [[0.5], [0.4]]))
    assert list(reg.lags) == [1, 12, 13]
    assert np.allclose(reg.coeffs, [0.5, 0.4, -0.2])


def test_expand_three_polynomials():
    a, b, c = 0.3, -0.6, 0.8
    st_ = SarStructure((1, 4, 12), (1, 1, 1))
    reg = expand_coeffs(st_, theta_for(st_, [[a], [b], [c]]))
    assert list(reg.lags) == [1, 4, 5, 12, 13, 16, 17]
    assert np.allclose(reg.coeffs, [a, b, -a * b, c, -a * c, -b * c, a * b * c])


def test_expand_zero():
    st_ = SarStructure((1, 12), (2, 2))
    assert np.all(expand_coeffs(st_, np.zeros(4)).coeffs == 0)


structures = st.lists(st.tuples(st.integers(1, 12), st.integers(0, 3)), min_size=1, max_size=3)


@given(structures, st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_expansion_matches_dense_convolution(spec, seed):
    seasons, orders = zip(*spec)
    st_ = SarStructure(seasons, orders)
    theta = np.random.default_rng(seed).normal(size=st_.r)
    phis = [theta_to_phi(theta[s:s + n]) if n else [] for s, n in
            zip(st_.block_starts, st_.block_lengths)]
    dense = poly_product_coeffs(seasons, phis)
    reg = expand_coeffs(st_, theta)
    got = dict(zip(reg.lags.tolist(), reg.coeffs))
    for lag, c in dense.items():
        assert got.get(lag, 0.0) == pytest.approx(c, abs=1e-12)


def test_expanded_polynomial_is_stable(rng):
    st_ = SarStructure((1, 4, 12), (2, 1, 2))
    for _ in range(50):
        reg = expand_coeffs(st_, rng.normal(scale=3, size=st_.r))
        full = np.zeros(st_.p_max)
        full[reg.lags - 1] = reg.coeffs
        assert np.max(np.abs(companion_eigenvalues(full))) < 1


def test_expand_paths_rows(rng):
    st_ = SarStructure((1, 12), (1, 2))
    th = rng.normal(size=(5, 3))
    rows = expand_paths(st_, th)
    for t in range(5):
        assert np.allclose(rows[t], expand_coeffs(st_, th[t]).coeffs)


def test_expansion_jacobian_ad_vs_fd(rng):
    st_ = SarStructure((1, 4, 12), (2, 1, 1))
    th = rng.normal(size=st_.r)
    c_ad, ad = expansion_jacobian(st_, th, method="ad")
    c_fd, fd = expansion_jacobian(st_, th, method="fd")
    assert np.array_equal(c_ad, c_fd)
    assert ad.shape == (st_.lags.size, st_.r)
    assert np.allclose(ad, fd, atol=1e-7)
    assert np.linalg.matrix_rank(ad) == st_.r


def test_design_vector_indexing():
    y = np.arange(1.0, 21.0)  # y_t = t
    assert np.array_equal(design_vector(y, [1, 12, 13], 14), [13.0, 2.0, 1.0])
    with pytest.raises(InvalidArgument):
        design_vector(y, [1, 12, 13], 13)
    assert design_vector(y, [], 5).size == 0


def test_design_matrix_rows():
    y = np.arange(1.0, 31.0)
    st_ = SarStructure((1, 12), (1, 1))
    X = design_matrix(y, st_)
    assert X.shape == (30 - 13, 3)
    assert np.array_equal(X[0], design_vector(y, st_.lags, 14))


def test_white_noise_simulation(rng):
    st_ = SarStructure((1,), (0,))
    T = 2000
    y = simulate_tvsar(st_, ParamPaths(np.zeros((T + 1, 0)), st_), NoiseState(), rng)
    assert y.size == T
    acf = [np.corrcoef(y[:-k], y[k:])[0, 1] for k in range(1, 21)]
    assert np.all(np.abs(acf) < 3 / np.sqrt(T))


def test_ar1_simulation_acf(rng):
    st_ = SarStructure((1,), (1,))
    T = 5000
    th = np.full((T + 1, 1), phi_to_theta([0.9])[0])
    y = simulate_tvsar(st_, ParamPaths(th, st_), NoiseState(sigma=1.0), rng)
    assert np.corrcoef(y[:-1], y[1:])[0, 1] == pytest.approx(0.9, abs=0.05)


def test_experiment1_regime_variance():
    ex = builtin_experiment("exp1")
    y = simulate_tvsar(ex.structure, ParamPaths(ex.theta, ex.structure),
                       NoiseState(sigma=ex.sigma), np.random.default_rng(1))
    assert y.size == 1000
    assert y[700:].var() > y[300:700].var()


def naive_loglik(y, structure, theta, sigma):
    total = 0.0
    for t in range(structure.p_max + 1, y.size + 1):
        reg = expand_coeffs(structure, theta[t - structure.p_max])
        mean = sum(c * y[t - 1 - lag] for lag, c in zip(reg.lags, reg.coeffs))
        total += stats.norm(mean, sigma).logpdf(y[t - 1])
    return total


def test_conditional_loglik_oracles(rng):
    st_ = SarStructure((1, 4), (1, 1))
    y = rng.normal(size=40)
    T = 40 - st_.p_max
    th = rng.normal(size=(T + 1, 2))
    got = conditional_loglik(y, ParamPaths(th, st_), NoiseState(sigma=1.3), st_)
    assert got == pytest.approx(naive_loglik(y, st_, th, 1.3), abs=1e-10)
    zero = conditional_loglik(y, ParamPaths(np.zeros((T + 1, 2)), st_), NoiseState(), st_)
    assert zero == pytest.approx(stats.norm.logpdf(y[st_.p_max:]).sum(), abs=1e-10)
    with pytest.raises(InvalidArgument):
        conditional_loglik(y, ParamPaths(th[1:], st_), NoiseState(), st_)


def test_loglik_decreases_for_huge_sigma(rng):
    st_ = SarStructure((1,), (1,))
    y = rng.normal(size=50)
    th = np.zeros((50, 1))
    vals = [conditional_loglik(y, ParamPaths(th, st_), NoiseState(sigma=s), st_)
            for s in (10.0, 100.0, 1000.0)]
    assert vals[0] > vals[1] > vals[2]


def test_fit_static_ar_recovers_ar1(rng):
    st_ = SarStructure((1,), (1,))
    th = np.full((3001, 1), phi_to_theta([0.6])[0])
    y = simulate_tvsar(st_, ParamPaths(th, st_), NoiseState(sigma=2.0), rng)
    beta, s2 = fit_static_ar(y, st_)
    assert beta[0] == pytest.approx(0.6, abs=0.05)
    assert s2 == pytest.approx(4.0, rel=0.1)


def test_spectral_density_examples():
    white = SarStructure((1,), (0,))
    assert np.allclose(spectral_density(white, np.empty(0), 1.0, [0.5, 2.0]), 1 / np.pi)
    ar1 = SarStructure((1,), (1,))
    f = spectral_density(ar1, phi_to_theta([0.5]), 1.0, [np.pi / 2])
    assert f[0] == pytest.approx(0.25465, abs=1e-5)
    seas = SarStructure((12,), (1,))
    f = spectral_density(seas, phi_to_theta([0.5]), 1.0, [2 * np.pi / 12])
    assert f[0] == pytest.approx(1.27324, abs=1e-5)
    with pytest.raises(InvalidArgument):
        spectral_density(ar1, [0.0], 1.0, [0.0])


def test_spectral_density_matches_expanded_polynomial(rng):
    # the product of block polynomials equals the expanded polynomial
    st_ = SarStructure((1, 12), (2, 1))
    th = rng.normal(size=3)
    om = np.linspace(0.01, np.pi, 50)
    reg = expand_coeffs(st_, th)
    poly = 1 - np.exp(-1j * np.outer(om, reg.lags)) @ reg.coeffs
    expected = 1.7**2 / np.pi / np.abs(poly) ** 2
    assert np.allclose(spectral_density(st_, th, 1.7, om), expected, rtol=1e-10)


def test_spectral_density_integrates_to_variance(rng):
    # integral over (-pi, pi] of f equals 2 * Var(y) with the sigma^2/pi scaling
    st_ = SarStructure((1,), (1,))
    th = phi_to_theta([0.5])
    om = np.linspace(1e-6, np.pi, 200_001)
    integral = 2 * np.trapezoid(spectral_density(st_, th, 1.0, om), om)
    assert integral == pytest.approx(2 / (1 - 0.25), rel=1e-4)


def test_log_spectral_density_shape(rng):
    st_ = SarStructure((1, 12), (1, 1))
    out = log_spectral_density(st_, rng.normal(size=(7, 2)), np.ones(7), [0.1, 0.2, 0.3])
    assert out.shape == (7, 3)
