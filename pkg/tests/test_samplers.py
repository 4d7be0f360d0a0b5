import dataclasses

import numpy as np
import pytest
from scipy import stats

from oracles import linear_instance
from tvsar.errors import InvalidArgument
from tvsar.evaluation import builtin_experiment
from tvsar.model import NoiseState, ParamPaths, SarStructure, simulate_tvsar
from tvsar.samplers import (GibbsConfig, InitialProposal, StateSpaceView, draw_sigma_static,
                            draw_sv_path, ekf_forward, ekf_smoother, ffbsx_backward,
                            ffbsx_sample, gibbs_run, initial_sv_noise, pgas_init_reference,
                            pgas_kernel)
from tvsar.stability import is_stable, phi_to_theta


def moment_z_scores(draws, ms, Ps):
    n = draws.shape[0]
    zm = (draws.mean(axis=0) - ms) / np.sqrt(Ps / n)
    zv = (draws.var(axis=0, ddof=1) - Ps) / (Ps * np.sqrt(2 / (n - 1)))
    return np.abs(zm), np.abs(zv)


# EKF / FFBSx


def test_ekf_equals_kalman_filter_in_linear_mode():
    _, view, (m, P, Pp, ms, Ps) = linear_instance()
    res = ekf_forward(view)
    assert np.allclose(res.m[:, 0], m, rtol=0, atol=1e-12)
    assert np.allclose(res.P[:, 0, 0], P, rtol=0, atol=1e-12)
    assert np.allclose(res.P_pred[:, 0, 0], Pp, rtol=0, atol=1e-12)
    sm, sP = ekf_smoother(view, res)
    assert np.allclose(sm[:, 0], ms, rtol=0, atol=1e-12)
    assert np.allclose(sP[:, 0, 0], Ps, rtol=0, atol=1e-12)


def test_ekf_fd_jacobian_agrees_with_ad():
    y = np.random.default_rng(0).normal(size=80)
    st_ = SarStructure((1, 4), (2, 1))
    h = np.full((80 - st_.p_max + 1, 3), -6.0)
    a = ekf_forward(StateSpaceView.from_data(y, st_, h, 1.0, jacobian="ad"))
    b = ekf_forward(StateSpaceView.from_data(y, st_, h, 1.0, jacobian="fd"))
    assert np.allclose(a.m, b.m, atol=1e-6)


def test_ekf_static_limit():
    y, view, _ = linear_instance()
    frozen = dataclasses.replace(view, h=np.full_like(view.h, -1e3),
                                 P0=np.array([[0.0]]))
    res = ekf_forward(frozen)
    assert np.all(res.m[:, 0] == res.m[0, 0])
    shrinking = ekf_forward(dataclasses.replace(frozen, P0=np.array([[0.3]])))
    assert np.all(np.diff(shrinking.P[:, 0, 0]) <= 1e-15)


def test_ekf_no_information_limit():
    _, view, _ = linear_instance()
    res = ekf_forward(dataclasses.replace(view, sigma=np.full(view.T, 1e9)))
    assert np.allclose(res.m[:, 0], view.m0[0], atol=1e-8)


def test_ffbs_backward_moments_match_smoother():
    _, view, (_, _, _, ms, Ps) = linear_instance()
    res = ekf_forward(view)
    rng = np.random.default_rng(0)
    draws = np.array([ffbsx_backward(view, res, rng)[:, 0] for _ in range(10_000)])
    zm, zv = moment_z_scores(draws, ms, Ps)
    assert zm.max() < 3 and zv.max() < 3


def test_ffbs_joint_structure_lag_one_covariance():
    _, view, (_, P, Pp, ms, Ps) = linear_instance()
    res = ekf_forward(view)
    rng = np.random.default_rng(1)
    d = np.array([ffbsx_backward(view, res, rng)[:, 0] for _ in range(10_000)])
    G = P[:-1] / Pp[1:]
    cross = G * Ps[1:]
    emp = np.mean((d[:, :-1] - d[:, :-1].mean(0)) * (d[:, 1:] - d[:, 1:].mean(0)), axis=0)
    se = np.sqrt((Ps[:-1] * Ps[1:] + cross**2) / d.shape[0])
    assert np.max(np.abs(emp - cross) / se) < 4


def test_ffbs_zero_innovations_give_constant_path():
    _, view, _ = linear_instance()
    frozen = dataclasses.replace(view, h=np.full_like(view.h, -1e3))
    path = ffbsx_sample(frozen, np.random.default_rng(2))
    assert np.ptp(path) < 1e-5


def test_ffbsx_paths_are_stable():
    ex = builtin_experiment("exp1", T=200)
    y = simulate_tvsar(ex.structure, ParamPaths(ex.theta, ex.structure),
                       NoiseState(sigma=ex.sigma), np.random.default_rng(3))
    st_ = ex.structure
    view = StateSpaceView.from_data(y, st_, np.full((200 - st_.p_max + 1, st_.r), -3.0), 1.0)
    rng = np.random.default_rng(4)
    for _ in range(5):
        path = ffbsx_sample(view, rng)
        phi = ParamPaths(path, st_).phi()
        for row in phi[::10]:
            assert is_stable(row[:2]) and is_stable(row[2:])


def test_state_space_view_validation():
    y = np.zeros(20)
    st_ = SarStructure((1,), (1,))
    with pytest.raises(InvalidArgument):
        StateSpaceView.from_data(y, st_, np.zeros((5, 1)), 1.0)
    with pytest.raises(InvalidArgument):
        StateSpaceView.from_data(y, st_, np.zeros((20, 1)), -1.0)


# PGAS


def test_pgas_two_particles_reference_wins():
    # observations fit the reference exactly with tiny noise, so the other
    # particle always carries zero weight
    T = 30
    rng = np.random.default_rng(5)
    ref = np.cumsum(np.r_[0.3, 0.1 * rng.standard_normal(T)])[:, None]
    y = rng.normal(size=T + 1)
    st_ = SarStructure((1,), (1,))
    view = StateSpaceView.from_data(y, st_, np.full((T + 1, 1), np.log(0.01)), 1e-6,
                                    m0=np.array([0.3]), P0=np.array([[0.1]]),
                                    stable=False, f0="gaussian")
    view.target[:] = view.X[:, 0] * ref[1:, 0]
    q0 = InitialProposal(np.array([5.0]), np.array([[0.01]]))
    for seed in range(20):
        out = pgas_kernel(view, ref, 2, None, np.random.default_rng(seed), q0)
        assert np.array_equal(out.theta, ref)


def test_pgas_equal_weights_never_resample():
    _, view, _ = linear_instance()
    flat = dataclasses.replace(view, sigma=np.full(view.T, 1e12))
    ref = np.zeros((view.T + 1, 1))
    q0 = InitialProposal(view.m0, view.P0)
    out = pgas_kernel(flat, ref, 16, None, np.random.default_rng(6), q0)
    assert out.resample_count == 0


def test_pgas_marginal_matches_smoother_short_run():
    _, view, (_, _, _, ms, Ps) = linear_instance(T=20, seed=3)
    q0 = InitialProposal(view.m0, view.P0)
    rng = np.random.default_rng(7)
    ref = ffbsx_sample(view, rng)
    out = []
    for i in range(3000):
        ref = pgas_kernel(view, ref, 20, None, rng, q0).theta
        if i % 3 == 0:
            out.append(ref[10, 0])
    ref_dist = stats.norm(ms[10], np.sqrt(Ps[10]))
    assert stats.kstest(out, ref_dist.cdf).pvalue > 0.01


def test_pgas_argument_checks():
    _, view, _ = linear_instance()
    ref = np.zeros((view.T + 1, 1))
    q0 = InitialProposal(view.m0, view.P0)
    with pytest.raises(InvalidArgument):
        pgas_kernel(view, ref, 1, None, np.random.default_rng(), q0)
    with pytest.raises(InvalidArgument):
        pgas_kernel(view, ref, 10, 11, np.random.default_rng(), q0)
    with pytest.raises(InvalidArgument):
        pgas_kernel(view, ref[1:], 10, None, np.random.default_rng(), q0)


def test_pgas_init_reference_single_draw():
    _, view, _ = linear_instance()
    path, q0 = pgas_init_reference(view, 1, np.random.default_rng(8))
    assert path.shape == (view.T + 1, 1) and np.all(np.isfinite(path))
    assert np.all(np.linalg.eigvalsh(q0.cov) > 0)
    with pytest.raises(InvalidArgument):
        pgas_init_reference(view, 0, np.random.default_rng())


def test_initial_proposal_logpdf_and_fit(rng):
    q = InitialProposal(np.array([1.0, -1.0]), np.array([[2.0, 0.3], [0.3, 1.0]]))
    x = rng.normal(size=(5, 2))
    ref = stats.multivariate_normal(q.mean, q.cov).logpdf(x)
    assert np.allclose(q.logpdf(x), ref)
    fit = InitialProposal.from_draws(q.sample(rng, 20_000))
    assert np.allclose(fit.cov, q.cov, atol=0.08)
    single = InitialProposal.from_draws(np.ones((1, 2)))
    assert np.all(np.linalg.eigvalsh(single.cov) > 0)


# noise


def test_sigma_static_prior_when_no_data(rng):
    draws = np.array([draw_sigma_static(np.empty(0), (10, 2.0), rng) for _ in range(40_000)])
    assert draws.mean() == pytest.approx(10 * 2.0 / 8, rel=0.02)


def test_sigma_static_large_sample_limit(rng):
    e = rng.normal(scale=1.5, size=100_000)
    draws = [draw_sigma_static(e, (3, 0.1), rng) for _ in range(200)]
    assert np.mean(draws) == pytest.approx(e @ e / e.size, rel=0.005)


def run_sv(e, iters=1500, burn=500, seed=0):
    rng = np.random.default_rng(seed)
    noise = initial_sv_noise(e)
    g, phis = [], []
    for i in range(iters):
        noise = draw_sv_path(e, noise, rng)
        phis.append(noise.sv_params[1])
        if i >= burn:
            g.append(2 * np.log(noise.sigma))
    return np.array(g), np.array(phis)


def test_sv_constant_volatility_band_covers_truth():
    e = np.random.default_rng(10).normal(scale=2.0, size=400)
    g, phis = run_sv(e)
    lo, hi = np.quantile(g, [0.025, 0.975], axis=0)
    truth = np.log(4.0)
    assert np.mean((lo <= truth) & (truth <= hi)) >= 0.9
    assert np.all((phis > -1) & (phis < 1))


def test_sv_two_regimes_are_separated():
    rng = np.random.default_rng(11)
    e = np.r_[rng.normal(scale=1.0, size=300), rng.normal(scale=3.0, size=300)]
    g, _ = run_sv(e, seed=1)
    sig = np.median(np.exp(g / 2), axis=0)
    assert np.median(sig[300:]) / np.median(sig[:300]) > 2


def test_sv_needs_sv_state(rng):
    with pytest.raises(InvalidArgument):
        draw_sv_path(np.ones(5), NoiseState(), rng)


# Gibbs driver


def test_default_config_stores_thousand_draws():
    cfg = GibbsConfig()
    assert (cfg.draws, cfg.burnin, cfg.thin, cfg.warmup_draws) == (10000, 3000, 10, 500)
    assert cfg.n_stored == 1000
    with pytest.raises(InvalidArgument):
        GibbsConfig(thin=0)
    with pytest.raises(InvalidArgument):
        GibbsConfig(sampler="pgas", particles=10, ess_min=20)


def sar11_series(T, seed, phi=0.5, Phi=0.6, s=4):
    st_ = SarStructure((1, s), (1, 1))
    th = np.tile(np.r_[phi_to_theta([phi]), phi_to_theta([Phi])], (T + 1, 1))
    y = simulate_tvsar(st_, ParamPaths(th, st_), NoiseState(sigma=1.0),
                       np.random.default_rng(seed))
    return y, st_


@pytest.mark.slow
def test_gibbs_recovers_constant_sar11():
    y, st_ = sar11_series(300, 21)
    draws = gibbs_run(y, st_, GibbsConfig(draws=2000, burnin=1000, thin=2, seed=3))
    med = np.median(draws.phi(), axis=0)
    assert np.mean(np.abs(med[:, 0] - 0.5) < 0.15) >= 0.9
    assert np.mean(np.abs(med[:, 1] - 0.6) < 0.15) >= 0.9


def test_gibbs_deterministic_and_shapes():
    y, st_ = sar11_series(120, 22)
    cfg = GibbsConfig(draws=60, burnin=20, thin=3, seed=9)
    a = gibbs_run(y, st_, cfg)
    b = gibbs_run(y, st_, cfg)
    T = 120 - st_.p_max
    assert a.theta.shape == (20, T + 1, 2) and a.h.shape == (20, T + 1, 2)
    assert a.sigma.shape == (20,) and a.mu.shape == (20, 2)
    assert list(a.times[[0, -1]]) == [st_.p_max, 120]
    for name in ("theta", "h", "sigma", "mu", "kappa", "update_rates"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.all((a.kappa > -1) & (a.kappa < 1))


def test_gibbs_pgas_and_sv_run():
    y, st_ = sar11_series(100, 23)
    cfg = GibbsConfig(draws=20, burnin=5, thin=1, sampler="pgas", particles=20,
                      warmup_draws=5, noise="sv", seed=2)
    d = gibbs_run(y, st_, cfg)
    assert d.sigma.shape == (20, d.T) and d.sv_params.shape == (20, 3)
    assert d.resample_count > 0
    assert np.all((d.update_rates >= 0) & (d.update_rates <= 1))


def test_gibbs_white_noise_structure():
    y = np.random.default_rng(0).normal(size=50)
    d = gibbs_run(y, SarStructure((1,), (0,)), GibbsConfig(draws=10, burnin=2, thin=1))
    assert d.theta.shape == (10, 51, 0)
    assert np.median(d.sigma) == pytest.approx(np.std(y), rel=0.3)
