"""Block Gibbs driver.

Each iteration updates, in order: the coefficient paths (FFBSx or PGAS),
the noise (static variance or stochastic volatility), and for every
coefficient its dynamic shrinkage block.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from tvsar.distributions import sample_trunc_normal
from tvsar.dsp import DspPriors, DspState, OffsetPolicy, dsp_block_update
from tvsar.errors import DegenerateWeights, InvalidArgument, NumericalFailure
from tvsar.model import NoiseState, design_matrix, expand_paths, fit_static_ar
from tvsar.samplers.noise import SvPriors, draw_sigma_static, draw_sv_path, initial_sv_noise
from tvsar.samplers.pgas import InitialProposal, pgas_kernel
from tvsar.samplers.statespace import StateSpaceView, ffbsx_sample

__all__ = ["GibbsConfig", "PosteriorDraws", "gibbs_run", "SamplerError"]

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """A Gibbs step failed; carries the iteration and block."""

    def __init__(self, iteration, block, cause):
        self.iteration = iteration
        self.block = block
        super().__init__(f"iteration {iteration}, block {block}: {cause}")


@dataclass(frozen=True)
class GibbsConfig:
    draws: int = 10000
    burnin: int = 3000
    thin: int = 10
    sampler: str = "ffbsx"
    particles: int = 100
    ess_min: float | None = None
    warmup_draws: int = 500
    offset: OffsetPolicy = field(default_factory=OffsetPolicy)
    dsp_priors: DspPriors = field(default_factory=DspPriors)
    noise: str = "static"
    v0: float = 3.0
    sv_priors: SvPriors = field(default_factory=SvPriors)
    jacobian: str = "ad"
    init: str = "default"
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        for name in ("draws", "burnin", "thin", "particles", "warmup_draws", "log_every"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < (0 if name == "burnin" else 1):
                raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")
        if self.sampler not in ("ffbsx", "pgas"):
            raise InvalidArgument(f"unknown sampler {self.sampler!r}")
        if self.sampler == "pgas" and self.particles < 2:
            raise InvalidArgument("PGAS needs at least two particles")
        if self.ess_min is not None and not 0 < self.ess_min <= self.particles:
            raise InvalidArgument("ESS threshold must lie in (0, particles]")
        if self.noise not in ("static", "sv"):
            raise InvalidArgument(f"unknown noise mode {self.noise!r}")
        if self.jacobian not in ("ad", "fd"):
            raise InvalidArgument(f"unknown jacobian method {self.jacobian!r}")
        if self.init not in ("default", "prior"):
            raise InvalidArgument(f"unknown initialisation {self.init!r}")
        if self.v0 <= 0:
            raise InvalidArgument("v0 must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")

    @property
    def n_stored(self):
        return self.draws // self.thin

    def to_dict(self):
        d = asdict(self)
        d["offset"] = str(self.offset)
        return d


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws.

    ``theta`` and ``h`` are (draws, T+1, r); ``sigma`` is (draws,) for static
    noise and (draws, T) for stochastic volatility; ``mu`` and ``kappa`` are
    (draws, r). ``times`` maps state rows to 1-based data times.
    ``update_rates`` is (T+1, r), computed on every post-burn-in iteration.
    """

    structure: object
    times: np.ndarray
    theta: np.ndarray
    h: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray
    update_rates: np.ndarray
    noise: str = "static"
    sv_params: np.ndarray | None = None
    seed: int = 0
    resample_count: int = 0
    degenerate_events: int = 0
    timings: dict = field(default_factory=dict)
    run_log: list = field(default_factory=list)

    @property
    def n_draws(self):
        return self.theta.shape[0]

    @property
    def T(self):
        return self.theta.shape[1] - 1

    def sigma_paths(self):
        """Noise standard deviations as a (draws, T) array."""
        if self.sigma.ndim == 1:
            return np.repeat(self.sigma[:, None], self.T, axis=1)
        return self.sigma

    def phi(self):
        """Stable per-polynomial coefficients, (draws, T+1, r)."""
        from tvsar.model import block_phi_paths
        n, T1, r = self.theta.shape
        return block_phi_paths(self.structure, self.theta.reshape(-1, r)).reshape(n, T1, r)


def gibbs_run(y, structure, config=GibbsConfig(), progress=None):
    """Run the block Gibbs sampler and return :class:`PosteriorDraws`.

    The first p_max observations are conditioned on, so the state has
    T = len(y) - p_max transitions. ``progress`` is an optional callable
    receiving ``(iteration, total)``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("data must be finite")
    X = design_matrix(y, structure)
    target = y[structure.p_max:]
    T, r = target.size, structure.r
    if T < 2:
        raise InvalidArgument("need at least two observations beyond the maximal lag")

    seq = np.random.SeedSequence(int(config.seed))
    children = seq.spawn(2 + r)
    rng_path = np.random.default_rng(children[0])
    rng_noise = np.random.default_rng(children[1])
    rng_dsp = [np.random.default_rng(c) for c in children[2:]]

    dp = config.dsp_priors
    states = []
    for k in range(r):
        if config.init == "prior":
            mu = float(rng_dsp[k].normal(dp.mu0, dp.sigma0))
            kappa = sample_trunc_normal(dp.kappa0, dp.psi0, -1.0, 1.0, rng_dsp[k])
        else:
            mu, kappa = dp.mu0, dp.kappa0
        states.append(DspState.initial(T, mu, kappa))

    _, s0_sq = fit_static_ar(y, structure)
    sigma2 = s0_sq
    noise = NoiseState("static", np.sqrt(s0_sq))
    sv_priors = config.sv_priors
    if config.noise == "sv":
        resid0 = target - X @ fit_static_ar(y, structure)[0] if r else target
        noise = initial_sv_noise(resid0, sv_priors.phi0, sv_priors.var_scale)
        if sv_priors.mean_loc is None:
            sv_priors = SvPriors(float(np.mean(np.log(resid0**2 + 1e-12 * np.mean(resid0**2)))),
                                 sv_priors.mean_sd, sv_priors.phi0, sv_priors.phi_sd,
                                 sv_priors.var_dof, sv_priors.var_scale)

    base_view = StateSpaceView.from_data(y, structure, np.zeros((T + 1, r)), 1.0,
                                         jacobian=config.jacobian)
    warm = config.warmup_draws if config.sampler == "pgas" and r else 0
    total = warm + config.burnin + config.draws
    n_store = config.n_stored

    theta_s = np.empty((n_store, T + 1, r))
    h_s = np.empty((n_store, T + 1, r))
    mu_s = np.empty((n_store, r))
    kappa_s = np.empty((n_store, r))
    sigma_s = np.empty((n_store, T)) if config.noise == "sv" else np.empty(n_store)
    sv_s = np.empty((n_store, 3)) if config.noise == "sv" else None

    theta = np.zeros((T + 1, r))
    reference = None
    q0 = None
    warm_theta0 = []
    changes = np.zeros((T + 1, r))
    prev = None
    n_resample = 0
    n_degenerate = 0
    timings = {"path": 0.0, "noise": 0.0, "dsp": 0.0}
    run_log = []
    stored = 0

    for it in range(total):
        phase = "warmup" if it < warm else ("burnin" if it < warm + config.burnin else "sample")
        H = np.column_stack([s.h for s in states]) if r else np.zeros((T + 1, 0))
        sig = noise.sigma_path(T) if config.noise == "sv" else np.sqrt(sigma2)

        t0 = time.perf_counter()
        if r:
            view = StateSpaceView(structure, base_view.X, base_view.target, H, sig,
                                  base_view.m0, base_view.P0, jacobian=config.jacobian)
            try:
                if config.sampler == "ffbsx" or phase == "warmup":
                    theta = ffbsx_sample(view, rng_path)
                    if phase == "warmup":
                        warm_theta0.append(theta[0].copy())
                        if it == warm - 1:
                            reference = theta
                            q0 = InitialProposal.from_draws(np.array(warm_theta0))
                else:
                    try:
                        res = pgas_kernel(view, reference, config.particles, config.ess_min,
                                          rng_path, q0)
                        theta = res.theta
                        if phase == "sample":
                            n_resample += res.resample_count
                    except DegenerateWeights as exc:
                        n_degenerate += 1
                        log.warning("iteration %d: %s; keeping the reference path", it, exc)
                        theta = reference
                    reference = theta
            except NumericalFailure as exc:
                raise SamplerError(it, "path", exc) from exc
        t1 = time.perf_counter()

        try:
            if r:
                resid = target - np.einsum("tl,tl->t", X, expand_paths(structure, theta[1:]))
            else:
                resid = target
            if config.noise == "sv":
                noise = draw_sv_path(resid, noise, rng_noise, sv_priors)
            else:
                sigma2 = draw_sigma_static(resid, (config.v0, s0_sq), rng_noise)
        except NumericalFailure as exc:
            raise SamplerError(it, "noise", exc) from exc
        t2 = time.perf_counter()

        nu = np.diff(theta, axis=0)
        for k in range(r):
            try:
                states[k] = dsp_block_update(states[k], nu[:, k], config.offset, rng_dsp[k], dp)
            except (NumericalFailure, InvalidArgument) as exc:
                raise SamplerError(it, f"dsp[{k}]", exc) from exc
        t3 = time.perf_counter()

        timings["path"] += t1 - t0
        timings["noise"] += t2 - t1
        timings["dsp"] += t3 - t2

        if phase == "sample":
            j = it - warm - config.burnin
            if prev is not None:
                changes += theta != prev
            prev = theta.copy()
            if (j + 1) % config.thin == 0 and stored < n_store:
                theta_s[stored] = theta
                h_s[stored] = np.column_stack([s.h for s in states]) if r else H
                mu_s[stored] = [s.mu for s in states]
                kappa_s[stored] = [s.kappa for s in states]
                if config.noise == "sv":
                    sigma_s[stored] = noise.sigma_path(T)
                    sv_s[stored] = noise.sv_params
                else:
                    sigma_s[stored] = np.sqrt(sigma2)
                stored += 1
        if (it + 1) % config.log_every == 0 or it + 1 == total:
            run_log.append({"iteration": it + 1, "phase": phase,
                            "seconds": {k: round(v, 6) for k, v in timings.items()},
                            "resample_count": n_resample, "degenerate_events": n_degenerate})
        if progress is not None:
            progress(it + 1, total)

    rates = changes / max(config.draws - 1, 1)
    return PosteriorDraws(
        structure=structure,
        times=np.arange(structure.p_max, structure.p_max + T + 1),
        theta=theta_s, h=h_s, sigma=sigma_s, mu=mu_s, kappa=kappa_s,
        update_rates=rates, noise=config.noise, sv_params=sv_s, seed=int(config.seed),
        resample_count=n_resample, degenerate_events=n_degenerate,
        timings=timings, run_log=run_log)
