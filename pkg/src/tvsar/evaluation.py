"""Spectral summaries, scores, chain diagnostics and simulation designs."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from tvsar.distributions import sample_z
from tvsar.errors import InvalidArgument
from tvsar.model import SarStructure, block_phi_paths, expand_paths, log_spectral_density

__all__ = [
    "SpectralGrid",
    "ExperimentSpec",
    "Ess",
    "Spectrogram",
    "default_omegas",
    "spectral_grid",
    "true_spectral_grid",
    "mse_log_spectral",
    "lps_one_step",
    "predictive_logscores",
    "chain_ess",
    "update_rate",
    "builtin_experiment",
    "EXPERIMENTS",
    "tapered_periodogram",
    "write_grid_csv",
    "grid_manifest",
]

QUANTILES = (0.025, 0.5, 0.975)


def default_omegas(m=314):
    return np.linspace(0.01, np.pi, m)


@dataclass
class SpectralGrid:
    """Log spectral density summaries on a (time, frequency) grid.

    ``median``, ``lower`` and ``upper`` are (times, omegas); ``values`` holds
    the per-draw surfaces when requested.
    """

    times: np.ndarray
    omegas: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    values: np.ndarray | None = None
    n_draws: int = 1

    def __post_init__(self):
        if np.any(np.diff(self.omegas) <= 0):
            raise InvalidArgument("frequencies must be strictly increasing")


def _rows_for(times, all_times):
    times = np.asarray(times, dtype=np.int64)
    rows = np.searchsorted(all_times, times)
    if np.any(rows >= all_times.size) or np.any(all_times[np.minimum(rows, all_times.size - 1)] != times):
        raise InvalidArgument("requested times are not covered by the draws")
    if np.any(rows == 0):
        raise InvalidArgument("the first state row precedes the data; choose later times")
    return rows


def spectral_grid(draws, times=None, omegas=None, keep_values=False, chunk=16):
    """Posterior median and 95% band of log f(t, omega) from :class:`PosteriorDraws`.

    ``times`` are 1-based data times (default: every fitted time point).
    Work is split into blocks of ``chunk`` time points to bound memory.
    """
    if draws.n_draws == 0:
        raise InvalidArgument("no posterior draws")
    omegas = default_omegas() if omegas is None else np.asarray(omegas, dtype=float)
    times = draws.times[1:] if times is None else np.asarray(times, dtype=np.int64)
    rows = _rows_for(times, draws.times)
    sig = draws.sigma_paths()  # sigma path index t-1 for state row t
    n, r = draws.n_draws, draws.theta.shape[2]
    shape = (times.size, omegas.size)
    med, lo, hi = np.empty(shape), np.empty(shape), np.empty(shape)
    values = np.empty((n, times.size, omegas.size)) if keep_values else None
    for start in range(0, times.size, chunk):
        sl = slice(start, start + chunk)
        rr = rows[sl]
        th = draws.theta[:, rr, :].reshape(n * rr.size, r)
        sg = sig[:, rr - 1].reshape(-1)
        lf = log_spectral_density(draws.structure, th, sg, omegas).reshape(n, rr.size, -1)
        q = np.quantile(lf, QUANTILES, axis=0)
        lo[sl], med[sl], hi[sl] = q
        if keep_values:
            values[:, sl] = lf
    return SpectralGrid(times, omegas, med, lo, hi, values, n)


def true_spectral_grid(structure, theta, sigma, times, omegas=None, first_time=0):
    """Exact log f(t, omega) for known paths; ``theta`` row i is time ``first_time + i``."""
    omegas = default_omegas() if omegas is None else np.asarray(omegas, dtype=float)
    times = np.asarray(times, dtype=np.int64)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    rows = times - first_time
    if np.any(rows < 0) or np.any(rows >= theta.shape[0]):
        raise InvalidArgument("requested times are outside the parameter paths")
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (theta.shape[0],))
    lf = log_spectral_density(structure, theta[rows], sig[rows], omegas)
    return SpectralGrid(times, omegas, lf, lf.copy(), lf.copy(), None, 1)


def mse_log_spectral(estimate, truth):
    """Mean squared difference of median log spectra over the common grid."""
    if (estimate.median.shape != truth.median.shape
            or not np.array_equal(estimate.times, truth.times)
            or not np.allclose(estimate.omegas, truth.omegas, rtol=0, atol=1e-12)):
        raise InvalidArgument("spectral grids are not aligned")
    return float(np.mean((estimate.median - truth.median) ** 2))


# --------------------------------------------------------------------------
# predictive scores
# --------------------------------------------------------------------------

_LOG_FLOOR = np.log(1e-300)


def predictive_logscores(draws, y_full, test_times, rng):
    """Log one-step predictive densities for consecutive ``test_times``.

    Starts from the final state of every draw and propagates each draw one
    step per test time: theta by its random walk, h by its AR(1) with Z
    innovations, stochastic volatility by its AR(1). Draws are not reweighted
    by the test data. ``test_times`` are 1-based and must directly follow the
    fitted sample.
    """
    y_full = np.asarray(y_full, dtype=float)
    st = draws.structure
    test_times = np.asarray(test_times, dtype=np.int64)
    if test_times[0] != draws.times[-1] + 1 or np.any(np.diff(test_times) != 1):
        raise InvalidArgument("test times must directly follow the fitted sample")
    theta = draws.theta[:, -1, :].copy()
    h = draws.h[:, -1, :].copy()
    mu, kappa = draws.mu, draws.kappa
    n, r = theta.shape
    if draws.noise == "sv":
        g = 2 * np.log(draws.sigma[:, -1])
        sv = draws.sv_params
    out = np.empty(test_times.size)
    for i, t in enumerate(test_times):
        if r:
            h = mu + kappa * (h - mu) + sample_z(0.5, 0.5, 0.0, 1.0, rng, (n, r))
            theta = theta + np.exp(h / 2) * rng.standard_normal((n, r))
        if draws.noise == "sv":
            g = sv[:, 0] + sv[:, 1] * (g - sv[:, 0]) + np.sqrt(sv[:, 2]) * rng.standard_normal(n)
            sigma = np.exp(g / 2)
        else:
            sigma = draws.sigma
        x = y_full[t - 1 - st.lags]
        mean = expand_paths(st, theta) @ x if r else np.zeros(n)
        ll = -0.5 * np.log(2 * np.pi * sigma**2) - 0.5 * ((y_full[t - 1] - mean) / sigma) ** 2
        out[i] = max(float(logsumexp(ll) - np.log(n)), _LOG_FLOOR)
    return out


def lps_one_step(y_full, split, structure, config, refit_every=12, rng=None, fit=None):
    """Sum of log one-step predictive densities over ``y_{split+1..n}``.

    The posterior is refitted on all data before each block of
    ``refit_every`` test points and propagated forward within the block.
    ``fit`` defaults to :func:`tvsar.samplers.gibbs_run`.
    """
    from tvsar.samplers import gibbs_run

    y_full = np.asarray(y_full, dtype=float)
    n = y_full.size
    if not structure.p_max + 2 < split < n:
        raise InvalidArgument("split must leave training data and at least one test point")
    if refit_every < 1:
        raise InvalidArgument("refit_every must be positive")
    fit = gibbs_run if fit is None else fit
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 1])) if rng is None else rng
    total = 0.0
    for start in range(split + 1, n + 1, refit_every):
        block = np.arange(start, min(start + refit_every, n + 1))
        draws = fit(y_full[:start - 1], structure, config)
        total += float(predictive_logscores(draws, y_full, block, rng).sum())
    return total


# --------------------------------------------------------------------------
# chain diagnostics
# --------------------------------------------------------------------------

class Ess(NamedTuple):
    value: float
    zero_variance: bool


def _autocorr(x):
    n = x.size
    f = np.fft.rfft(x - x.mean(), n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov / acov[0]


def chain_ess(chain):
    """Effective sample size with Geyer's initial positive sequence truncation."""
    x = np.asarray(chain, dtype=float)
    if x.size < 10:
        raise InvalidArgument("chain must have at least 10 draws")
    n = x.size
    if np.ptp(x) == 0:
        return Ess(float(n), True)
    rho = _autocorr(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return Ess(float(n / max(tau, 1.0 / n)), False)


def update_rate(chain):
    """Fraction of consecutive draws that differ."""
    x = np.asarray(chain)
    if x.shape[0] < 2:
        raise InvalidArgument("chain must have at least 2 draws")
    changed = x[1:] != x[:-1]
    if changed.ndim > 1:
        changed = changed.reshape(changed.shape[0], -1).any(axis=1)
    return float(changed.mean())


# --------------------------------------------------------------------------
# simulation designs
# --------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """Data-generating design. ``theta`` rows are t = 0..T."""

    id: str
    structure: SarStructure
    theta: np.ndarray
    sigma: float = 1.0

    @property
    def T(self):
        return self.theta.shape[0] - 1

    def phi(self):
        return block_phi_paths(self.structure, self.theta)

    def truth_grid(self, times=None, omegas=None):
        times = np.arange(1, self.T + 1) if times is None else times
        return true_spectral_grid(self.structure, self.theta, self.sigma, times, omegas)


def _piecewise(t, T, cuts, values):
    # cuts are the last time of each segment at T = 1000
    edges = np.array(cuts, dtype=float) * T / 1000.0
    return np.asarray(values)[np.searchsorted(edges, np.maximum(t, 1), side="left")]


def builtin_experiment(id, T=1000):
    """Parameter paths of the simulation designs.

    For ``T != 1000`` the change points are rescaled proportionally.
    """
    t = np.arange(T + 1, dtype=float)
    half = np.where(t <= T / 2, 1.0, -1.0)
    sine = 0.8 * np.sin(np.pi * t / T)
    seasonal = _piecewise(t, T, (300, 700), (-0.70, 0.0, 0.95))
    if id == "exp1":
        st = SarStructure((1, 12), (2, 2))
        theta = np.column_stack([half * sine, np.full(T + 1, -0.8), seasonal, np.full(T + 1, -0.9)])
    elif id == "exp1-one-lag":
        st = SarStructure((1, 12), (1, 1))
        theta = np.column_stack([half * sine, seasonal])
    elif id == "exp2":
        st = SarStructure((1, 4, 12), (1, 1, 1))
        theta = np.column_stack([sine, np.full(T + 1, 0.5),
                                 _piecewise(t, T, (250, 750), (-0.50, 0.0, 0.95))])
    elif id == "exp3":
        st = SarStructure((1, 12), (2, 2))
        zero = np.zeros(T + 1)
        theta = np.column_stack([half * sine, zero, seasonal, zero])
    else:
        raise InvalidArgument(f"unknown experiment {id!r}; choose from {', '.join(EXPERIMENTS)}")
    return ExperimentSpec(id, st, theta, 1.0)


EXPERIMENTS = ("exp1", "exp1-one-lag", "exp2", "exp3")


# --------------------------------------------------------------------------
# nonparametric spectrogram
# --------------------------------------------------------------------------

@dataclass
class Spectrogram:
    times: np.ndarray    # window centres, 1-based
    omegas: np.ndarray
    values: np.ndarray   # (windows, omegas), same scale as f(t, omega)


def tapered_periodogram(y, window=120, hop=36):
    """Hanning-tapered periodograms over sliding windows.

    Normalised as ``|sum w_t y_t e^{-i omega t}|^2 / (pi sum w_t^2)`` so
    white noise with unit variance averages 1/pi. Frequencies are the
    Fourier frequencies in (0, pi].
    """
    y = np.asarray(y, dtype=float)
    if window < 2 or hop < 1:
        raise InvalidArgument("window must be at least 2 and hop at least 1")
    if window > y.size:
        raise InvalidArgument(f"window {window} exceeds series length {y.size}")
    taper = np.hanning(window + 2)[1:-1]
    starts = np.arange(0, y.size - window + 1, hop)
    segs = np.stack([y[s:s + window] for s in starts])
    spec = np.abs(np.fft.rfft(segs * taper, axis=1)) ** 2 / (np.pi * np.sum(taper**2))
    omegas = 2 * np.pi * np.arange(spec.shape[1]) / window
    keep = omegas > 0
    centres = starts + (window + 1) / 2
    return Spectrogram(centres, omegas[keep], spec[:, keep])


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def write_grid_csv(grid, path):
    """Long-format CSV: t, omega, q025, median, q975."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "omega", "q025", "median", "q975"])
        for i, t in enumerate(grid.times):
            for j, om in enumerate(grid.omegas):
                w.writerow([int(t), f"{om:.17g}", f"{grid.lower[i, j]:.17g}",
                            f"{grid.median[i, j]:.17g}", f"{grid.upper[i, j]:.17g}"])


def grid_manifest(grid, seed=None, config_hash=None):
    return json.dumps({
        "n_times": int(grid.times.size),
        "n_omegas": int(grid.omegas.size),
        "omega_range": [float(grid.omegas[0]), float(grid.omegas[-1])],
        "n_draws": int(grid.n_draws),
        "seed": seed,
        "config_sha256": config_hash,
    }, indent=2, sort_keys=True)
