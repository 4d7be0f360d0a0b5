"""Particle Gibbs with ancestor sampling, bootstrap proposals.

The conditional SMC sweep keeps the reference trajectory in the last
particle slot. Resampling happens only when the ESS of the previous weights
falls below ``ess_min``; the reference ancestor is drawn at those steps from
``w_{t-1} f(theta*_t | theta_{t-1})`` and otherwise keeps its own lineage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from tvsar.distributions import _systematic
from tvsar.errors import DegenerateWeights, InvalidArgument
from tvsar.model import _expand_only
from tvsar.samplers.statespace import ekf_forward, ekf_smoother, ffbsx_backward
from tvsar.stability import uniform_prior_logpdf

__all__ = ["InitialProposal", "PgasResult", "pgas_kernel", "pgas_init_reference",
           "initial_log_prior"]

@dataclass
class InitialProposal:
    """Gaussian proposal ``q0`` for theta_0."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        self.cov = 0.5 * (cov + cov.T)
        self.chol = np.linalg.cholesky(self.cov)

    @classmethod
    def from_draws(cls, theta0):
        """Moment fit to a sample of theta_0 draws, floored so the covariance is definite."""
        theta0 = np.atleast_2d(np.asarray(theta0, dtype=float))
        mean = theta0.mean(axis=0)
        r = theta0.shape[1]
        cov = np.cov(theta0, rowvar=False).reshape(r, r) if theta0.shape[0] > 1 else np.zeros((r, r))
        cov = cov + np.eye(r) * max(1e-10, 1e-6 * np.trace(cov) / max(r, 1))
        return cls(mean, cov)

    def sample(self, rng, n):
        return self.mean + rng.standard_normal((n, self.mean.size)) @ self.chol.T

    def logpdf(self, x):
        d = np.linalg.solve(self.chol, (x - self.mean).T)
        return (-0.5 * np.sum(d * d, axis=0) - np.log(np.diag(self.chol)).sum()
                - 0.5 * self.mean.size * np.log(2 * np.pi))


@dataclass
class PgasResult:
    theta: np.ndarray
    resample_count: int


def initial_log_prior(view, theta0):
    """log f0 for rows of ``theta0``."""
    theta0 = np.atleast_2d(theta0)
    if view.f0 == "gaussian":
        return InitialProposal(view.m0, view.P0).logpdf(theta0)
    total = np.zeros(theta0.shape[0])
    for s, n in zip(view.structure.block_starts, view.structure.block_lengths):
        if n:
            total += uniform_prior_logpdf(theta0[:, s:s + n])
    return total


@njit(cache=True)
def _logsumexp_normalize(logw):
    mx = -np.inf
    for v in logw:
        if v > mx:
            mx = v
    w = np.exp(logw - mx)
    return w / w.sum(), mx


@njit(cache=True)
def _csmc(X, target, sig2, Q, ref, init, logw0, ess_min, rng,
          starts, lengths, mono_factors, mono_sign, mono_lagpos, n_lags, stable):
    T = target.shape[0]
    N, r = init.shape
    parts = np.empty((T + 1, N, r))
    anc = np.empty((T + 1, N), dtype=np.int64)
    parts[0] = init
    for i in range(N):
        anc[0, i] = i
    logw = logw0.copy()
    n_res = 0
    sd = np.empty(r)
    for t in range(1, T + 1):
        if not np.all(np.isfinite(logw) | (logw == -np.inf)):
            return parts, anc, logw, n_res, t
        if np.max(logw) == -np.inf:
            return parts, anc, logw, n_res, t
        w, _ = _logsumexp_normalize(logw)
        ess = 1.0 / np.sum(w * w)
        for k in range(r):
            sd[k] = math.sqrt(Q[t, k])
        if ess < ess_min:
            n_res += 1
            idx = _systematic(w, N - 1, rng.random())
            for i in range(N - 1):
                anc[t, i] = idx[i]
            # ancestor of the reference
            la = np.empty(N)
            for j in range(N):
                acc = 0.0
                for k in range(r):
                    d = ref[t, k] - parts[t - 1, j, k]
                    acc -= 0.5 * d * d / Q[t, k]
                la[j] = logw[j] + acc if w[j] > 0 else -np.inf
            wa, _ = _logsumexp_normalize(la)
            u = rng.random()
            c = 0.0
            pick = N - 1
            for j in range(N):
                c += wa[j]
                if u < c:
                    pick = j
                    break
            anc[t, N - 1] = pick
            for i in range(N):
                logw[i] = 0.0
        else:
            for i in range(N):
                anc[t, i] = i
        for i in range(N - 1):
            a = anc[t, i]
            for k in range(r):
                parts[t, i, k] = parts[t - 1, a, k] + sd[k] * rng.standard_normal()
        parts[t, N - 1] = ref[t]
        x = X[t - 1]
        for i in range(N):
            coef = _expand_only(parts[t, i], starts, lengths, mono_factors, mono_sign,
                                mono_lagpos, n_lags, stable)
            e = target[t - 1] - x @ coef
            logw[i] += -0.5 * e * e / sig2[t - 1]
    return parts, anc, logw, n_res, -1


def pgas_kernel(view, reference, n_particles, ess_min, rng, q0):
    """One conditional-SMC sweep; returns a :class:`PgasResult`.

    ``q0`` is the :class:`InitialProposal` for theta_0; initial weights are
    ``f0 / q0``. Raises :class:`DegenerateWeights` if every weight vanishes.
    """
    N = int(n_particles)
    if N < 2:
        raise InvalidArgument("PGAS needs at least two particles")
    if ess_min is None:
        ess_min = N / 2
    if not 0 < ess_min <= N:
        raise InvalidArgument("ESS threshold must lie in (0, N]")
    ref = np.ascontiguousarray(reference, dtype=float)
    if ref.shape != (view.T + 1, view.r):
        raise InvalidArgument("reference path has the wrong shape")
    if view.r == 0:
        return PgasResult(ref.copy(), 0)
    init = np.empty((N, view.r))
    init[:-1] = q0.sample(rng, N - 1)
    init[-1] = ref[0]
    logw0 = initial_log_prior(view, init) - q0.logpdf(init)
    parts, anc, logw, n_res, fail = _csmc(
        view.X, view.target, view.sigma**2, view.Q, ref, init, logw0, float(ess_min), rng,
        *view.kernel_args())
    if fail < 0 and not np.isfinite(logw.max()):
        fail = view.T
    if fail >= 0:
        raise DegenerateWeights("all particle weights vanished", t=int(fail))
    w = np.exp(logw - logw.max())
    w /= w.sum()
    j = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
    j = min(j, N - 1)
    path = np.empty_like(ref)
    for t in range(view.T, -1, -1):
        path[t] = parts[t, j]
        j = anc[t, j]
    return PgasResult(path, n_res)


def pgas_init_reference(view, warm_draws, rng):
    """Initial reference path and t=0 proposal from an FFBSx warm-up.

    Returns ``(reference, q0)`` where the reference is the last of
    ``warm_draws`` FFBSx draws and ``q0`` is the smoothed Gaussian at t=0.
    """
    if warm_draws < 1:
        raise InvalidArgument("warm_draws must be at least 1")
    res = ekf_forward(view)
    path = None
    for _ in range(warm_draws):
        path = ffbsx_backward(view, res, rng)
    ms, Ps = ekf_smoother(view, res)
    return path, InitialProposal(ms[0], Ps[0] + 1e-12 * np.eye(view.r))
