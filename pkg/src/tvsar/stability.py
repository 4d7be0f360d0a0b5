"""Stable parameterization of AR polynomials.

Unrestricted coefficients ``theta`` map to partial autocorrelations
``r = theta / sqrt(1 + theta^2)`` and then, through the Durbin-Levinson
recursion, to coefficients ``phi`` of a stable polynomial
``1 - phi_1 L - ... - phi_p L^p``. Every ``theta`` in R^p lands inside the
stability region and every stable ``phi`` has exactly one preimage.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import optimize

from tvsar.distributions import sample_skew_t, skew_t_logpdf
from tvsar.errors import DomainError, InvalidArgument

__all__ = [
    "GaussianPrior",
    "theta_to_pacf",
    "pacf_to_phi",
    "theta_to_phi",
    "phi_to_theta",
    "stability_jacobian",
    "theta_paths_to_phi",
    "sample_uniform_stable_theta",
    "uniform_prior_shape",
    "uniform_prior_logpdf",
    "normal_approx_prior",
    "hellinger_normal_fit",
    "companion_eigenvalues",
    "is_stable",
]


@dataclass(frozen=True)
class GaussianPrior:
    means: np.ndarray
    stdevs: np.ndarray

    def __post_init__(self):
        if len(self.means) != len(self.stdevs):
            raise InvalidArgument("means and stdevs must have equal length")
        if np.any(np.asarray(self.stdevs) <= 0):
            raise InvalidArgument("stdevs must be positive")


def _as_vector(x, name):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be a vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} must be finite")
    return arr


def theta_to_pacf(theta):
    theta = _as_vector(theta, "theta")
    return theta / np.sqrt(1.0 + theta * theta)


def pacf_to_phi(r):
    """Durbin-Levinson: partial autocorrelations -> stable AR coefficients."""
    r = _as_vector(r, "pacf")
    if np.any(np.abs(r) >= 1.0):
        raise InvalidArgument("partial autocorrelations must lie in (-1, 1)")
    phi = np.zeros(r.size)
    for k in range(r.size):
        prev = phi[:k].copy()
        phi[:k] = prev - r[k] * prev[::-1]
        phi[k] = r[k]
    return phi


def theta_to_phi(theta):
    return pacf_to_phi(theta_to_pacf(theta))


def phi_to_theta(phi):
    """Inverse map; raises :class:`DomainError` if ``phi`` is not stable."""
    phi = _as_vector(phi, "phi")
    p = phi.size
    r = np.zeros(p)
    cur = phi.copy()
    for k in range(p - 1, -1, -1):
        rk = cur[k]
        if abs(rk) >= 1.0:
            raise DomainError("coefficients are not in the stability region")
        r[k] = rk
        head = cur[:k]
        cur = (head + rk * head[::-1]) / (1.0 - rk * rk)
    return r / np.sqrt(1.0 - r * r)


@njit(cache=True)
def _phi_and_tangent(theta):
    # forward-mode differentiation: each quantity carries its value and its
    # derivative w.r.t. every theta_j (a dual number with p tangent slots)
    p = theta.shape[0]
    r = np.empty(p)
    dr = np.empty(p)
    for k in range(p):
        s = 1.0 + theta[k] * theta[k]
        r[k] = theta[k] / np.sqrt(s)
        dr[k] = 1.0 / (s * np.sqrt(s))
    phi = np.zeros(p)
    dphi = np.zeros((p, p))
    prev = np.empty(p)
    dprev = np.empty((p, p))
    for k in range(p):
        for j in range(k):
            prev[j] = phi[j]
            for m in range(p):
                dprev[j, m] = dphi[j, m]
        for j in range(k):
            phi[j] = prev[j] - r[k] * prev[k - 1 - j]
            for m in range(p):
                dphi[j, m] = dprev[j, m] - r[k] * dprev[k - 1 - j, m]
            dphi[j, k] -= dr[k] * prev[k - 1 - j]
        phi[k] = r[k]
        for m in range(p):
            dphi[k, m] = 0.0
        dphi[k, k] = dr[k]
    return phi, dphi


def stability_jacobian(theta):
    """Jacobian d phi / d theta by forward-mode differentiation."""
    theta = _as_vector(theta, "theta")
    return _phi_and_tangent(theta)[1]


def theta_paths_to_phi(theta):
    """Row-wise ``theta -> phi`` for a (n, p) matrix of coefficient vectors."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    r = theta / np.sqrt(1.0 + theta * theta)
    phi = np.zeros_like(theta)
    for k in range(theta.shape[1]):
        prev = phi[:, :k].copy()
        phi[:, :k] = prev - r[:, k:k + 1] * prev[:, ::-1]
        phi[:, k] = r[:, k]
    return phi


def uniform_prior_shape(k):
    """Beta shape pair (alpha_k, beta_k) of the k-th partial autocorrelation."""
    return (k + 1) // 2, k // 2 + 1


def sample_uniform_stable_theta(p, rng, size=None):
    """Independent draws of ``theta`` whose image is uniform on the stability region.

    Odd lags use a Student-t with k+1 degrees of freedom, even lags the
    skew-t(k/2, (k+2)/2); both scaled by 1/sqrt(k+1).
    """
    if p < 1:
        raise InvalidArgument("p must be at least 1")
    shape = (p,) if size is None else (size, p)
    out = np.empty(shape)
    for k in range(1, p + 1):
        scale = 1.0 / np.sqrt(k + 1)
        n = size
        if k % 2:
            draw = scale * rng.standard_t(k + 1, n)
        else:
            draw = sample_skew_t(k / 2, (k + 2) / 2, 0.0, scale, rng, n)
        out[..., k - 1] = draw
    return out


def uniform_prior_logpdf(theta):
    """Log density of the uniform-over-stability prior on ``theta`` (last axis = lags)."""
    theta = np.asarray(theta, dtype=float)
    total = 0.0
    for k in range(1, theta.shape[-1] + 1):
        a, b = uniform_prior_shape(k)
        total = total + skew_t_logpdf(theta[..., k - 1], a, b, 0.0, 1.0 / np.sqrt(k + 1))
    return total


# Hellinger-closest normal approximations for lags 1..10
_TABLE_MEANS = np.array([0, -0.53, 0, -0.264, 0, -0.175, 0, -0.13, 0, -0.103])
_TABLE_SDS = np.array([1.042, 0.858, 0.622, 0.558, 0.475, 0.441, 0.397, 0.375, 0.348, 0.332])

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)


def _hellinger_sq(mean, sd, k):
    a, b = uniform_prior_shape(k)
    lo, hi = mean - 20 * sd, mean + 20 * sd
    x = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * _GL_WEIGHTS
    log_p = skew_t_logpdf(x, a, b, 0.0, 1.0 / np.sqrt(k + 1))
    log_q = -0.5 * ((x - mean) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi)
    return 1.0 - float(np.sum(w * np.exp(0.5 * (log_p + log_q))))


@lru_cache(maxsize=None)
def hellinger_normal_fit(k):
    """Normal (mean, sd) minimizing the squared Hellinger distance to the lag-k prior."""
    if k % 2:
        res = optimize.minimize_scalar(lambda s: _hellinger_sq(0.0, s, k),
                                       bounds=(1e-3, 10.0), method="bounded",
                                       options={"xatol": 1e-10})
        return 0.0, float(res.x)
    start = [_TABLE_MEANS[-1], np.log(_TABLE_SDS[-1])]
    res = optimize.minimize(lambda v: _hellinger_sq(v[0], np.exp(v[1]), k), start,
                            method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-8, "maxiter": 4000})
    return float(res.x[0]), float(np.exp(res.x[1]))


def normal_approx_prior(p):
    """Independent normal approximation of the uniform-over-stability prior."""
    if p < 1:
        raise InvalidArgument("p must be at least 1")
    means = np.empty(p)
    sds = np.empty(p)
    for k in range(1, p + 1):
        if k <= _TABLE_MEANS.size:
            means[k - 1], sds[k - 1] = _TABLE_MEANS[k - 1], _TABLE_SDS[k - 1]
        else:
            means[k - 1], sds[k - 1] = hellinger_normal_fit(k)
    return GaussianPrior(means, sds)


def companion_eigenvalues(phi):
    """Eigenvalues of the companion matrix of ``1 - phi_1 L - ... - phi_p L^p``."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size < 1:
        raise InvalidArgument("need at least one coefficient")
    p = phi.size
    comp = np.zeros((p, p))
    comp[0] = phi
    comp[1:, :-1] = np.eye(p - 1)
    return np.linalg.eigvals(comp)


def is_stable(phi):
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size == 0:
        return True
    return bool(np.all(np.abs(companion_eigenvalues(phi)) < 1.0))
