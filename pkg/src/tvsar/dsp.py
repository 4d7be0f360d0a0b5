"""Dynamic shrinkage process block for one coefficient.

The increments ``nu_t = theta_t - theta_{t-1}`` of a coefficient path have
variance ``exp(h_t)``, and ``h`` follows an AR(1) with Z(1/2, 1/2)
innovations::

    h_t = mu + kappa (h_{t-1} - mu) + eta_t,     h_0 = mu + eta_0.

Each Z innovation is a Polya-Gamma scale mixture of normals, and
``log(nu_t^2)`` is approximated by a 10-component normal mixture, so given
the latent variables everything is Gaussian with a tridiagonal precision.
Allocation indices are 0-based (0..9).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from tvsar.distributions import OMORI, sample_polya_gamma, sample_trunc_normal
from tvsar.errors import InvalidArgument, NumericalFailure

__all__ = [
    "DspState",
    "DspPriors",
    "OffsetPolicy",
    "compute_offset",
    "draw_allocations",
    "h_conditional",
    "draw_h",
    "draw_xi",
    "draw_mu",
    "draw_kappa",
    "dsp_block_update",
    "sample_tridiagonal_gaussian",
    "tridiagonal_solve",
]

_LOG_2PI = np.log(2 * np.pi)


@dataclass
class DspState:
    h: np.ndarray
    xi: np.ndarray
    a: np.ndarray
    mu: float
    kappa: float

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.a = np.asarray(self.a, dtype=np.int64)
        if self.xi.shape != self.h.shape or self.a.size != self.h.size - 1:
            raise InvalidArgument("h and xi need T+1 entries and a needs T")
        if np.any(self.xi <= 0):
            raise InvalidArgument("Polya-Gamma variables must be positive")
        if self.a.size and (self.a.min() < 0 or self.a.max() >= OMORI.weights.size):
            raise InvalidArgument("allocation index out of range")
        if not -1 < self.kappa < 1:
            raise InvalidArgument("kappa must lie in (-1, 1)")

    @classmethod
    def initial(cls, T, mu=-15.0, kappa=0.5):
        """Start at ``h = mu``, ``xi = 1``; allocations point at the central component."""
        return cls(np.full(T + 1, float(mu)), np.ones(T + 1),
                   np.full(T, 4, dtype=np.int64), float(mu), float(kappa))


@dataclass(frozen=True)
class DspPriors:
    """``mu ~ N(mu0, sigma0^2)``, ``kappa ~ TN(kappa0, psi0^2, -1, 1)``."""

    mu0: float = -15.0
    sigma0: float = 3.0
    kappa0: float = 0.5
    psi0: float = 0.3

    def __post_init__(self):
        if self.sigma0 <= 0 or self.psi0 <= 0:
            raise InvalidArgument("prior scales must be positive")
        if not -1 < self.kappa0 < 1:
            raise InvalidArgument("kappa0 must lie in (-1, 1)")


@dataclass(frozen=True)
class OffsetPolicy:
    """Offset added to ``nu^2`` before taking logs.

    ``kind="fixed"`` always returns ``value``; ``kind="dsp"`` applies the
    data-dependent rule of :func:`compute_offset`.
    """

    kind: str = "fixed"
    value: float = 1e-16

    def __post_init__(self):
        if self.kind not in ("fixed", "dsp"):
            raise InvalidArgument(f"unknown offset policy {self.kind!r}")
        if not self.value >= 0:
            raise InvalidArgument("offset must be nonnegative")

    @classmethod
    def parse(cls, text):
        """Parse ``"dsp"`` or ``"fixed:<value>"``."""
        if text == "dsp":
            return cls("dsp")
        kind, _, value = text.partition(":")
        if kind != "fixed" or not value:
            raise InvalidArgument(f"offset must be 'dsp' or 'fixed:<x>', got {text!r}")
        return cls("fixed", float(value))

    def __str__(self):
        return "dsp" if self.kind == "dsp" else f"fixed:{self.value!r}"


def compute_offset(nu, policy):
    """Offset for ``log(nu^2 + offset)``.

    The dsp rule gives ``max(1e-8, 1e-6 * mad(nu))`` when some ``nu_t^2`` is
    below 1e-16 and 0 otherwise; mad is the unscaled median absolute
    deviation about the median.
    """
    if policy.kind == "fixed":
        return float(policy.value)
    nu = np.asarray(nu, dtype=float)
    if nu.size == 0 or np.min(nu * nu) >= 1e-16:
        return 0.0
    mad = float(np.median(np.abs(nu - np.median(nu))))
    return max(1e-8, 1e-6 * mad)


def _log_targets(nu, offset):
    v = np.asarray(nu, dtype=float) ** 2 + offset
    if np.any(v <= 0):
        raise InvalidArgument("nu^2 + offset must be positive; use a positive offset")
    return np.log(v)


def draw_allocations(z, h, rng, mixture=OMORI):
    """Mixture allocations for ``z_t - h_t`` (``h`` may include h_0)."""
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.size == z.size + 1:
        h = h[1:]
    if h.size != z.size:
        raise InvalidArgument("z and h lengths do not match")
    resid = (z - h)[:, None] - mixture.means[None, :]
    logp = (np.log(mixture.weights) - 0.5 * np.log(mixture.variances)
            - 0.5 * resid**2 / mixture.variances)
    logp -= logp.max(axis=1, keepdims=True)
    cum = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(z.size) * cum[:, -1]
    return np.minimum((cum <= u[:, None]).sum(axis=1), mixture.weights.size - 1).astype(np.int64)


# --------------------------------------------------------------------------
# tridiagonal Gaussian machinery
# --------------------------------------------------------------------------

@njit(cache=True)
def _tri_cholesky(diag, off):
    n = diag.shape[0]
    d = np.empty(n)
    l = np.empty(max(n - 1, 0))
    prev = 0.0
    for i in range(n):
        v = diag[i]
        if i > 0:
            l[i - 1] = off[i - 1] / prev
            v -= l[i - 1] * l[i - 1]
        if not v > 0.0:
            return d, l, i
        prev = np.sqrt(v)
        d[i] = prev
    return d, l, -1


@njit(cache=True)
def _tri_forward(d, l, b):
    n = d.shape[0]
    w = np.empty(n)
    for i in range(n):
        v = b[i]
        if i > 0:
            v -= l[i - 1] * w[i - 1]
        w[i] = v / d[i]
    return w


@njit(cache=True)
def _tri_backward(d, l, w):
    n = d.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        v = w[i]
        if i < n - 1:
            v -= l[i] * x[i + 1]
        x[i] = v / d[i]
    return x


def _factor(diag, off):
    d, l, fail = _tri_cholesky(np.ascontiguousarray(diag, dtype=float),
                               np.ascontiguousarray(off, dtype=float))
    if fail >= 0:
        raise NumericalFailure("tridiagonal precision is not positive definite", t=int(fail))
    return d, l


def tridiagonal_solve(diag, off, rhs):
    """Solve ``Q x = rhs`` for symmetric positive-definite tridiagonal ``Q``."""
    d, l = _factor(diag, off)
    return _tri_backward(d, l, _tri_forward(d, l, np.asarray(rhs, dtype=float)))


def sample_tridiagonal_gaussian(diag, off, linear, rng):
    """Draw from ``N(Q^{-1} linear, Q^{-1})`` with ``Q`` tridiagonal.

    ``diag`` holds Q_ii and ``off`` holds Q_{i,i+1}. With ``Q = L L'``
    the mean solves two triangular systems and the noise is ``L'^{-1} e``.
    """
    d, l = _factor(diag, off)
    mean = _tri_backward(d, l, _tri_forward(d, l, np.asarray(linear, dtype=float)))
    return mean + _tri_backward(d, l, rng.standard_normal(d.size))


def _ar1_precision(xi, kappa):
    # precision of h_{0:T} under h_0 ~ N(mu, 1/xi_0), h_t | h_{t-1} ~ N(., 1/xi_t)
    diag = xi.copy()
    diag[:-1] += kappa * kappa * xi[1:]
    off = -kappa * xi[1:]
    return diag, off


def h_conditional(z, a, mu, kappa, xi, mixture=OMORI):
    """Tridiagonal precision ``(diag, off)`` and linear term of ``h | rest``."""
    xi = np.asarray(xi, dtype=float)
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=np.int64)
    if xi.size != z.size + 1 or a.size != z.size:
        raise InvalidArgument("expected T values of z and a and T+1 values of xi")
    diag, off = _ar1_precision(xi, kappa)
    # Q mu 1 written out: row sums of the prior precision times mu
    row_sum = diag.copy()
    row_sum[:-1] += off
    row_sum[1:] += off
    linear = mu * row_sum
    inv_v = 1.0 / mixture.variances[a]
    diag[1:] += inv_v
    linear[1:] += (z - mixture.means[a]) * inv_v
    return diag, off, linear


def draw_h(z, a, mu, kappa, xi, rng, mixture=OMORI):
    """Exact draw of ``h_{0:T}`` from its Gaussian full conditional."""
    diag, off, linear = h_conditional(z, a, mu, kappa, xi, mixture)
    return sample_tridiagonal_gaussian(diag, off, linear, rng)


def _eta(h, mu, kappa):
    eta = np.empty_like(h)
    eta[0] = h[0] - mu
    eta[1:] = h[1:] - mu - kappa * (h[:-1] - mu)
    return eta


def draw_xi(h, mu, kappa, rng):
    """``xi_t ~ PG(1, eta_t)`` for t = 0..T."""
    return sample_polya_gamma(_eta(np.asarray(h, dtype=float), mu, kappa), rng)


def draw_mu(h, kappa, xi, prior, rng):
    """Gaussian update of the global mean log-volatility.

    ``prior`` is ``(mu0, sigma0)``.
    """
    mu0, sigma0 = prior
    if not -1 < kappa < 1:
        raise InvalidArgument("kappa must lie in (-1, 1)")
    h = np.asarray(h, dtype=float)
    xi = np.asarray(xi, dtype=float)
    zt = np.empty_like(h)
    zt[0] = h[0]
    zt[1:] = (h[1:] - kappa * h[:-1]) / (1 - kappa)
    w = xi.copy()
    w[1:] *= (1 - kappa) ** 2
    prec = w.sum() + sigma0**-2
    mean = (w @ zt + mu0 * sigma0**-2) / prec
    return float(mean + rng.standard_normal() / np.sqrt(prec))


def draw_kappa(h, mu, xi, prior, rng):
    """Truncated-normal update of the persistence; ``prior`` is ``(kappa0, psi0)``."""
    kappa0, psi0 = prior
    h = np.asarray(h, dtype=float)
    root = np.sqrt(np.asarray(xi, dtype=float)[1:])
    resp = root * (h[1:] - mu)
    reg = root * (h[:-1] - mu)
    prec = reg @ reg + psi0**-2
    center = (reg @ resp + kappa0 * psi0**-2) / prec
    return sample_trunc_normal(center, 1 / np.sqrt(prec), -1.0, 1.0, rng)


def dsp_block_update(state, nu, policy, rng, priors=DspPriors()):
    """One sweep of allocations, h, xi, mu and kappa for a single coefficient."""
    nu = np.asarray(nu, dtype=float)
    if nu.size != state.h.size - 1:
        raise InvalidArgument(f"nu has length {nu.size}, expected {state.h.size - 1}")
    z = _log_targets(nu, compute_offset(nu, policy))
    a = draw_allocations(z, state.h, rng)
    h = draw_h(z, a, state.mu, state.kappa, state.xi, rng)
    xi = draw_xi(h, state.mu, state.kappa, rng)
    mu = draw_mu(h, state.kappa, xi, (priors.mu0, priors.sigma0), rng)
    kappa = draw_kappa(h, mu, xi, (priors.kappa0, priors.psi0), rng)
    return replace(state, h=h, xi=xi, a=a, mu=mu, kappa=kappa)
