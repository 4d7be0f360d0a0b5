"""Samplers for the non-standard distributions used by the Gibbs sampler.

All samplers take an explicit ``numpy.random.Generator``. The Polya-Gamma
and resampling kernels are numba-compiled and consume the same generator, so
a run is reproducible from a single seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from tvsar.errors import InvalidArgument

__all__ = [
    "OmoriMixture",
    "OMORI",
    "sample_polya_gamma",
    "polya_gamma_mean",
    "polya_gamma_var",
    "sample_z",
    "sample_skew_t",
    "skew_t_transform",
    "skew_t_logpdf",
    "sample_trunc_normal",
    "sample_scaled_inv_chi2",
    "systematic_resample",
    "ess",
]


@dataclass(frozen=True)
class OmoriMixture:
    """Gaussian mixture approximation of the log chi-squared(1) distribution."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def sds(self):
        return np.sqrt(self.variances)

    def mean(self):
        return float(self.weights @ self.means)

    def var(self):
        m = self.mean()
        return float(self.weights @ (self.variances + self.means**2) - m**2)


# Omori, Chib, Shephard & Nakajima (2007, J. Econometrics), Table 1:
# 10-component approximation of log chi^2_1 (no centring shift).
OMORI = OmoriMixture(
    weights=np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                      0.18842, 0.12047, 0.05591, 0.01575, 0.00115]),
    means=np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                    -1.97278, -3.46788, -5.55246, -8.68384, -14.65000]),
    variances=np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                        0.98583, 1.57469, 2.54498, 4.16591, 7.33342]),
)


# --------------------------------------------------------------------------
# Polya-Gamma PG(1, c)
# --------------------------------------------------------------------------

_PG_TRUNC = 0.64


@njit(cache=True)
def _pg_coef(n, x):
    k = n + 0.5
    if x > _PG_TRUNC:
        return math.pi * k * math.exp(-0.5 * k * k * math.pi * math.pi * x)
    return math.pi * k * (2.0 / (math.pi * x)) ** 1.5 * math.exp(-2.0 * k * k / x)


@njit(cache=True)
def _norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@njit(cache=True)
def _ig_cdf(t, z):
    # P(IG(mean=1/z, shape=1) < t); z = 0 is the Levy limit
    rt = math.sqrt(1.0 / t)
    b = rt * (t * z - 1.0)
    a = -rt * (t * z + 1.0)
    tail = _norm_cdf(a)
    second = 0.0
    if tail > 0.0:
        second = math.exp(2.0 * z + math.log(tail))
    return _norm_cdf(b) + second


@njit(cache=True)
def _rtigauss(z, t, rng):
    # inverse Gaussian(1/z, 1) truncated to (0, t)
    if z * t < 1.0:
        alpha = 0.0
        x = 0.0
        while rng.random() > alpha:
            while True:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
        return x
    mu = 1.0 / z
    x = t + 1.0
    while x >= t:
        y = rng.standard_normal()
        y = y * y
        mu_y = mu * y
        x = mu + 0.5 * mu * mu_y - 0.5 * mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
        if rng.random() > mu / (mu + x):
            x = mu * mu / x
    return x


@njit(cache=True)
def _pg1_draw(c, rng):
    z = 0.5 * abs(c)
    t = _PG_TRUNC
    k = math.pi * math.pi / 8.0 + 0.5 * z * z
    p = math.pi / (2.0 * k) * math.exp(-k * t)
    q = 2.0 * math.exp(-z) * _ig_cdf(t, z)
    left = p / (p + q)
    while True:
        if rng.random() < left:
            x = t + rng.standard_exponential() / k
        else:
            x = _rtigauss(z, t, rng)
        s = _pg_coef(0, x)
        y = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _pg_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _pg_coef(n, x)
                if y > s:
                    break


@njit(cache=True)
def _pg1_many(c, rng):
    out = np.empty(c.shape[0])
    for i in range(c.shape[0]):
        out[i] = _pg1_draw(c[i], rng)
    return out


def sample_polya_gamma(c, rng):
    """Exact PG(1, c) draws via the alternating-series method of Devroye.

    ``c`` may be a scalar or an array; the result has the same shape.
    """
    arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("Polya-Gamma tilt must be finite")
    out = _pg1_many(arr.ravel(), rng).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def polya_gamma_mean(c):
    """E[PG(1, c)] = tanh(c/2) / (2c), with limit 1/4 at c = 0."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-6
    safe = np.where(small, 1.0, c)
    return np.where(small, 0.25 - c**2 / 48.0, np.tanh(safe / 2) / (2 * safe))


def polya_gamma_var(c):
    """Var[PG(1, c)], limit 1/24 at c = 0."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-3
    safe = np.where(small, 1.0, c)
    v = (np.sinh(safe) - safe) / (4 * safe**3 * np.cosh(safe / 2) ** 2)
    return np.where(small, 1.0 / 24.0 - c**2 / 240.0, v)


# --------------------------------------------------------------------------
# Z and skew-t
# --------------------------------------------------------------------------

def sample_z(a, b, mu, sigma, rng, size=None):
    """Z(a, b, mu, sigma): ``mu + sigma * logit(B)`` with ``B ~ Beta(a, b)``.

    The logit is formed as ``log G_a - log G_b`` from two gamma variates so
    that Beta draws rounding to 0 or 1 cannot produce infinities.
    """
    if a <= 0 or b <= 0 or sigma <= 0:
        raise InvalidArgument("Z distribution needs a, b, sigma > 0")
    ga = rng.standard_gamma(a, size)
    gb = rng.standard_gamma(b, size)
    return mu + sigma * (np.log(ga) - np.log(gb))


def skew_t_transform(y, a, b):
    """Map a Beta(a, b) variate to the Jones-Faddy skew-t(a, b)."""
    y = np.asarray(y, dtype=float)
    return np.sqrt(a + b) * (2 * y - 1) / (2 * np.sqrt(y * (1 - y)))


def sample_skew_t(a, b, mu, sigma, rng, size=None):
    """Jones-Faddy skew-t(a, b) draws, location ``mu`` and scale ``sigma``.

    Uses ``Y = G_a / (G_a + G_b)`` so ``(2Y-1)/(2 sqrt(Y(1-Y)))`` becomes
    ``(G_a - G_b) / (2 sqrt(G_a G_b))``, which is exact and avoids
    cancellation when ``Y`` is near 0 or 1.
    """
    if a <= 0 or b <= 0 or sigma <= 0:
        raise InvalidArgument("skew-t needs a, b, sigma > 0")
    ga = rng.standard_gamma(a, size)
    gb = rng.standard_gamma(b, size)
    x = np.sqrt(a + b) * (ga - gb) / (2 * np.sqrt(ga * gb))
    return mu + sigma * x


def skew_t_logpdf(x, a, b, mu=0.0, sigma=1.0):
    """Log density of the Jones-Faddy skew-t(a, b, mu, sigma)."""
    u = (np.asarray(x, dtype=float) - mu) / sigma
    root = np.sqrt(a + b + u * u)
    log_norm = (a + b - 1) * np.log(2.0) + special.betaln(a, b) + 0.5 * np.log(a + b)
    return ((a + 0.5) * np.log1p(u / root) + (b + 0.5) * np.log1p(-u / root)
            - log_norm - np.log(sigma))


# --------------------------------------------------------------------------
# Truncated normal, scaled inverse chi-squared
# --------------------------------------------------------------------------

def _robert_tail(a, b, rng):
    # exponential rejection for N(0,1) on [a, b] with a large and positive
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    while True:
        x = a + rng.standard_exponential() / alpha
        if x > b:
            continue
        if rng.random() <= np.exp(-0.5 * (x - alpha) ** 2):
            return x


def sample_trunc_normal(mean, sd, lo, hi, rng):
    """One draw from N(mean, sd^2) restricted to (lo, hi)."""
    if not lo < hi:
        raise InvalidArgument(f"truncation bounds must satisfy lo < hi, got ({lo}, {hi})")
    if sd <= 0:
        raise InvalidArgument("sd must be positive")
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    flip = a > 0
    if flip:
        a, b = -b, -a
    # the interval now has its upper end b in the lower half or straddles 0
    if b < -30.0:
        x = -_robert_tail(-b, -a, rng)
    else:
        pa, pb = special.ndtr(a), special.ndtr(b)
        u = pa + rng.random() * (pb - pa)
        x = float(special.ndtri(u))
        x = min(max(x, a), b)
    if flip:
        x = -x
    return mean + sd * x


def sample_scaled_inv_chi2(v, s2, rng, size=None):
    """Scale-inverse-chi^2(v, s2): ``v * s2 / chi^2_v``."""
    if v <= 0 or s2 <= 0:
        raise InvalidArgument("scaled inverse chi^2 needs v, s2 > 0")
    return v * s2 / rng.chisquare(v, size)


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------

@njit(cache=True)
def _systematic(weights, n, u0):
    idx = np.empty(n, dtype=np.int64)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    j = 0
    for i in range(n):
        u = (u0 + i) / n
        while cum[j] <= u and j < weights.shape[0] - 1:
            j += 1
        idx[i] = j
    return idx


def systematic_resample(weights, n, rng):
    """Systematic resampling; returns ``n`` ancestor indices."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
        raise InvalidArgument("weights must be nonnegative and sum to 1")
    return _systematic(w, int(n), rng.random())


def ess(weights):
    """Effective sample size ``1 / sum(w^2)`` of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))
