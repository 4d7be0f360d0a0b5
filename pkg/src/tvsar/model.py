"""Multi-seasonal AR structure, regression form, simulation and spectra.

A TVSAR(s, p) model multiplies M lag polynomials
``phi_j(L^{s_j}) = 1 - phi_{j1} L^{s_j} - ... - phi_{j p_j} L^{p_j s_j}``.
Multiplying them out gives a single regression ``y_t = x_t' phi_tilde_t + e_t``
whose lag set is fixed by the structure and whose coefficients are
products of the per-polynomial stable coefficients.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from tvsar.errors import DomainError, InvalidArgument
from tvsar.stability import _phi_and_tangent, phi_to_theta, theta_paths_to_phi

__all__ = [
    "SarStructure",
    "ExpandedRegression",
    "ParamPaths",
    "NoiseState",
    "expand_coeffs",
    "expand_paths",
    "block_phi_paths",
    "expansion_jacobian",
    "expansion_kernel_args",
    "design_vector",
    "design_matrix",
    "simulate_tvsar",
    "conditional_loglik",
    "spectral_density",
    "log_spectral_density",
    "fit_static_ar",
]


@dataclass(frozen=True)
class SarStructure:
    """Seasonal periods and per-polynomial lag orders of a TVSAR(s, p) model."""

    seasons: tuple
    orders: tuple
    lags: np.ndarray = field(init=False, repr=False, compare=False)
    _mono_factors: np.ndarray = field(init=False, repr=False, compare=False)
    _mono_sign: np.ndarray = field(init=False, repr=False, compare=False)
    _mono_lagpos: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seasons = tuple(int(s) for s in self.seasons)
        orders = tuple(int(p) for p in self.orders)
        if len(seasons) != len(orders) or not seasons:
            raise InvalidArgument("seasons and orders must be nonempty and of equal length")
        if any(s <= 0 for s in seasons):
            raise InvalidArgument("seasonal periods must be positive")
        if any(p < 0 for p in orders):
            raise InvalidArgument("lag orders must be nonnegative")
        object.__setattr__(self, "seasons", seasons)
        object.__setattr__(self, "orders", orders)

        # Each monomial picks lag i_j of polynomial j (0 = the leading 1).
        starts = self.block_starts
        factors, signs, mono_lags = [], [], []
        for pick in itertools.product(*[range(p + 1) for p in orders]):
            chosen = [starts[j] + i - 1 for j, i in enumerate(pick) if i > 0]
            if not chosen:
                continue
            factors.append(chosen + [-1] * (len(orders) - len(chosen)))
            signs.append((-1.0) ** (len(chosen) + 1))
            mono_lags.append(sum(i * s for i, s in zip(pick, seasons)))
        lags = np.array(sorted(set(mono_lags)), dtype=np.int64)
        lagpos = np.searchsorted(lags, np.array(mono_lags, dtype=np.int64))
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "_mono_factors",
                           np.array(factors, dtype=np.int64).reshape(-1, len(orders)))
        object.__setattr__(self, "_mono_sign", np.array(signs, dtype=float))
        object.__setattr__(self, "_mono_lagpos", lagpos.astype(np.int64))

    @property
    def r(self):
        return sum(self.orders)

    @property
    def p_max(self):
        return int(self.lags[-1]) if self.lags.size else 0

    @property
    def block_starts(self):
        return np.concatenate([[0], np.cumsum(self.orders)[:-1]]).astype(np.int64)

    @property
    def block_lengths(self):
        return np.array(self.orders, dtype=np.int64)

    def coefficient_names(self):
        names = []
        for j, (s, p) in enumerate(zip(self.seasons, self.orders)):
            for i in range(1, p + 1):
                names.append(f"s{s}_lag{i}" if s != 1 else f"lag{i}")
        return names

    def to_dict(self):
        return {"seasons": list(self.seasons), "orders": list(self.orders)}


@dataclass(frozen=True)
class ExpandedRegression:
    lags: np.ndarray
    coeffs: np.ndarray


@dataclass
class ParamPaths:
    """Unrestricted coefficient paths, rows t = 0..T, one column per coefficient."""

    theta: np.ndarray
    structure: SarStructure

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if self.theta.shape[1] != self.structure.r:
            raise InvalidArgument("theta has the wrong number of columns")

    @classmethod
    def from_phi(cls, structure, phi):
        """Build paths from stable coefficients; raises DomainError otherwise."""
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        theta = np.empty_like(phi)
        for s, n in zip(structure.block_starts, structure.block_lengths):
            for t in range(phi.shape[0]):
                theta[t, s:s + n] = phi_to_theta(phi[t, s:s + n])
        return cls(theta, structure)

    @property
    def T(self):
        return self.theta.shape[0] - 1

    def phi(self):
        return block_phi_paths(self.structure, self.theta)


@dataclass
class NoiseState:
    """Observation noise: a static sigma or a stochastic-volatility path."""

    mode: str = "static"
    sigma: object = 1.0
    sv_params: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("static", "sv"):
            raise InvalidArgument(f"unknown noise mode {self.mode!r}")
        sig = np.asarray(self.sigma, dtype=float)
        if np.any(sig <= 0) or not np.all(np.isfinite(sig)):
            raise InvalidArgument("sigma must be positive and finite")
        if self.sv_params is not None and not -1 < self.sv_params[1] < 1:
            raise InvalidArgument("stochastic volatility persistence must be in (-1, 1)")

    def sigma_path(self, T):
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 0:
            return np.full(T, float(sig))
        if sig.size != T:
            raise InvalidArgument(f"sigma path has length {sig.size}, expected {T}")
        return sig


# --------------------------------------------------------------------------
# coefficient expansion
# --------------------------------------------------------------------------

def block_phi_paths(structure, theta, stable=True):
    """Stable coefficients for every polynomial block; accepts (r,) or (n, r)."""
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if not stable:
        out = theta.copy()
    else:
        out = np.empty_like(theta)
        for s, n in zip(structure.block_starts, structure.block_lengths):
            if n:
                out[:, s:s + n] = theta_paths_to_phi(theta[:, s:s + n])
    return out[0] if single else out


def _expand_phi(structure, phi):
    # phi: (n, r) stable coefficients -> (n, L) regression coefficients
    n = phi.shape[0]
    coef = np.zeros((n, structure.lags.size))
    for factors, sign, pos in zip(structure._mono_factors, structure._mono_sign,
                                  structure._mono_lagpos):
        term = np.full(n, sign)
        for f in factors:
            if f >= 0:
                term = term * phi[:, f]
        coef[:, pos] += term
    return coef


def expand_paths(structure, theta, stable=True):
    """Regression coefficients for each row of ``theta`` (shape (n, L))."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    return _expand_phi(structure, block_phi_paths(structure, theta, stable))


def expand_coeffs(structure, theta_t, stable=True):
    theta_t = np.asarray(theta_t, dtype=float)
    if theta_t.shape != (structure.r,) or not np.all(np.isfinite(theta_t)):
        raise InvalidArgument("theta_t must be a finite vector of length r")
    coeffs = expand_paths(structure, theta_t[None, :], stable)[0]
    return ExpandedRegression(structure.lags.copy(), coeffs)


@njit(cache=True)
def _expand_with_jacobian(theta, starts, lengths, mono_factors, mono_sign,
                          mono_lagpos, n_lags, stable):
    r = theta.shape[0]
    phi = np.empty(r)
    dphi = np.zeros((r, r))
    for b in range(starts.shape[0]):
        s = starts[b]
        n = lengths[b]
        if n == 0:
            continue
        if stable:
            ph, dph = _phi_and_tangent(theta[s:s + n])
            for i in range(n):
                phi[s + i] = ph[i]
                for j in range(n):
                    dphi[s + i, s + j] = dph[i, j]
        else:
            for i in range(n):
                phi[s + i] = theta[s + i]
                dphi[s + i, s + i] = 1.0
    coef = np.zeros(n_lags)
    dcoef = np.zeros((n_lags, r))
    n_fac = mono_factors.shape[1]
    for m in range(mono_factors.shape[0]):
        pos = mono_lagpos[m]
        term = mono_sign[m]
        for a in range(n_fac):
            f = mono_factors[m, a]
            if f >= 0:
                term *= phi[f]
        coef[pos] += term
        for a in range(n_fac):
            fa = mono_factors[m, a]
            if fa < 0:
                continue
            d = mono_sign[m]
            for b2 in range(n_fac):
                fb = mono_factors[m, b2]
                if fb >= 0 and b2 != a:
                    d *= phi[fb]
            for j in range(r):
                dcoef[pos, j] += d * dphi[fa, j]
    return coef, dcoef


@njit(cache=True)
def _expand_only(theta, starts, lengths, mono_factors, mono_sign, mono_lagpos,
                 n_lags, stable):
    r = theta.shape[0]
    phi = np.empty(r)
    for b in range(starts.shape[0]):
        s = starts[b]
        n = lengths[b]
        if n == 0:
            continue
        if stable:
            # Durbin-Levinson on the block, values only
            for k in range(n):
                rk = theta[s + k] / np.sqrt(1.0 + theta[s + k] * theta[s + k])
                for j in range((k + 1) // 2):
                    a = phi[s + j]
                    c = phi[s + k - 1 - j]
                    if j == k - 1 - j:
                        phi[s + j] = a - rk * a
                    else:
                        phi[s + j] = a - rk * c
                        phi[s + k - 1 - j] = c - rk * a
                phi[s + k] = rk
        else:
            for i in range(n):
                phi[s + i] = theta[s + i]
    coef = np.zeros(n_lags)
    for m in range(mono_factors.shape[0]):
        term = mono_sign[m]
        for a in range(mono_factors.shape[1]):
            f = mono_factors[m, a]
            if f >= 0:
                term *= phi[f]
        coef[mono_lagpos[m]] += term
    return coef


def expansion_kernel_args(structure, stable=True):
    """Arguments shared by the compiled expansion kernels."""
    return (structure.block_starts, structure.block_lengths, structure._mono_factors,
            structure._mono_sign, structure._mono_lagpos, int(structure.lags.size),
            bool(stable))


def expansion_jacobian(structure, theta_t, stable=True, method="ad", step=1e-6):
    """Coefficients and d(coeffs)/d(theta) at one time point.

    ``method="fd"`` uses central differences; it exists to cross-check the
    forward-mode derivatives.
    """
    theta_t = np.asarray(theta_t, dtype=float)
    args = expansion_kernel_args(structure, stable)
    if method == "ad":
        return _expand_with_jacobian(theta_t, *args)
    if method != "fd":
        raise InvalidArgument(f"unknown jacobian method {method!r}")
    coef = _expand_only(theta_t, *args)
    jac = np.empty((coef.size, theta_t.size))
    for j in range(theta_t.size):
        e = np.zeros_like(theta_t)
        e[j] = step
        jac[:, j] = (_expand_only(theta_t + e, *args) - _expand_only(theta_t - e, *args)) / (2 * step)
    return coef, jac


# --------------------------------------------------------------------------
# regression form
# --------------------------------------------------------------------------

def design_vector(y_history, lags, t):
    """Lagged values ``(y_{t-l} for l in lags)`` with 1-based time ``t``."""
    y = np.asarray(y_history, dtype=float)
    lags = np.asarray(lags, dtype=np.int64)
    if lags.size == 0:
        return np.empty(0)
    if t <= lags.max() or t > y.size + 1:
        raise InvalidArgument(f"time {t} needs {lags.max()} earlier observations")
    return y[t - 1 - lags]


def design_matrix(y, structure):
    """Rows x_t for t = p_max+1..n (1-based), shape (n - p_max, L)."""
    y = np.asarray(y, dtype=float)
    pm = structure.p_max
    n = y.size
    if n <= pm:
        raise InvalidArgument(f"series of length {n} is too short for maximal lag {pm}")
    idx = np.arange(pm, n)[:, None] - structure.lags[None, :]
    return y[idx] if structure.lags.size else np.empty((n - pm, 0))


def simulate_tvsar(structure, paths, noise, rng, warmup=None):
    """Simulate ``y_1..y_T`` from ``y_t = x_t' phi_tilde(theta_t) + sigma_t e_t``.

    The recursion starts from zeros and runs ``warmup`` steps at the t=0
    parameters before the returned sample; the default is
    ``max(10 * p_max, 200)``.
    """
    theta = np.asarray(paths.theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DomainError("parameter paths must be finite")
    T = theta.shape[0] - 1
    pm = structure.p_max
    if warmup is None:
        warmup = max(10 * pm, 200)
    sigma = noise.sigma_path(T)
    coef = expand_paths(structure, theta)
    lags = structure.lags
    total = pm + warmup + T
    y = np.zeros(total)
    eps = rng.standard_normal(warmup + T)
    start = pm
    for i in range(warmup + T):
        t = start + i
        if i < warmup:
            c, s = coef[0], sigma[0]
        else:
            c, s = coef[i - warmup + 1], sigma[i - warmup]
        y[t] = (c @ y[t - lags] if lags.size else 0.0) + s * eps[i]
    return y[pm + warmup:]


def conditional_loglik(y, paths, noise, structure):
    """Gaussian log-likelihood conditional on the first p_max observations.

    ``paths.theta`` has rows for t = p_max..n (n - p_max + 1 rows); row 0 is
    the state at the last pre-sample time and does not enter the sum.
    """
    y = np.asarray(y, dtype=float)
    X = design_matrix(y, structure)
    T = X.shape[0]
    theta = np.asarray(paths.theta, dtype=float)
    if theta.shape[0] != T + 1:
        raise InvalidArgument(f"expected {T + 1} parameter rows, got {theta.shape[0]}")
    sig = np.asarray(noise.sigma, dtype=float)
    if np.any(sig <= 0):
        raise InvalidArgument("sigma must be positive")
    sigma = np.broadcast_to(sig, (T,))
    mean = np.einsum("tl,tl->t", X, expand_paths(structure, theta[1:]))
    resid = y[structure.p_max:] - mean
    return float(np.sum(-0.5 * np.log(2 * np.pi * sigma**2) - 0.5 * (resid / sigma) ** 2))


def fit_static_ar(y, structure):
    """OLS fit of an unrestricted linear AR on the expanded lag set.

    Returns ``(coefficients, residual variance)``.
    """
    y = np.asarray(y, dtype=float)
    X = design_matrix(y, structure)
    target = y[structure.p_max:]
    if X.shape[1] == 0:
        return np.empty(0), float(np.mean(target**2))
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = max(target.size - X.shape[1], 1)
    return beta, float(resid @ resid / dof)


# --------------------------------------------------------------------------
# spectral density
# --------------------------------------------------------------------------

def _check_omegas(omegas):
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(omegas <= 0) or np.any(omegas > np.pi + 1e-12):
        raise InvalidArgument("frequencies must lie in (0, pi]")
    return omegas


def log_spectral_density(structure, theta, sigma, omegas, stable=True):
    """log f(t, omega) for rows of ``theta`` (n, r) and ``sigma`` (n,) or scalar.

    Returns an (n, m) array.
    """
    omegas = _check_omegas(omegas)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phi = block_phi_paths(structure, theta, stable)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (theta.shape[0],))
    out = np.broadcast_to(2 * np.log(sigma)[:, None] - np.log(np.pi),
                          (theta.shape[0], omegas.size)).copy()
    for s, start, p in zip(structure.seasons, structure.block_starts, structure.block_lengths):
        if p == 0:
            continue
        k = np.arange(1, p + 1)
        basis = np.exp(-1j * s * np.outer(k, omegas))  # (p, m)
        poly = 1.0 - phi[:, start:start + p] @ basis
        out -= np.log(poly.real**2 + poly.imag**2)
    return out


def spectral_density(structure, theta_t, sigma_t, omegas):
    """f(t, omega) = sigma^2 / pi * prod_j |phi_j(exp(-i s_j omega))|^-2."""
    theta_t = np.asarray(theta_t, dtype=float)
    if sigma_t <= 0:
        raise InvalidArgument("sigma must be positive")
    return np.exp(log_spectral_density(structure, theta_t[None, :], sigma_t, omegas)[0])
