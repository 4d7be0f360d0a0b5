"""State-space view of the TVSAR model and the EKF-based FFBSx sampler.

State: ``theta_t = theta_{t-1} + N(0, diag(exp(h_t)))`` for t = 1..T.
Measurement: ``y_t = x_t' g(theta_t) + N(0, sigma_t^2)`` where ``g`` maps
unrestricted coefficients to the expanded regression coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from tvsar.errors import InvalidArgument, NumericalFailure
from tvsar.model import (_expand_only, _expand_with_jacobian, design_matrix,
                         expansion_kernel_args)
from tvsar.stability import normal_approx_prior

__all__ = [
    "StateSpaceView",
    "EkfResult",
    "ekf_forward",
    "ekf_smoother",
    "ffbsx_sample",
    "ffbsx_backward",
]


@dataclass
class StateSpaceView:
    """Everything the path samplers condition on.

    ``h`` has T+1 rows; row t (t >= 1) is the log innovation variance of the
    step from t-1 to t, row 0 is unused by the path samplers. ``m0``/``P0``
    is the Gaussian initial prior used by the EKF. ``f0`` names the exact
    initial prior used by the particle sampler: ``"uniform"`` (uniform over
    the stability region, per block) or ``"gaussian"`` (same as ``m0, P0``).
    ``stable=False`` replaces the stability map by the identity, a test hook
    that makes a single-polynomial model linear-Gaussian.
    """

    structure: object
    X: np.ndarray
    target: np.ndarray
    h: np.ndarray
    sigma: np.ndarray
    m0: np.ndarray
    P0: np.ndarray
    stable: bool = True
    f0: str = "uniform"
    jacobian: str = "ad"

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.target = np.ascontiguousarray(self.target, dtype=float)
        self.h = np.ascontiguousarray(self.h, dtype=float)
        T = self.target.size
        self.sigma = np.ascontiguousarray(np.broadcast_to(np.asarray(self.sigma, dtype=float), (T,)))
        self.m0 = np.ascontiguousarray(self.m0, dtype=float)
        self.P0 = np.ascontiguousarray(self.P0, dtype=float)
        r = self.structure.r
        if self.X.shape != (T, self.structure.lags.size):
            raise InvalidArgument("design matrix does not match the structure")
        if self.h.shape != (T + 1, r):
            raise InvalidArgument(f"h must have shape {(T + 1, r)}, got {self.h.shape}")
        if self.m0.shape != (r,) or self.P0.shape != (r, r):
            raise InvalidArgument("initial prior has the wrong dimension")
        if np.any(self.sigma <= 0):
            raise InvalidArgument("sigma must be positive")
        if self.f0 not in ("uniform", "gaussian"):
            raise InvalidArgument(f"unknown initial prior {self.f0!r}")
        if self.jacobian not in ("ad", "fd"):
            raise InvalidArgument(f"unknown jacobian method {self.jacobian!r}")

    @classmethod
    def from_data(cls, y, structure, h, sigma, **kwargs):
        """Condition on the first p_max observations of ``y``."""
        y = np.asarray(y, dtype=float)
        X = design_matrix(y, structure)
        if "m0" not in kwargs:
            means, sds = [], []
            for p in structure.orders:
                if p:
                    prior = normal_approx_prior(p)
                    means.append(prior.means)
                    sds.append(prior.stdevs)
            means = np.concatenate(means) if means else np.empty(0)
            sds = np.concatenate(sds) if sds else np.empty(0)
            kwargs["m0"] = means
            kwargs["P0"] = np.diag(sds**2)
        return cls(structure, X, y[structure.p_max:], h, sigma, **kwargs)

    @property
    def T(self):
        return self.target.size

    @property
    def r(self):
        return self.structure.r

    @property
    def Q(self):
        return np.exp(self.h)

    def kernel_args(self):
        return expansion_kernel_args(self.structure, self.stable)


@dataclass
class EkfResult:
    m: np.ndarray      # filtered means, (T+1, r)
    P: np.ndarray      # filtered covariances, (T+1, r, r)
    P_pred: np.ndarray  # one-step predicted covariances, (T+1, r, r); P_pred[0] = P0


@njit(cache=True)
def _measurement(theta, x, starts, lengths, mono_factors, mono_sign, mono_lagpos,
                 n_lags, stable, use_fd):
    if not use_fd:
        coef, dcoef = _expand_with_jacobian(theta, starts, lengths, mono_factors,
                                            mono_sign, mono_lagpos, n_lags, stable)
        return x @ coef, x @ dcoef
    coef = _expand_only(theta, starts, lengths, mono_factors, mono_sign, mono_lagpos,
                        n_lags, stable)
    r = theta.shape[0]
    H = np.empty(r)
    step = 1e-6
    for j in range(r):
        up = theta.copy()
        dn = theta.copy()
        up[j] += step
        dn[j] -= step
        cu = _expand_only(up, starts, lengths, mono_factors, mono_sign, mono_lagpos,
                          n_lags, stable)
        cd = _expand_only(dn, starts, lengths, mono_factors, mono_sign, mono_lagpos,
                          n_lags, stable)
        H[j] = x @ (cu - cd) / (2 * step)
    return x @ coef, H


@njit(cache=True)
def _ekf(X, target, sig2, Q, m0, P0, starts, lengths, mono_factors, mono_sign,
         mono_lagpos, n_lags, stable, use_fd):
    T = target.shape[0]
    r = m0.shape[0]
    m = np.empty((T + 1, r))
    P = np.empty((T + 1, r, r))
    Pp = np.empty((T + 1, r, r))
    m[0] = m0
    P[0] = P0
    Pp[0] = P0
    eye = np.eye(r)
    for t in range(1, T + 1):
        mp = m[t - 1].copy()
        Pt = P[t - 1].copy()
        for i in range(r):
            Pt[i, i] += Q[t, i]
        Pp[t] = Pt
        yhat, H = _measurement(mp, X[t - 1], starts, lengths, mono_factors, mono_sign,
                               mono_lagpos, n_lags, stable, use_fd)
        PH = Pt @ H
        S = H @ PH + sig2[t - 1]
        K = PH / S
        m[t] = mp + K * (target[t - 1] - yhat)
        # Joseph form keeps the update positive semidefinite
        A = eye - np.outer(K, H)
        Pn = A @ Pt @ A.T + sig2[t - 1] * np.outer(K, K)
        P[t] = 0.5 * (Pn + Pn.T)
        if not (np.all(np.isfinite(m[t])) and np.all(np.isfinite(P[t]))):
            return m, P, Pp, t
    return m, P, Pp, -1


def ekf_forward(view):
    """Extended Kalman filter over t = 0..T (row 0 is the initial prior)."""
    m, P, Pp, fail = _ekf(view.X, view.target, view.sigma**2, view.Q, view.m0, view.P0,
                          *view.kernel_args(), view.jacobian == "fd")
    if fail >= 0:
        raise NumericalFailure("extended Kalman filter produced a non-finite state", t=int(fail))
    return EkfResult(m, P, Pp)


def ekf_smoother(view, result=None):
    """Rauch-Tung-Striebel pass on the EKF output; returns smoothed means and covariances."""
    res = result if result is not None else ekf_forward(view)
    T = view.T
    ms = res.m.copy()
    Ps = res.P.copy()
    for t in range(T - 1, -1, -1):
        G = np.linalg.solve(res.P_pred[t + 1], res.P[t]).T
        ms[t] = res.m[t] + G @ (ms[t + 1] - res.m[t])
        C = res.P[t] + G @ (Ps[t + 1] - res.P_pred[t + 1]) @ G.T
        Ps[t] = 0.5 * (C + C.T)
    return ms, Ps


@njit(cache=True)
def _psd_cholesky(A):
    # lower factor of a positive semidefinite matrix; zero pivots give zero columns
    n = A.shape[0]
    L = np.zeros((n, n))
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(A[i, i]))
    tol = 1e-14 * max(scale, 1e-300)
    for j in range(n):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d < -1e-8 * max(scale, 1e-300):
            return L, False
        if d <= tol:
            continue
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            v = A[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / L[j, j]
    return L, True


@njit(cache=True)
def _jittered_factor(C):
    r = C.shape[0]
    tr = 0.0
    for i in range(r):
        tr += C[i, i]
    J = C.copy()
    for i in range(r):
        J[i, i] += 1e-12 * tr / r
    return _psd_cholesky(J)


@njit(cache=True)
def _backward(m, P, Q, eps):
    T = m.shape[0] - 1
    r = m.shape[1]
    theta = np.empty((T + 1, r))
    L, ok = _jittered_factor(P[T])
    if not ok:
        return theta, T
    theta[T] = m[T] + L @ eps[T]
    eye = np.eye(r)
    for t in range(T - 1, -1, -1):
        Pt = P[t]
        A = Pt.copy()
        for i in range(r):
            A[i, i] += Q[t + 1, i]
        G = np.linalg.solve(A, Pt).T
        mean = m[t] + G @ (theta[t + 1] - m[t])
        B = eye - G
        C = B @ Pt @ B.T
        for i in range(r):
            for j in range(r):
                C[i, j] += G[i, :] @ (Q[t + 1] * G[j, :])
        C = 0.5 * (C + C.T)
        L, ok = _jittered_factor(C)
        if not ok:
            return theta, t
        theta[t] = mean + L @ eps[t]
    return theta, -1


def ffbsx_backward(view, result, rng):
    """Backward simulation given EKF output."""
    eps = rng.standard_normal((view.T + 1, view.r))
    theta, fail = _backward(result.m, result.P, view.Q, eps)
    if fail >= 0:
        raise NumericalFailure("backward covariance is not positive semidefinite", t=int(fail))
    return theta


def ffbsx_sample(view, rng):
    """Draw a full path ``theta_{0:T}`` by EKF forward filtering and backward sampling."""
    if view.r == 0:
        return np.empty((view.T + 1, 0))
    return ffbsx_backward(view, ekf_forward(view), rng)
