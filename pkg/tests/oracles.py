"""Independent reference implementations used only by the tests.

Each oracle is written directly from the model definition, without
reusing package internals, so agreement is meaningful.
"""
import numpy as np


def poly_product_coeffs(seasons, phis):
    """Regression coefficients by dense multiplication of the lag polynomials.

    ``phis[j]`` are the coefficients of ``1 - sum_i phi_ji L^(i s_j)``.
    Returns a dict lag -> coefficient for the nonzero lags.
    """
    total = np.array([1.0])
    for s, phi in zip(seasons, phis):
        poly = np.zeros(len(phi) * s + 1)
        poly[0] = 1.0
        for i, c in enumerate(phi, start=1):
            poly[i * s] = -c
        total = np.convolve(total, poly)
    return {lag: -total[lag] for lag in range(1, total.size)}


def durbin_levinson_classic(r):
    """Textbook pacf -> AR coefficients with the usual minus sign."""
    p = len(r)
    phi = np.zeros((p + 1, p + 1))
    for k in range(1, p + 1):
        phi[k, k] = r[k - 1]
        for j in range(1, k):
            phi[k, j] = phi[k - 1, j] - r[k - 1] * phi[k - 1, k - j]
    return phi[p, 1:]


def kalman_tvar1(y, q, sigma2, m0, p0):
    """Scalar Kalman filter + RTS smoother for y_t = theta_t y_{t-1} + e_t.

    ``y`` includes the pre-sample value y_0; q and sigma2 are length T.
    Returns filtered (m, P), predicted P and smoothed (ms, Ps), all length T+1.
    """
    T = len(y) - 1
    m = np.empty(T + 1)
    P = np.empty(T + 1)
    Pp = np.empty(T + 1)
    m[0], P[0], Pp[0] = m0, p0, p0
    for t in range(1, T + 1):
        pp = P[t - 1] + q[t - 1]
        x = y[t - 1]
        s = x * pp * x + sigma2[t - 1]
        k = pp * x / s
        m[t] = m[t - 1] + k * (y[t] - x * m[t - 1])
        P[t] = pp - k * x * pp
        Pp[t] = pp
    ms, Ps = m.copy(), P.copy()
    for t in range(T - 1, -1, -1):
        g = P[t] / Pp[t + 1]
        ms[t] = m[t] + g * (ms[t + 1] - m[t])
        Ps[t] = P[t] + g * g * (Ps[t + 1] - Pp[t + 1])
    return m, P, Pp, ms, Ps


def dense_h_posterior(z, a, mu, kappa, xi, means, variances):
    """Mean and covariance of h_{0:T} | rest from explicit dense matrices.

    Prior: eta = D h - c ~ N(0, diag(1/xi)) with D the AR(1) differencing
    matrix. Likelihood: z_t = h_t + means[a_t] + N(0, variances[a_t]).
    """
    T = len(z)
    D = np.eye(T + 1)
    for t in range(1, T + 1):
        D[t, t - 1] = -kappa
    c = np.full(T + 1, (1 - kappa) * mu)
    c[0] = mu
    W = np.diag(xi)
    S = np.zeros((T, T + 1))
    S[np.arange(T), np.arange(1, T + 1)] = 1.0
    R = np.diag(1.0 / variances[a])
    prec = D.T @ W @ D + S.T @ R @ S
    lin = D.T @ W @ c + S.T @ R @ (z - means[a])
    cov = np.linalg.inv(prec)
    return cov @ lin, cov, prec


def linear_instance(T=50, seed=0, q=0.01, sigma=0.5, m0=0.2, p0=0.3):
    """Time-varying AR(1) with an identity coefficient map.

    Returns ``(y, view, oracle)`` where ``y`` has T+1 values (y_0 first),
    ``view`` is the package state-space view in linear test mode and
    ``oracle`` the output of :func:`kalman_tvar1`.
    """
    from tvsar.model import SarStructure
    from tvsar.samplers import StateSpaceView

    rng = np.random.default_rng(seed)
    theta = m0 + np.sqrt(p0) * rng.standard_normal() + np.cumsum(
        np.r_[0.0, np.sqrt(q) * rng.standard_normal(T)])
    y = np.empty(T + 1)
    y[0] = rng.standard_normal()
    for t in range(1, T + 1):
        y[t] = theta[t] * y[t - 1] + sigma * rng.standard_normal()
    structure = SarStructure((1,), (1,))
    h = np.full((T + 1, 1), np.log(q))
    view = StateSpaceView.from_data(y, structure, h, sigma, m0=np.array([m0]),
                                    P0=np.array([[p0]]), stable=False, f0="gaussian")
    oracle = kalman_tvar1(y, np.full(T, q), np.full(T, sigma**2), m0, p0)
    return y, view, oracle
