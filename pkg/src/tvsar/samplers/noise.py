"""Observation-noise updates: static variance and stochastic volatility."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tvsar.distributions import OMORI, sample_scaled_inv_chi2, sample_trunc_normal
from tvsar.dsp import draw_allocations, sample_tridiagonal_gaussian
from tvsar.errors import InvalidArgument
from tvsar.model import NoiseState

__all__ = ["SvPriors", "initial_sv_noise", "draw_sigma_static", "draw_sv_path"]


def draw_sigma_static(residuals, prior, rng):
    """Conjugate variance update; returns a draw of sigma^2.

    ``prior`` is ``(v0, s0_sq)`` of a Scale-Inv-chi^2 prior.
    """
    v0, s0_sq = prior
    e = np.asarray(residuals, dtype=float)
    v = v0 + e.size
    return float(sample_scaled_inv_chi2(v, (v0 * s0_sq + e @ e) / v, rng))


@dataclass(frozen=True)
class SvPriors:
    """Priors of the AR(1) log-volatility ``g_t``.

    ``mean ~ N(mean_loc, mean_sd^2)``, ``persistence ~ TN(phi0, phi_sd^2, -1, 1)``,
    ``innovation variance ~ Scale-Inv-chi^2(var_dof, var_scale)``. ``mean_loc``
    of None means "mean of log residual^2", filled in from data.
    """

    mean_loc: float | None = None
    mean_sd: float = 10.0
    phi0: float = 0.9
    phi_sd: float = 0.1
    var_dof: float = 5.0
    var_scale: float = 0.1


def initial_sv_noise(residuals, phi=0.9, var=0.1):
    """Constant volatility at the residual mean square."""
    e = np.asarray(residuals, dtype=float)
    level = float(np.log(np.mean(e * e)))
    return NoiseState("sv", np.full(e.size, np.exp(level / 2)), (level, phi, var))


def _g_precision(T, phi, var):
    # stationary AR(1) over g_1..g_T
    diag = np.full(T, (1 + phi * phi) / var)
    diag[0] = diag[-1] = 1.0 / var
    if T == 1:
        diag[0] = (1 - phi * phi) / var
    off = np.full(T - 1, -phi / var)
    return diag, off


def _draw_g(z, a, mean, phi, var, rng):
    T = z.size
    diag, off = _g_precision(T, phi, var)
    row_sum = diag.copy()
    row_sum[:-1] += off
    row_sum[1:] += off
    linear = mean * row_sum
    inv_v = 1.0 / OMORI.variances[a]
    diag = diag + inv_v
    linear = linear + (z - OMORI.means[a]) * inv_v
    return sample_tridiagonal_gaussian(diag, off, linear, rng)


def _log_init_density(g1, mean, phi, var):
    v = var / (1 - phi * phi)
    return -0.5 * np.log(v) - 0.5 * (g1 - mean) ** 2 / v


def draw_sv_path(residuals, noise, rng, priors=SvPriors()):
    """One sweep over the log-volatility path ``g_t = log sigma_t^2`` and its
    mean, persistence and innovation variance.

    ``noise`` is the current stochastic-volatility :class:`NoiseState`; the
    updated state is returned.
    """
    if noise.mode != "sv" or noise.sv_params is None:
        raise InvalidArgument("draw_sv_path needs a stochastic-volatility noise state")
    e = np.asarray(residuals, dtype=float)
    g_old = 2 * np.log(noise.sigma_path(e.size))
    mean, phi, var = noise.sv_params
    e2 = e * e
    # relative offset guards against exact zeros without moving typical values
    z = np.log(e2 + 1e-12 * max(float(e2.mean()), 1e-300))
    a = draw_allocations(z, g_old, rng)
    g = _draw_g(z, a, mean, phi, var, rng)

    mean_loc = priors.mean_loc if priors.mean_loc is not None else float(z.mean())
    prec = (1 - phi * phi) / var + (g.size - 1) * (1 - phi) ** 2 / var + priors.mean_sd**-2
    lin = ((1 - phi * phi) * g[0] / var + (1 - phi) * np.sum(g[1:] - phi * g[:-1]) / var
           + mean_loc * priors.mean_sd**-2)
    mean = float(lin / prec + rng.standard_normal() / np.sqrt(prec))

    c = g - mean
    x, y = c[:-1], c[1:]
    pprec = x @ x / var + priors.phi_sd**-2
    center = (x @ y / var + priors.phi0 * priors.phi_sd**-2) / pprec
    prop = sample_trunc_normal(center, 1 / np.sqrt(pprec), -1.0, 1.0, rng)
    log_acc = (_log_init_density(g[0], mean, prop, var)
               - _log_init_density(g[0], mean, phi, var))
    if np.log(rng.random()) < log_acc:
        phi = prop

    resid = y - phi * x
    ss = (1 - phi * phi) * c[0] ** 2 + resid @ resid
    dof = priors.var_dof + g.size
    var = float(sample_scaled_inv_chi2(dof, (priors.var_dof * priors.var_scale + ss) / dof, rng))
    return NoiseState("sv", np.exp(g / 2), (mean, float(phi), var))
