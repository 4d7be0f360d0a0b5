"""Path samplers, noise updates and the Gibbs driver."""
from tvsar.samplers.gibbs import GibbsConfig, PosteriorDraws, SamplerError, gibbs_run
from tvsar.samplers.noise import SvPriors, draw_sigma_static, draw_sv_path, initial_sv_noise
from tvsar.samplers.pgas import InitialProposal, PgasResult, pgas_init_reference, pgas_kernel
from tvsar.samplers.statespace import (EkfResult, StateSpaceView, ekf_forward, ekf_smoother,
                                       ffbsx_backward, ffbsx_sample)

__all__ = [
    "GibbsConfig", "PosteriorDraws", "SamplerError", "gibbs_run",
    "SvPriors", "draw_sigma_static", "draw_sv_path", "initial_sv_noise",
    "InitialProposal", "PgasResult", "pgas_init_reference", "pgas_kernel",
    "EkfResult", "StateSpaceView", "ekf_forward", "ekf_smoother", "ffbsx_backward",
    "ffbsx_sample",
]
