"""Full-duplex hybrid access point with wireless-powered sensors: channel
estimation, MRC/MRT processing, energy-beam optimization and rate analysis."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DegenerateChannelError, DomainError, EstimationError, FdhapError,
                     InfeasibleError, NumericalError, QuadratureError)
from .model import (ChannelRealization, DiskModel, PathLossProfile, RngStream, SystemParams, db2lin,
                    draw_channels, lin2db, sample_path_losses)
from .estimation import design_training, estimate_variances, mmse_estimate, simulate_estimation
from .beamforming import harvested_powers, mrc_mrt_beams, mrt_energy_beams, sum_rate
from .sdp import SdpProblem, max_eigenvalue_sdp, solve_sdp
from .optimizer import OptimizationResult, optimize
from .analysis import (QuadratureConfig, RateBoundInputs, downlink_rate_icsi, downlink_rate_integral,
                       downlink_rate_lower_bound, uplink_rate_asymptote_pcsi, uplink_rate_integral,
                       uplink_rate_lower_bound, uplink_rate_lower_bound_icsi)
from .montecarlo import RateEstimate, TrialPlan, mc_downlink_rate, mc_uplink_rate, rate_region, scaling_experiment

__all__ = [
    "ConfigurationError", "DegenerateChannelError", "DomainError", "EstimationError", "FdhapError",
    "InfeasibleError", "NumericalError", "QuadratureError",
    "ChannelRealization", "DiskModel", "PathLossProfile", "RngStream", "SystemParams", "db2lin",
    "draw_channels", "lin2db", "sample_path_losses",
    "design_training", "estimate_variances", "mmse_estimate", "simulate_estimation",
    "harvested_powers", "mrc_mrt_beams", "mrt_energy_beams", "sum_rate",
    "SdpProblem", "max_eigenvalue_sdp", "solve_sdp",
    "OptimizationResult", "optimize",
    "QuadratureConfig", "RateBoundInputs", "downlink_rate_icsi", "downlink_rate_integral",
    "downlink_rate_lower_bound", "uplink_rate_asymptote_pcsi", "uplink_rate_integral",
    "uplink_rate_lower_bound", "uplink_rate_lower_bound_icsi",
    "RateEstimate", "TrialPlan", "mc_downlink_rate", "mc_uplink_rate", "rate_region", "scaling_experiment",
]
