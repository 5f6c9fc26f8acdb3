"""MRC/MRT and energy beamformers, harvested power, SINRs and rates.

Every function broadcasts over leading batch axes of the channel arrays, so
a stacked :class:`~fdhap.model.ChannelRealization` evaluates all trials at
once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateChannelError, DomainError
from .model import ChannelRealization, SystemParams

__all__ = [
    "BeamformerSet",
    "SensorPowers",
    "SinrReport",
    "kappa",
    "unit_columns",
    "mrc_mrt_beams",
    "mrt_energy_beams",
    "harvested_powers",
    "uplink_sinr",
    "downlink_sinr",
    "si_interference",
    "imperfect_csi_uplink_terms",
    "sum_rate",
    "evaluate",
]

LN2 = np.log(2.0)


@dataclass(frozen=True)
class BeamformerSet:
    w_r: np.ndarray                  # (..., N_t, K_u) receive combiners
    w_t: np.ndarray                  # (..., N_r, K_d) transmit precoders
    w_e: Optional[np.ndarray] = None  # (..., N_t, K_u) energy beams

    def with_energy(self, w_e) -> "BeamformerSet":
        return BeamformerSet(self.w_r, self.w_t, w_e)


@dataclass(frozen=True)
class SensorPowers:
    p_ul: np.ndarray
    kappa: float


@dataclass(frozen=True)
class SinrReport:
    uplink: np.ndarray
    downlink: np.ndarray
    uplink_rate_sum: np.ndarray
    downlink_rate_sum: np.ndarray


def kappa(eta: float, alpha: float) -> float:
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"time split must satisfy 0 <= alpha < 1, got {alpha}", "alpha")
    if not 0.0 < eta < 1.0:
        raise DomainError(f"conversion efficiency must lie in (0, 1), got {eta}", "eta")
    return eta * alpha / (1.0 - alpha)


def unit_columns(g: np.ndarray, conjugate: bool = False) -> np.ndarray:
    """Normalize every column of ``g`` (optionally conjugated) to unit norm."""
    g = np.asarray(g)
    norms = np.linalg.norm(g, axis=-2, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DegenerateChannelError("channel has a zero-norm (or non-finite) column")
    return (g.conj() if conjugate else g) / norms


def mrc_mrt_beams(g_ap_ul: np.ndarray, g_ap_dl: np.ndarray) -> BeamformerSet:
    """MRC receive beams for the sensors and MRT transmit beams for the users.

    Pass the estimated ``g_ap_dl`` to get the imperfect-CSI precoder.
    """
    return BeamformerSet(unit_columns(g_ap_ul), unit_columns(g_ap_dl, conjugate=True))


def mrt_energy_beams(g_ap_ul: np.ndarray) -> np.ndarray:
    """Conjugate-channel energy beams, one unit-norm column per sensor, so
    that ``||W_E||_F^2 = K_u``."""
    return unit_columns(g_ap_ul, conjugate=True)


def harvested_powers(channels, w_e: np.ndarray, params: SystemParams,
                     kappa_value: Optional[float] = None) -> SensorPowers:
    """Uplink transmit power each sensor can afford: ``kappa P_A ||g_k^T W_E||^2``.

    ``channels`` is a realization or the sensor channel matrix itself.
    """
    g_ap_ul = channels.g_ap_ul if isinstance(channels, ChannelRealization) else np.asarray(channels)
    kap = params.kappa if kappa_value is None else kappa_value
    gw = np.swapaxes(g_ap_ul, -1, -2) @ w_e  # row k = g_k^T W_E
    return SensorPowers(kap * params.p_ap * np.sum(np.abs(gw) ** 2, axis=-1), kap)


def _hermitian_product(a, b):
    """a^H b over the last two axes."""
    return np.swapaxes(a.conj(), -1, -2) @ b


def si_interference(w_r: np.ndarray, h_si: np.ndarray, w_t: np.ndarray, p_ap: float) -> np.ndarray:
    """``P_A sum_l |w_r,k^H H^T w_t,l|^2`` for every sensor k."""
    s = _hermitian_product(w_r, np.swapaxes(h_si, -1, -2) @ w_t)  # (..., K_u, K_d)
    return p_ap * np.sum(np.abs(s) ** 2, axis=-1)


def uplink_sinr(channels: ChannelRealization, beams: BeamformerSet, powers: SensorPowers,
                params: SystemParams, si_term: Optional[np.ndarray] = None) -> np.ndarray:
    """SINR of every sensor after MRC at the HAP.

    ``si_term`` replaces the self-interference power in the denominator
    (used for the residual after imperfect cancellation).
    """
    m = np.abs(_hermitian_product(beams.w_r, channels.g_ap_ul)) ** 2  # [k, l] = |w_r,k^H g_l|^2
    p = powers.p_ul[..., None, :]
    signal = np.diagonal(m * p, axis1=-2, axis2=-1)
    interference = np.sum(m * p, axis=-1) - signal
    if si_term is None:
        si_term = si_interference(beams.w_r, channels.h_si, beams.w_t, params.p_ap)
    noise = params.sigma_n2 * np.sum(np.abs(beams.w_r) ** 2, axis=-2)
    return signal / (interference + si_term + noise)


def downlink_sinr(channels: ChannelRealization, beams: BeamformerSet, powers: SensorPowers,
                  params: SystemParams) -> np.ndarray:
    """SINR of every user under MRT, including sensor-to-user interference."""
    d = np.abs(np.swapaxes(channels.g_ap_dl, -1, -2) @ beams.w_t) ** 2  # [k, l] = |g_k^T w_t,l|^2
    signal = params.p_ap * np.diagonal(d, axis1=-2, axis2=-1)
    interference = params.p_ap * np.sum(d, axis=-1) - signal
    sensor = np.einsum("...l,...lk->...k", powers.p_ul, np.abs(channels.g_ul_dl) ** 2)
    return signal / (interference + sensor + params.sigma_n2)


def imperfect_csi_uplink_terms(channels: ChannelRealization, estimate, beams: BeamformerSet,
                               params: SystemParams) -> np.ndarray:
    """Residual SI power per sensor once the estimated SI has been subtracted.

    Only the estimation error ``E_SI`` leaks through; ``beams.w_t`` should be
    built from the estimated user channels.
    """
    return si_interference(beams.w_r, estimate.e_si, beams.w_t, params.p_ap)


def sum_rate(sinr: np.ndarray, alpha: float) -> np.ndarray:
    """``(1 - alpha) sum_k log2(1 + sinr_k)`` over the last axis."""
    return (1.0 - alpha) * np.sum(np.log1p(sinr), axis=-1) / LN2


def evaluate(channels: ChannelRealization, beams: BeamformerSet, powers: SensorPowers,
             params: SystemParams, si_term: Optional[np.ndarray] = None) -> SinrReport:
    up = uplink_sinr(channels, beams, powers, params, si_term)
    down = downlink_sinr(channels, beams, powers, params)
    return SinrReport(up, down, sum_rate(up, params.alpha), sum_rate(down, params.alpha))
