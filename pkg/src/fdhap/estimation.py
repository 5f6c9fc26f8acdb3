"""Pilot/energy training design and MMSE estimation of the combined channel.

During the first phase the HAP observes

    Y = G_apdl * sqrt(P_p) * pilots + H_si * sqrt(P_A) * energy_seq + N
      = H_bar X_p + N,

and estimates ``H_bar = [G_apdl, H_si]`` jointly.  With orthogonal training
the estimator decouples per column, which gives the closed-form estimate
variances stored in :class:`ChannelEstimate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimationError
from .model import ChannelRealization, PathLossProfile, RngLike, SystemParams, as_generator, draw_channels, RngStream

__all__ = [
    "TrainingDesign",
    "CombinedChannel",
    "ChannelEstimate",
    "EstimationStats",
    "design_training",
    "combined_channel",
    "pilot_observation",
    "mmse_estimate",
    "estimate_variances",
    "simulate_estimation",
    "estimation_error_stats",
]

MAX_CONDITION = 1e13


@dataclass(frozen=True)
class TrainingDesign:
    pilots: np.ndarray       # (K_d, tau), orthonormal rows
    energy_seq: np.ndarray   # (N_t, tau), rows of squared norm tau
    p_pilot: float           # tau * P_d

    @property
    def tau(self) -> int:
        return self.pilots.shape[1]

    def signal_matrix(self, params: SystemParams) -> np.ndarray:
        """X_p stacking the scaled pilot and energy rows, (K_d + N_t) x tau.

        The energy rows are scaled by sqrt(P_A) so each SI column is probed
        with total energy tau * P_A, the same budget the pilot rows get from
        P_p = tau * P_d.
        """
        return np.vstack([np.sqrt(self.p_pilot) * self.pilots,
                          np.sqrt(params.p_ap) * self.energy_seq])


@dataclass(frozen=True)
class CombinedChannel:
    h_bar: np.ndarray   # (..., N_r, K_d + N_t)
    x_p: np.ndarray     # (K_d + N_t, tau)
    c_hbar: np.ndarray  # (K_d + N_t, K_d + N_t) real diagonal


@dataclass(frozen=True)
class ChannelEstimate:
    g_ap_dl_hat: np.ndarray
    e_ap_dl: np.ndarray
    h_si_hat: np.ndarray
    e_si: np.ndarray
    var_g_hat: np.ndarray
    var_si_hat: float


def design_training(params: SystemParams) -> TrainingDesign:
    """Rows of a tau-point DFT: the first K_d are the pilots, the next N_t
    (scaled by sqrt(tau)) the energy sequence, so every cross product
    vanishes exactly."""
    kd, nt, tau = params.k_dl, params.n_tx, params.tau
    if tau < kd + nt:
        raise ConfigurationError(
            f"orthogonal training needs tau >= K_d + N_t = {kd + nt}, got tau = {tau}", "tau")
    idx = np.arange(tau)
    dft = np.exp(-2j * np.pi * np.outer(idx, idx) / tau) / np.sqrt(tau)
    pilots = dft[:kd].copy()
    energy = np.sqrt(tau) * dft[kd:kd + nt]
    for arr in (pilots, energy):
        arr.setflags(write=False)
    return TrainingDesign(pilots, energy, tau * params.p_dl)


def estimate_variances(params: SystemParams, beta_ap_dl):
    """Per-entry variances of the estimated user channels and SI channel.

    Reduces to ``tau P_d beta^2 / (1 + tau P_d beta)`` at unit noise power.
    """
    p_pilot = params.tau * params.p_dl
    beta = np.asarray(beta_ap_dl, dtype=float)
    var_g = p_pilot * beta**2 / (params.sigma_n2 + p_pilot * beta)
    e_si = params.tau * params.p_ap
    var_si = e_si * params.sigma_si2**2 / (params.sigma_n2 + e_si * params.sigma_si2)
    return var_g, float(var_si)


def combined_channel(channels: ChannelRealization, design: TrainingDesign, params: SystemParams,
                     losses: PathLossProfile) -> CombinedChannel:
    h_bar = np.concatenate([channels.g_ap_dl, channels.h_si], axis=-1)
    c_diag = np.concatenate([losses.beta_ap_dl, np.full(params.n_tx, params.sigma_si2)])
    return CombinedChannel(h_bar, design.signal_matrix(params), np.diag(c_diag))


def pilot_observation(combined: CombinedChannel, params: SystemParams, rng: RngLike) -> np.ndarray:
    gen = as_generator(rng)
    shape = combined.h_bar.shape[:-1] + (combined.x_p.shape[1],)
    noise = np.sqrt(params.sigma_n2 / 2) * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))
    return combined.h_bar @ combined.x_p + noise


def _estimator_matrix(x_p, c_hbar, sigma_n2):
    """[X^H C X + sigma^2 I]^-1 X^H C via a linear solve."""
    xh_c = x_p.conj().T @ c_hbar
    normal = xh_c @ x_p + sigma_n2 * np.eye(x_p.shape[1])
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise EstimationError(f"MMSE normal matrix is ill-conditioned (cond = {cond:.3e})", cond)
    return np.linalg.solve(normal, xh_c)


def mmse_estimate(obs: np.ndarray, design: TrainingDesign, combined: CombinedChannel,
                  params: SystemParams) -> ChannelEstimate:
    """Linear MMSE estimate of ``H_bar`` from the pilot observation ``obs``.

    ``obs`` may be batched over leading axes.  The error blocks are computed
    against ``combined.h_bar``.
    """
    kd = params.k_dl
    if combined.x_p.shape[1] != design.tau:
        raise ConfigurationError("signal matrix and training design disagree on tau")
    h_hat = obs @ _estimator_matrix(combined.x_p, combined.c_hbar, params.sigma_n2)
    err = combined.h_bar - h_hat
    var_g, var_si = estimate_variances(params, np.real(np.diag(combined.c_hbar))[:kd])
    return ChannelEstimate(h_hat[..., :kd], err[..., :kd], h_hat[..., kd:], err[..., kd:],
                           var_g, var_si)


def simulate_estimation(params: SystemParams, losses: PathLossProfile, n_trials: int, seed: int = 0):
    """Draw ``n_trials`` independent channels and pilot phases.

    Returns the batched truth and the batched estimate; trial i uses
    ``RngStream(seed, i)`` for both its channels and its receiver noise.
    """
    design = design_training(params)
    truths, noises = [], []
    for trial in range(n_trials):
        gen = RngStream(seed, trial).generator()
        truths.append(draw_channels(params, losses, gen))
        shape = (params.n_rx, design.tau)
        noises.append(np.sqrt(params.sigma_n2 / 2) * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)))
    truth = ChannelRealization.stack(truths)
    combined = combined_channel(truth, design, params, losses)
    obs = combined.h_bar @ combined.x_p + np.stack(noises)
    return truth, mmse_estimate(obs, design, combined, params)


@dataclass(frozen=True)
class EstimationStats:
    n_trials: int
    var_g_hat: np.ndarray        # empirical per-column variance of the estimate
    var_g_err: np.ndarray        # empirical per-column variance of the error
    corr_g: np.ndarray           # |normalized estimate/error correlation| per column
    cross_g: np.ndarray          # mean of G_hat^H E over trials (K_d x K_d)
    var_si_hat: float
    var_si_err: float
    corr_si: float


def _corr(a, b):
    num = np.abs(np.mean(a * b.conj()))
    den = np.sqrt(np.mean(np.abs(a) ** 2) * np.mean(np.abs(b) ** 2))
    return float(num / den) if den > 0 else 0.0


def estimation_error_stats(estimate: ChannelEstimate, truth: ChannelRealization) -> EstimationStats:
    """Empirical moments of a batch of estimates (leading axis = trial)."""
    g_hat, g_err = estimate.g_ap_dl_hat, estimate.e_ap_dl
    if g_hat.ndim != 3:
        raise ConfigurationError("expected a batch of estimates with a leading trial axis")
    trials = g_hat.shape[0]
    if trials < 1000:
        raise ConfigurationError(f"need at least 1000 trials for stable statistics, got {trials}")
    if not np.allclose(g_hat + g_err, truth.g_ap_dl):
        raise ConfigurationError("estimate does not decompose the supplied truth")
    kd = g_hat.shape[-1]
    var_hat = np.mean(np.abs(g_hat) ** 2, axis=(0, 1))
    var_err = np.mean(np.abs(g_err) ** 2, axis=(0, 1))
    corr = np.array([_corr(g_hat[..., k], g_err[..., k]) for k in range(kd)])
    cross = np.mean(np.swapaxes(g_hat.conj(), -1, -2) @ g_err, axis=0)
    return EstimationStats(
        n_trials=trials,
        var_g_hat=var_hat,
        var_g_err=var_err,
        corr_g=corr,
        cross_g=cross,
        var_si_hat=float(np.mean(np.abs(estimate.h_si_hat) ** 2)),
        var_si_err=float(np.mean(np.abs(estimate.e_si) ** 2)),
        corr_si=_corr(estimate.h_si_hat, estimate.e_si),
    )
