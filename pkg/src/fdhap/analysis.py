"""Closed-form and single-integral expressions for the ergodic rates under
MRC/MRT processing with MRT energy beams.

The integral forms rest on

    E ln(1 + S / (I + sigma^2)) = int_0^inf E[e^{-z (I + sigma^2)}] (1 - E[e^{-z S}]) / z dz

with gamma/exponential signal and interference terms, whose Laplace
transforms give the ``(1 + theta z)^-n`` factors.  All rates are in
bits/s/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError, QuadratureError
from .model import PathLossProfile, SystemParams

__all__ = [
    "RateBoundInputs",
    "QuadratureConfig",
    "rate_integral",
    "uplink_rate_integral",
    "downlink_rate_integral",
    "uplink_rate_lower_bound",
    "uplink_rate_lower_bound_icsi",
    "uplink_rate_asymptote_pcsi",
    "downlink_rate_lower_bound",
    "downlink_rate_icsi",
]

LN2 = np.log(2.0)


@dataclass(frozen=True)
class RateBoundInputs:
    """System constants plus the derived coefficients of the rate formulas.

    ``kappa`` overrides ``eta alpha / (1 - alpha)`` when given (useful to
    probe a formula at fixed harvesting gain); ``e_ap`` is the energy
    constant of the power-scaling law.
    """

    params: SystemParams
    losses: PathLossProfile
    e_ap: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        self.losses.check(self.params)
        if self.kappa is not None and not self.kappa >= 0:
            raise ConfigurationError("kappa must be nonnegative", "kappa")

    @property
    def kappa_value(self) -> float:
        return self.params.kappa if self.kappa is None else float(self.kappa)

    @property
    def time_factor(self) -> float:
        return 1.0 - self.params.alpha

    @property
    def phi(self) -> np.ndarray:
        """``kappa P_A N_t beta_APu,l^2`` for every sensor."""
        p = self.params
        return self.kappa_value * p.p_ap * p.n_tx * self.losses.beta_ap_ul**2

    @property
    def psi_dl(self) -> np.ndarray:
        """``P_A beta_APd,k^2`` for every user."""
        return self.params.p_ap * self.losses.beta_ap_dl**2

    def psi_ul(self, k: int) -> np.ndarray:
        """``kappa P_A N_t beta_APu,l beta_ud,k,l`` over sensors l, for user k."""
        p = self.params
        return self.kappa_value * p.p_ap * p.n_tx * self.losses.beta_ap_ul * self.losses.beta_ul_dl[k]


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    small_z_cutoff: float = 1e-12
    max_subdivisions: int = 500
    tail: float = 1e-14

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "small_z_cutoff", "tail"):
            if not getattr(self, name) > 0:
                raise ConfigurationError("must be positive", name)
        if self.max_subdivisions < 1:
            raise ConfigurationError("must be positive", "max_subdivisions")


def _check_index(k, size, what):
    if not 0 <= k < size:
        raise ConfigurationError(f"{what} index {k} out of range 0..{size - 1}")


def rate_integral(signal_scale: float, signal_order: int, interference: dict, sigma_n2: float,
                  quad: QuadratureConfig = QuadratureConfig()) -> float:
    """``int_0^inf prod_j (1 + t_j z)^-n_j (1 - (1 + s z)^-N) e^{-sigma^2 z} / z dz`` in nats.

    ``interference`` maps each scale ``t_j`` to its multiplicity ``n_j``.
    The 1/z singularity is removable: below ``small_z_cutoff`` the integrand
    is replaced by its limit ``N s``; above it the substitution z = e^u turns
    the integral into a smooth one over u.
    """
    if signal_scale <= 0 or signal_order <= 0:
        return 0.0
    if not sigma_n2 > 0:
        raise DomainError("noise power must be positive", "sigma_n2")
    scales = np.array([t for t, n in interference.items() if n > 0 and t > 0], dtype=float)
    orders = np.array([n for t, n in interference.items() if n > 0 and t > 0], dtype=float)

    def f(z):
        log_interf = -np.sum(orders * np.log1p(scales * z)) if scales.size else 0.0
        signal = -np.expm1(-signal_order * np.log1p(signal_scale * z))
        return signal * np.exp(log_interf - sigma_n2 * z)

    eps = quad.small_z_cutoff
    z_max = -np.log(quad.tail) / sigma_n2
    head = signal_order * signal_scale * eps
    if z_max <= eps:
        return head
    value, abserr, info = _quad(lambda u: f(np.exp(u)), np.log(eps), np.log(z_max), quad)
    return float(head + value)


def _quad(func, lo, hi, quad):
    """scipy's adaptive Gauss-Kronrod; a warning is only fatal when the
    reported error is far above the requested tolerance."""
    result = integrate.quad(func, lo, hi, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
                            limit=quad.max_subdivisions, full_output=1)
    value, abserr, info = result[0], result[1], result[2]
    warned = len(result) > 3
    tol = max(quad.abs_tol, quad.rel_tol * abs(value))
    if not np.isfinite(value) or (warned and abserr > 100 * tol):
        raise QuadratureError(f"quadrature did not converge (estimated error {abserr:.3e})", abserr)
    return value, abserr, info


def uplink_rate_integral(inputs: RateBoundInputs, k: int, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Single-integral form of the large-N_t uplink ergodic rate of sensor k."""
    p = inputs.params
    _check_index(k, p.k_ul, "sensor")
    phi = inputs.phi
    interference = {}
    if p.k_dl:
        interference[p.p_ap * p.sigma_si2] = p.k_dl
    for ell in range(p.k_ul):
        if ell != k:
            interference[phi[ell]] = interference.get(phi[ell], 0) + 1
    nats = rate_integral(phi[k], p.n_tx, interference, p.sigma_n2, quad)
    return inputs.time_factor * nats / LN2


def downlink_rate_integral(inputs: RateBoundInputs, k: int, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Single-integral form of the large-N_r downlink ergodic rate of user k.

    The sensor-interference product runs over every sensor (each sensor
    interferes with every user).
    """
    p = inputs.params
    _check_index(k, p.k_dl, "user")
    psi = inputs.psi_dl[k]
    interference = {}
    if p.k_dl > 1:
        interference[psi] = p.k_dl - 1
    for t in inputs.psi_ul(k):
        interference[t] = interference.get(t, 0) + 1
    nats = rate_integral(psi, p.n_rx, interference, p.sigma_n2, quad)
    return inputs.time_factor * nats / LN2


def _log2_rate(factor, sinr):
    return factor * np.log1p(sinr) / LN2


def _uplink_bound(inputs: RateBoundInputs, k: int, si_term: float) -> float:
    p = inputs.params
    _check_index(k, p.k_ul, "sensor")
    if p.n_tx < 2:
        raise DomainError(f"the bound needs N_t >= 2, got {p.n_tx}", "n_tx")
    kap = inputs.kappa_value
    beta2 = inputs.losses.beta_ap_ul**2
    num = kap * p.p_ap * beta2[k] * (p.n_tx + 2) * (p.n_tx - 1)
    others = np.sum(beta2) - beta2[k]
    den = kap * p.p_ap * p.n_tx * others + si_term + p.sigma_n2
    return float(_log2_rate(inputs.time_factor, num / den))


def uplink_rate_lower_bound(inputs: RateBoundInputs, k: int) -> float:
    """Jensen lower bound on the perfect-CSI uplink rate of sensor k."""
    p = inputs.params
    return _uplink_bound(inputs, k, p.k_dl * p.p_ap * p.sigma_si2)


def uplink_rate_lower_bound_icsi(inputs: RateBoundInputs, k: int, tau: Optional[int] = None) -> float:
    """Lower bound with estimated SI cancelled; the residual SI power is
    shrunk by ``1 / (tau P_A sigma_SI^2 + 1)``.  ``tau`` defaults to the
    pilot length in ``inputs.params``."""
    p = inputs.params
    tau = p.tau if tau is None else tau
    if tau < 0:
        raise DomainError("pilot length must be nonnegative", "tau")
    si = p.k_dl * p.p_ap * p.sigma_si2 / (tau * p.p_ap * p.sigma_si2 + 1.0)
    return _uplink_bound(inputs, k, si)


def uplink_rate_asymptote_pcsi(inputs: RateBoundInputs, k: int) -> float:
    """Limit of the perfect-CSI bound when P_A = E_A / N_t^2 and N_t grows:
    ``(1 - alpha) log2(1 + kappa beta^2 E_A / sigma^2)``."""
    p = inputs.params
    _check_index(k, p.k_ul, "sensor")
    if inputs.e_ap is None or inputs.e_ap < 0:
        raise DomainError("the asymptote needs a nonnegative energy constant e_ap", "e_ap")
    beta2 = inputs.losses.beta_ap_ul[k] ** 2
    return float(_log2_rate(inputs.time_factor, inputs.kappa_value * beta2 * inputs.e_ap / p.sigma_n2))


def downlink_rate_lower_bound(inputs: RateBoundInputs, k: int) -> float:
    """Jensen lower bound on the perfect-CSI downlink rate of user k."""
    p = inputs.params
    _check_index(k, p.k_dl, "user")
    if p.n_rx < 2:
        raise DomainError(f"the bound needs N_r >= 2, got {p.n_rx}", "n_rx")
    beta = inputs.losses.beta_ap_dl[k]
    num = p.p_ap * beta * (p.n_rx - 1)
    den = (p.k_dl - 1) * p.p_ap * beta + float(np.sum(inputs.psi_ul(k))) + p.sigma_n2
    return float(_log2_rate(inputs.time_factor, num / den))


def downlink_rate_icsi(inputs: RateBoundInputs, var_g_hat, k: int, apply_time_split: bool = False) -> float:
    """Closed-form downlink rate of user k with MMSE-estimated CSI.

    ``var_g_hat`` holds the per-user estimate variances (or is a
    :class:`~fdhap.estimation.ChannelEstimate`).  The expression carries no
    (1 - alpha) factor unless ``apply_time_split`` is set.
    """
    p = inputs.params
    _check_index(k, p.k_dl, "user")
    var = np.asarray(getattr(var_g_hat, "var_g_hat", var_g_hat), dtype=float).reshape(-1)
    if var.size != p.k_dl:
        raise ConfigurationError(f"expected {p.k_dl} estimate variances, got {var.size}", "var_g_hat")
    num = p.p_ap * p.n_rx**2 * var[k] ** 2
    den = (p.p_ap * p.n_rx * var[k] * float(np.sum(inputs.losses.beta_ap_dl))
           + p.k_ul * float(np.sum(inputs.psi_ul(k))) + p.sigma_n2)
    factor = inputs.time_factor if apply_time_split else 1.0
    return float(_log2_rate(factor, num / den))
