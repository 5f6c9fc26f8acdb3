"""Monte Carlo estimates of the ergodic rates and the two experiments built
on them (rate region, uplink sum-rate versus antennas).

Trial ``i`` of a plan draws everything (channels, then pilot noise) from
``RngStream(base_seed, i)``, so results do not depend on chunking or on the
number of worker threads.  Path losses stay fixed for the whole plan; the
expectations are over small-scale fading only.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .analysis import (RateBoundInputs, uplink_rate_asymptote_pcsi, uplink_rate_lower_bound,
                       uplink_rate_lower_bound_icsi)
from .beamforming import (SensorPowers, downlink_sinr, harvested_powers,
                          imperfect_csi_uplink_terms, mrc_mrt_beams, mrt_energy_beams, si_interference,
                          uplink_sinr)
from .errors import ConfigurationError
from .estimation import combined_channel, design_training, mmse_estimate
from .model import ChannelRealization, PathLossProfile, RngStream, SystemParams, draw_channels
from .optimizer import default_alpha_grid, optimize

__all__ = [
    "TrialPlan",
    "RateEstimate",
    "LinkRates",
    "RegionPoint",
    "RegionResult",
    "ScalingRow",
    "draw_batch",
    "mc_link_rates",
    "mc_uplink_rate",
    "mc_downlink_rate",
    "rate_region",
    "scaling_experiment",
    "default_workers",
    "unbatch_estimate",
]

LN2 = np.log(2.0)
CSI_MODES = ("perfect", "estimated")
BEAM_MODES = ("mrt_baseline", "optimized")
FORMS = ("exact", "large_n")
ICSI_GROUPS = 20

Sampler = Callable[[SystemParams, PathLossProfile, np.random.Generator], ChannelRealization]


def default_workers() -> int:
    """Thread count from ``FDHAP_THREADS`` (default 1)."""
    raw = os.environ.get("FDHAP_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"expected an integer, got {raw!r}", "FDHAP_THREADS") from None
    if value < 1:
        raise ConfigurationError("must be at least 1", "FDHAP_THREADS")
    return value


@dataclass(frozen=True)
class TrialPlan:
    n_trials: int
    base_seed: int
    params: SystemParams
    losses: PathLossProfile
    csi_mode: str = "perfect"
    beam_mode: str = "mrt_baseline"
    sampler: Optional[Sampler] = None
    chunk_size: int = 500

    def __post_init__(self):
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ConfigurationError(f"need at least one trial, got {self.n_trials!r}", "n_trials")
        RngStream(self.base_seed)  # validates the seed range
        if self.csi_mode not in CSI_MODES:
            raise ConfigurationError(f"unknown CSI mode {self.csi_mode!r}", "csi_mode")
        if self.beam_mode not in BEAM_MODES:
            raise ConfigurationError(f"unknown beam mode {self.beam_mode!r}", "beam_mode")
        if self.chunk_size < 1:
            raise ConfigurationError("must be positive", "chunk_size")
        self.losses.check(self.params)

    def replace(self, **changes) -> "TrialPlan":
        return replace(self, **changes)


@dataclass(frozen=True)
class RateEstimate:
    mean: float
    std_error: float
    n_trials: int

    @classmethod
    def from_samples(cls, samples) -> "RateEstimate":
        x = np.asarray(samples, dtype=float).reshape(-1)
        se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
        return cls(float(np.mean(x)), se, int(x.size))


@dataclass(frozen=True)
class LinkRates:
    per_node: List[RateEstimate]
    total: RateEstimate


def draw_batch(plan: TrialPlan, trials: Sequence[int]):
    """Channels (and, in estimated mode, MMSE estimates) for the given trials."""
    p = plan.params
    sampler = plan.sampler or draw_channels
    design = design_training(p) if plan.csi_mode == "estimated" else None
    draws, noises = [], []
    for trial in trials:
        gen = RngStream(plan.base_seed, int(trial)).generator()
        draws.append(sampler(p, plan.losses, gen))
        if design is not None:
            shape = (p.n_rx, design.tau)
            noises.append(np.sqrt(p.sigma_n2 / 2) * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)))
    channels = ChannelRealization.stack(draws)
    if design is None:
        return channels, None
    combined = combined_channel(channels, design, p, plan.losses)
    obs = combined.h_bar @ combined.x_p + np.stack(noises)
    return channels, mmse_estimate(obs, design, combined, p)


def _beams(channels, estimate, params):
    g_dl = channels.g_ap_dl if estimate is None else estimate.g_ap_dl_hat
    beams = mrc_mrt_beams(channels.g_ap_ul, g_dl)
    w_e = mrt_energy_beams(channels.g_ap_ul)
    return beams.with_energy(w_e), harvested_powers(channels, w_e, params)


def _large_n_powers(plan: TrialPlan, batch: int) -> SensorPowers:
    """Sensor powers replaced by their large-N_t limit ``kappa P_A N_t beta``."""
    p = plan.params
    p_ul = p.kappa * p.p_ap * p.n_tx * plan.losses.beta_ap_ul
    return SensorPowers(np.broadcast_to(p_ul, (batch, p.k_ul)), p.kappa)


def _uplink_sinr_chunk(plan, channels, estimate, form):
    p = plan.params
    beams, powers = _beams(channels, estimate, p)
    si = None if estimate is None else imperfect_csi_uplink_terms(channels, estimate, beams, p)
    if form == "exact":
        return uplink_sinr(channels, beams, powers, p, si)
    # large-N_t form: own-power and inter-sensor powers at their limits
    if si is None:
        si = si_interference(beams.w_r, channels.h_si, beams.w_t, p.p_ap)
    g = channels.g_ap_ul
    norms2 = np.sum(np.abs(g) ** 2, axis=-2)                       # (B, K_u)
    cross = np.abs(np.swapaxes(g.conj(), -1, -2) @ g) ** 2         # [k, l] = |g_k^H g_l|^2
    scale = p.kappa * p.p_ap * p.n_tx
    beta = plan.losses.beta_ap_ul
    signal = scale * beta * norms2
    weighted = cross * beta[None, None, :]
    interf = scale * (np.sum(weighted, axis=-1) - np.diagonal(weighted, axis1=-2, axis2=-1)) / norms2
    return signal / (interf + si + p.sigma_n2)


def _downlink_sinr_chunk(plan, channels, estimate, form):
    beams, powers = _beams(channels, estimate, plan.params)
    if form == "large_n":
        powers = _large_n_powers(plan, channels.batch_shape[0])
    return downlink_sinr(channels, beams, powers, plan.params)


def _downlink_icsi_terms(plan, channels, estimate, form):
    """Per-trial ingredients of the effective-noise rate: the effective gain
    ``g_k^T w_t,k`` and the interference power ``I_k``."""
    p = plan.params
    beams, powers = _beams(channels, estimate, p)
    if form == "large_n":
        powers = _large_n_powers(plan, channels.batch_shape[0])
    eff = np.swapaxes(channels.g_ap_dl, -1, -2) @ beams.w_t        # [k, l] = g_k^T w_t,l
    gain = np.diagonal(eff, axis1=-2, axis2=-1)
    d = np.abs(eff) ** 2
    mui = p.p_ap * (np.sum(d, axis=-1) - np.abs(gain) ** 2)
    sensor = np.einsum("...l,...lk->...k", powers.p_ul, np.abs(channels.g_ul_dl) ** 2)
    return gain, mui + sensor


def _effective_noise_rate(gain, interference, params):
    mean = np.mean(gain, axis=0)
    var = np.mean(np.abs(gain - mean) ** 2, axis=0)
    noise = params.p_ap * var + np.mean(interference, axis=0) + params.sigma_n2
    return (1.0 - params.alpha) * np.log1p(params.p_ap * np.abs(mean) ** 2 / noise) / LN2


def _map_chunks(plan: TrialPlan, func, workers: Optional[int]):
    n, size = plan.n_trials, plan.chunk_size
    chunks = [range(s, min(s + size, n)) for s in range(0, n, size)]

    def run(trials):
        channels, estimate = draw_batch(plan, trials)
        return func(channels, estimate)

    workers = default_workers() if workers is None else workers
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, chunks))
    return [run(c) for c in chunks]


def _check_form(form):
    if form not in FORMS:
        raise ConfigurationError(f"unknown rate form {form!r}, expected one of {FORMS}", "form")


def mc_link_rates(plan: TrialPlan, link: str, form: str = "exact", workers: Optional[int] = None,
                  effective_noise: Optional[bool] = None) -> LinkRates:
    """Per-node and summed ergodic rates of one link.

    ``form="exact"`` evaluates the finite-N SINR of the MRC/MRT receiver;
    ``form="large_n"`` replaces the harvested powers and norms by their
    large-array limits (the expression the single-integral forms
    approximate).  With estimated CSI the downlink rate is the
    effective-noise rate built from sample moments (users only know the mean
    effective gain); its standard error comes from batch means over
    ``ICSI_GROUPS`` contiguous groups.  ``effective_noise`` forces that rule
    on or off regardless of the CSI mode.
    """
    _check_form(form)
    p = plan.params
    if link == "uplink":
        if p.k_ul == 0:
            raise ConfigurationError("no sensors to evaluate", "k_ul")
        sinr = np.concatenate(_map_chunks(plan, lambda c, e: _uplink_sinr_chunk(plan, c, e, form), workers))
    elif link == "downlink":
        if p.k_dl == 0:
            raise ConfigurationError("no users to evaluate", "k_dl")
        if effective_noise is None:
            effective_noise = plan.csi_mode == "estimated"
        if effective_noise:
            return _downlink_icsi_rates(plan, form, workers)
        sinr = np.concatenate(_map_chunks(plan, lambda c, e: _downlink_sinr_chunk(plan, c, e, form), workers))
    else:
        raise ConfigurationError(f"unknown link {link!r}", "link")
    rates = (1.0 - p.alpha) * np.log1p(sinr) / LN2
    return LinkRates([RateEstimate.from_samples(rates[:, k]) for k in range(rates.shape[1])],
                     RateEstimate.from_samples(np.sum(rates, axis=1)))


def _downlink_icsi_rates(plan, form, workers):
    parts = _map_chunks(plan, lambda c, e: _downlink_icsi_terms(plan, c, e, form), workers)
    gain = np.concatenate([g for g, _ in parts])
    interf = np.concatenate([i for _, i in parts])
    full = _effective_noise_rate(gain, interf, plan.params)
    groups = min(ICSI_GROUPS, plan.n_trials)
    if groups > 1:
        bounds = np.linspace(0, plan.n_trials, groups + 1).astype(int)
        per_group = np.array([_effective_noise_rate(gain[a:b], interf[a:b], plan.params)
                              for a, b in zip(bounds[:-1], bounds[1:])])
        se = np.std(per_group, axis=0, ddof=1) / np.sqrt(groups)
        se_total = float(np.std(per_group.sum(axis=1), ddof=1) / np.sqrt(groups))
    else:
        se, se_total = np.zeros_like(full), 0.0
    n = plan.n_trials
    return LinkRates([RateEstimate(float(full[k]), float(se[k]), n) for k in range(full.size)],
                     RateEstimate(float(np.sum(full)), se_total, n))


def mc_uplink_rate(plan: TrialPlan, k: int, form: str = "exact", workers: Optional[int] = None) -> RateEstimate:
    """Ergodic uplink rate of sensor ``k`` (bits/s/Hz, including 1 - alpha)."""
    if not 0 <= k < plan.params.k_ul:
        raise ConfigurationError(f"sensor index {k} out of range")
    return mc_link_rates(plan, "uplink", form, workers).per_node[k]


def mc_downlink_rate(plan: TrialPlan, k: int, form: str = "exact", workers: Optional[int] = None) -> RateEstimate:
    """Ergodic downlink rate of user ``k`` (bits/s/Hz, including 1 - alpha)."""
    if not 0 <= k < plan.params.k_dl:
        raise ConfigurationError(f"user index {k} out of range")
    return mc_link_rates(plan, "downlink", form, workers).per_node[k]


# rate region

@dataclass(frozen=True)
class RegionPoint:
    scheme: str              # sdr, recovered or mrt_baseline
    r_ul_min: float
    ul_sum_rate: float
    dl_sum_rate: float
    n_feasible: int
    n_trials: int

    @property
    def feasible(self) -> bool:
        return self.n_feasible > 0


@dataclass
class RegionResult:
    r_ul_grid: np.ndarray
    alpha_grid: np.ndarray
    points: List[RegionPoint]
    # per-realization values, shape (n_trials, len(r_ul_grid)); NaN = infeasible
    dl: dict = field(default_factory=dict)
    ul: dict = field(default_factory=dict)
    alpha: dict = field(default_factory=dict)
    statuses: list = field(default_factory=list)

    def frontier(self, scheme: str) -> List[RegionPoint]:
        return [pt for pt in self.points if pt.scheme == scheme]


REGION_SCHEMES = ("sdr", "recovered", "mrt_baseline")


def _randomization_rng(base_seed, trial, index):
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(trial), 1 + int(index)))
    return np.random.Generator(np.random.PCG64(seq))


def _region_trial(plan, trial, r_grid, a_grid, max_iter):
    channels, estimate = draw_batch(plan, [trial])
    channels = channels[0]
    estimate = None if estimate is None else unbatch_estimate(estimate)
    out = {s: np.full((3, r_grid.size), np.nan) for s in REGION_SCHEMES}  # rows: dl, ul, alpha
    statuses = []
    for j, r in enumerate(r_grid):
        res = optimize(channels, plan.params, a_grid, r_ul_min=float(r), losses=plan.losses,
                       estimate=estimate, rng=_randomization_rng(plan.base_seed, trial, j), max_iter=max_iter)
        statuses.append(res.status)
        if np.isfinite(res.sdr_dl_sum_rate):
            best = next(p for p in res.points if p.alpha == res.sdr_alpha_star)
            out["sdr"][:, j] = best.sdr_dl_sum_rate, best.sdr_ul_sum_rate, best.alpha
        if res.w_e is not None:
            out["recovered"][:, j] = res.dl_sum_rate, res.ul_sum_rate, res.alpha_star
        mrt = [p for p in res.points if p.mrt_ul_sum_rate >= r * (1 - 1e-9)]
        if mrt:
            best = max(mrt, key=lambda p: p.mrt_dl_sum_rate)
            out["mrt_baseline"][:, j] = best.mrt_dl_sum_rate, best.mrt_ul_sum_rate, best.alpha
    return out, statuses


def unbatch_estimate(estimate):
    """The single estimate inside a batch of one."""
    return replace(estimate, g_ap_dl_hat=estimate.g_ap_dl_hat[0], e_ap_dl=estimate.e_ap_dl[0],
                   h_si_hat=estimate.h_si_hat[0], e_si=estimate.e_si[0])


def rate_region(plan: TrialPlan, r_ul_grid: Sequence[float], alpha_grid: Optional[Sequence[float]] = None,
                workers: Optional[int] = None, max_iter: int = 50) -> RegionResult:
    """Uplink/downlink sum-rate pairs for each uplink target.

    Every realization is optimized once per target; the SDR frontier uses the
    relaxation value, the recovered frontier the rank-one beam, and the
    baseline the MRT energy beam with the best feasible alpha.  Frontier
    points average over the realizations where the scheme is feasible.
    """
    r_grid = np.asarray(r_ul_grid, dtype=float).reshape(-1)
    a_grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float).reshape(-1)
    if r_grid.size == 0:
        raise ConfigurationError("uplink-rate grid is empty", "r_ul_grid")
    if a_grid.size == 0:
        raise ConfigurationError("alpha grid is empty", "alpha_grid")
    if np.any(r_grid < 0):
        raise ConfigurationError("uplink-rate targets must be nonnegative", "r_ul_grid")
    workers = default_workers() if workers is None else workers

    def run(trial):
        return _region_trial(plan, trial, r_grid, a_grid, max_iter)

    trials = range(plan.n_trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, trials))
    else:
        results = [run(t) for t in trials]

    result = RegionResult(r_grid, a_grid, [], statuses=[s for _, s in results])
    for scheme in REGION_SCHEMES:
        stacked = np.stack([r[scheme] for r, _ in results])       # (trials, 3, R)
        result.dl[scheme], result.ul[scheme], result.alpha[scheme] = stacked[:, 0], stacked[:, 1], stacked[:, 2]
    for scheme in REGION_SCHEMES:
        dl, ul = result.dl[scheme], result.ul[scheme]
        for j, r in enumerate(r_grid):
            ok = np.isfinite(dl[:, j])
            n_ok = int(np.sum(ok))
            mean_dl = float(np.mean(dl[ok, j])) if n_ok else float("nan")
            mean_ul = float(np.mean(ul[ok, j])) if n_ok else float("nan")
            result.points.append(RegionPoint(scheme, float(r), mean_ul, mean_dl, n_ok, plan.n_trials))
    return result


# power scaling

POWER_LAWS = {"inv_square": 2, "inv_linear": 1}


@dataclass(frozen=True)
class ScalingRow:
    n_tx: int
    p_ap: float
    mc_rate: float           # uplink sum-rate
    mc_std_error: float
    bound: float             # sum of the per-sensor lower bounds
    asymptote: float         # sum of the per-sensor limits (inv_square only)


def scaling_experiment(plan: TrialPlan, n_tx_list: Sequence[int], e_ap: float, power_law: str = "inv_square",
                       workers: Optional[int] = None) -> List[ScalingRow]:
    """Uplink sum-rate as the array grows with the transmit power scaled down.

    ``inv_square`` sets ``P_A = E_A / N_t^2`` with perfect CSI;
    ``inv_linear`` sets ``P_A = E_A / N_t`` with estimated CSI (the pilot
    length is raised to ``K_d + N_t`` when needed).  The asymptote column is
    only defined for ``inv_square``.
    """
    if power_law not in POWER_LAWS:
        raise ConfigurationError(f"unknown power law {power_law!r}", "power_law")
    sizes = [int(n) for n in n_tx_list]
    if not sizes:
        raise ConfigurationError("antenna grid is empty", "n_tx")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigurationError("antenna grid must be strictly increasing", "n_tx")
    if not e_ap >= 0:
        raise ConfigurationError("energy constant must be nonnegative", "e_ap")
    order = POWER_LAWS[power_law]
    csi = "perfect" if power_law == "inv_square" else "estimated"
    rows = []
    for n in sizes:
        p_ap = e_ap / n**order
        changes = dict(n_tx=n, p_ap=p_ap)
        if csi == "estimated":
            changes["tau"] = max(plan.params.tau, plan.params.k_dl + n)
        params = plan.params.replace(**changes)
        sub = plan.replace(params=params, csi_mode=csi)
        if p_ap == 0:
            rows.append(ScalingRow(n, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        est = mc_link_rates(sub, "uplink", "exact", workers).total
        inputs = RateBoundInputs(params, plan.losses, e_ap=e_ap)
        ks = range(params.k_ul)
        if csi == "perfect":
            bound = sum(uplink_rate_lower_bound(inputs, k) for k in ks)
            asym = sum(uplink_rate_asymptote_pcsi(inputs, k) for k in ks)
        else:
            bound = sum(uplink_rate_lower_bound_icsi(inputs, k) for k in ks)
            asym = float("nan")
        rows.append(ScalingRow(n, p_ap, est.mean, est.std_error, float(bound), float(asym)))
    return rows
