import numpy as np
import pytest
from scipy import integrate, stats

from fdhap.beamforming import SensorPowers, downlink_sinr, mrc_mrt_beams
from fdhap.errors import ConfigurationError
from fdhap.model import PathLossProfile, RngStream, SystemParams, draw_channels
from fdhap.montecarlo import (
    RateEstimate,
    TrialPlan,
    draw_batch,
    mc_downlink_rate,
    mc_link_rates,
    mc_uplink_rate,
    rate_region,
    scaling_experiment,
)


def _plan(n=2000, seed=11, **kw):
    base = dict(n_tx=8, n_rx=8, k_dl=2, k_ul=2, p_ap=10.0, tau=10)
    base.update(kw)
    params = SystemParams(**base)
    return TrialPlan(n, seed, params, PathLossProfile.uniform(params))


def _fixed_sampler(params, losses, gen):
    return draw_channels(params, losses, RngStream(123))


def test_rate_estimate_standard_error():
    x = np.arange(10.0)
    est = RateEstimate.from_samples(x)
    assert est.std_error == pytest.approx(np.std(x, ddof=1) / np.sqrt(10))
    assert RateEstimate.from_samples([2.0]).std_error == 0.0


def test_deterministic_channel_has_zero_error():
    plan = _plan(50).replace(sampler=_fixed_sampler)
    one = mc_uplink_rate(plan.replace(n_trials=1), 0)
    many = mc_uplink_rate(plan, 0)
    assert many.std_error == pytest.approx(0.0, abs=1e-14)
    assert many.mean == pytest.approx(one.mean, rel=1e-12)


def test_doubling_trials_shrinks_error():
    plan = _plan(4000)
    a = mc_uplink_rate(plan, 0).std_error
    b = mc_uplink_rate(plan.replace(n_trials=8000), 0).std_error
    assert b / a == pytest.approx(1 / np.sqrt(2), rel=0.1)


def test_reproducible_and_chunk_independent():
    plan = _plan(700)
    ref = mc_link_rates(plan, "uplink")
    assert mc_link_rates(plan, "uplink") == ref
    assert mc_link_rates(plan.replace(chunk_size=64), "uplink", workers=3) == ref
    dl = mc_link_rates(plan.replace(csi_mode="estimated"), "downlink")
    assert mc_link_rates(plan.replace(csi_mode="estimated", chunk_size=100), "downlink", workers=4) == dl
    other = mc_link_rates(plan.replace(base_seed=12), "uplink")
    assert other.total.mean != ref.total.mean


def test_sum_consistency():
    plan = _plan(500)
    for link in ("uplink", "downlink"):
        rates = mc_link_rates(plan, link)
        assert rates.total.mean == pytest.approx(sum(r.mean for r in rates.per_node), rel=1e-12)
    assert mc_downlink_rate(plan, 1) == mc_link_rates(plan, "downlink").per_node[1]


def test_single_sensor_without_si_matches_analytic_expectation():
    # SINR = kappa P_A X^2 / sigma^2 with X = ||g||^2 ~ Gamma(N_t, 1)
    plan = _plan(10_000, n_tx=6, k_dl=0, k_ul=1, sigma_si2=0.0, tau=0, p_ap=2.0)
    p = plan.params
    c = p.kappa * p.p_ap / p.sigma_n2
    f = lambda x: np.log2(1 + c * x * x) * stats.gamma.pdf(x, p.n_tx)
    exact = (1 - p.alpha) * integrate.quad(f, 0, np.inf, epsabs=1e-12)[0]
    est = mc_uplink_rate(plan, 0)
    assert abs(est.mean - exact) < 3 * est.std_error


def test_downlink_without_sensors_matches_direct_formula():
    plan = _plan(5, k_ul=0).replace(sampler=_fixed_sampler)
    p = plan.params
    ch = _fixed_sampler(p, plan.losses, None)
    w_t = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl).w_t
    d = np.abs(ch.g_ap_dl.T @ w_t) ** 2
    sinr = p.p_ap * np.diag(d) / (p.p_ap * (d.sum(axis=1) - np.diag(d)) + p.sigma_n2)
    est = mc_link_rates(plan, "downlink")
    np.testing.assert_allclose([r.mean for r in est.per_node], (1 - p.alpha) * np.log2(1 + sinr), rtol=1e-12)
    direct = downlink_sinr(ch, mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl), SensorPowers(np.zeros(0), 0.0), p)
    np.testing.assert_allclose(direct, sinr, rtol=1e-12)


def test_estimated_csi_converges_at_high_pilot_power():
    plan = _plan(4000, p_dl=1e6)
    perfect = mc_link_rates(plan, "downlink", effective_noise=True).total.mean
    icsi = mc_link_rates(plan.replace(csi_mode="estimated"), "downlink").total.mean
    assert abs(icsi - perfect) / perfect < 0.02
    low = mc_link_rates(plan.replace(csi_mode="estimated", params=plan.params.replace(p_dl=1e-2)),
                        "downlink").total.mean
    assert low < icsi


def test_estimated_mode_draws_estimates():
    plan = _plan(3).replace(csi_mode="estimated")
    channels, est = draw_batch(plan, [0, 1, 2])
    assert channels.batch_shape == (3,)
    assert est.g_ap_dl_hat.shape == channels.g_ap_dl.shape
    assert draw_batch(plan.replace(csi_mode="perfect"), [0])[1] is None


def test_bad_plans():
    with pytest.raises(ConfigurationError):
        _plan(0)
    with pytest.raises(ConfigurationError):
        _plan(5).replace(csi_mode="guess")
    with pytest.raises(ConfigurationError):
        mc_link_rates(_plan(5), "sideways")
    with pytest.raises(ConfigurationError):
        mc_link_rates(_plan(5), "uplink", form="asymptotic")
    with pytest.raises(ConfigurationError):
        mc_uplink_rate(_plan(5), 4)


def test_scaling_zero_energy_gives_zero_rates():
    rows = scaling_experiment(_plan(20), [8, 16], e_ap=0.0)
    assert all(r.mc_rate == 0 and r.bound == 0 and r.asymptote == 0 for r in rows)


def test_scaling_rows():
    rows = scaling_experiment(_plan(300), [8, 32], e_ap=100.0)
    assert [r.n_tx for r in rows] == [8, 32]
    assert rows[1].p_ap == pytest.approx(100.0 / 32**2)
    assert rows[0].asymptote == rows[1].asymptote > 0
    lin = scaling_experiment(_plan(100), [8, 16], e_ap=100.0, power_law="inv_linear")
    assert np.isnan(lin[0].asymptote) and lin[1].p_ap == pytest.approx(100.0 / 16)
    with pytest.raises(ConfigurationError):
        scaling_experiment(_plan(10), [16, 8], e_ap=1.0)
    with pytest.raises(ConfigurationError):
        scaling_experiment(_plan(10), [8], e_ap=1.0, power_law="cubic")


@pytest.fixture(scope="module")
def small_region():
    plan = _plan(3, n_tx=4, k_dl=2, k_ul=2, p_ap=100.0)
    return plan, rate_region(plan, [0.0, 0.5, 1.0, 50.0], alpha_grid=[0.3, 0.6])


def test_region_structure_and_dominance(small_region):
    plan, res = small_region
    assert {p.scheme for p in res.points} == {"sdr", "recovered", "mrt_baseline"}
    sdr, mrt = res.dl["sdr"], res.dl["mrt_baseline"]
    both = np.isfinite(sdr) & np.isfinite(mrt)
    assert np.all(sdr[both] >= mrt[both] - 1e-6)
    # unreachable target is reported as infeasible
    last = [p for p in res.points if p.r_ul_min == 50.0]
    assert all(not p.feasible and np.isnan(p.dl_sum_rate) for p in last)
    assert res.frontier("sdr")[0].n_feasible == plan.n_trials


def test_region_frontier_nonincreasing(small_region):
    _, res = small_region
    dl = res.dl["sdr"][:, :3]
    assert np.all(np.diff(dl, axis=1) <= 1e-4 * np.nanmax(dl))


def test_region_independent_of_workers(small_region):
    plan, res = small_region
    again = rate_region(plan, [0.0, 0.5, 1.0, 50.0], alpha_grid=[0.3, 0.6], workers=3)
    for scheme in ("sdr", "recovered", "mrt_baseline"):
        np.testing.assert_array_equal(again.dl[scheme], res.dl[scheme])
        np.testing.assert_array_equal(again.ul[scheme], res.ul[scheme])


def test_region_grid_checks():
    with pytest.raises(ConfigurationError):
        rate_region(_plan(1), [])
    with pytest.raises(ConfigurationError):
        rate_region(_plan(1), [-1.0])
