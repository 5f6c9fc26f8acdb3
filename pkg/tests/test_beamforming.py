import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdhap.beamforming import (BeamformerSet, SensorPowers, downlink_sinr, evaluate, harvested_powers,
                               imperfect_csi_uplink_terms, kappa, mrc_mrt_beams, mrt_energy_beams,
                               si_interference, sum_rate, unit_columns, uplink_sinr)
from fdhap.errors import DegenerateChannelError, DomainError
from fdhap.estimation import ChannelEstimate
from fdhap.model import ChannelRealization, PathLossProfile, RngStream, SystemParams, draw_channels

from conftest import cplx


def _realization(g_ap_dl, h_si, g_ap_ul, g_dl_ul, g_ul_dl):
    return ChannelRealization(*(np.asarray(x, dtype=complex) for x in (g_ap_dl, h_si, g_ap_ul, g_dl_ul, g_ul_dl)))


@pytest.mark.parametrize("eta, alpha, want", [(0.5, 0.5, 0.5), (0.5, 0.0, 0.0), (0.5, 1 / 3, 0.25)])
def test_kappa_values(eta, alpha, want):
    assert kappa(eta, alpha) == pytest.approx(want)


@pytest.mark.parametrize("alpha", [1.0, 1.5, -0.1])
def test_kappa_domain(alpha):
    with pytest.raises(DomainError):
        kappa(0.5, alpha)


def test_unit_vector_fixed_point_and_scale_invariance():
    e1 = np.zeros((4, 1), dtype=complex)
    e1[0] = 1
    np.testing.assert_allclose(unit_columns(e1), e1)
    g = cplx(np.random.default_rng(0), 4, 3)
    np.testing.assert_allclose(unit_columns(10 * g), unit_columns(g))
    np.testing.assert_allclose(np.linalg.norm(unit_columns(g), axis=0), 1.0, atol=1e-12)


def test_zero_column_rejected():
    g = np.ones((3, 2), dtype=complex)
    g[:, 1] = 0
    with pytest.raises(DegenerateChannelError):
        mrc_mrt_beams(g, np.ones((3, 1)))
    with pytest.raises(DegenerateChannelError):
        mrt_energy_beams(g)


def test_mrt_uses_conjugate():
    g = np.array([[1j], [0.0]])
    beams = mrc_mrt_beams(g, g)
    np.testing.assert_allclose(beams.w_r, [[1j], [0]])
    np.testing.assert_allclose(beams.w_t, [[-1j], [0]])


def test_energy_beam_norms():
    gen = np.random.default_rng(1)
    assert np.linalg.norm(mrt_energy_beams(cplx(gen, 5, 1))) ** 2 == pytest.approx(1.0)
    same = np.repeat(cplx(gen, 5, 1), 2, axis=1)
    w = mrt_energy_beams(same)
    np.testing.assert_allclose(np.linalg.norm(w, axis=0), 1.0)
    assert np.linalg.norm(w) ** 2 == pytest.approx(2.0)
    w = mrt_energy_beams(np.eye(3, dtype=complex)[:, :2] * 7)
    np.testing.assert_allclose(np.linalg.norm(w, axis=0), 1.0)


def test_harvested_power_hand_values():
    p = SystemParams(n_tx=1, n_rx=1, k_dl=1, k_ul=1, tau=2, p_ap=2.0)
    pw = harvested_powers(np.ones((1, 1)), np.ones((1, 1)), p, kappa_value=0.5)
    assert pw.p_ul[0] == pytest.approx(1.0)
    # null beam
    g = np.array([[1.0], [0.0]])
    assert harvested_powers(g, np.array([[0.0], [1.0]]), p, 0.5).p_ul[0] == 0.0
    # MRT on a known channel with ||g||^2 = 4
    g = np.array([[1.0], [1j], [-1.0], [1.0]])
    p1 = SystemParams(p_ap=1.0)
    assert harvested_powers(g, mrt_energy_beams(g), p1, 1.0).p_ul[0] == pytest.approx(4.0)


def test_harvested_power_linear_in_power_and_kappa(small_params, unit_losses):
    ch = draw_channels(small_params, unit_losses, RngStream(4))
    w = mrt_energy_beams(ch.g_ap_ul)
    base = harvested_powers(ch, w, small_params, 0.3).p_ul
    np.testing.assert_allclose(harvested_powers(ch, w, small_params, 0.6).p_ul, 2 * base)
    doubled = small_params.replace(p_ap=2 * small_params.p_ap)
    np.testing.assert_allclose(harvested_powers(ch, w, doubled, 0.3).p_ul, 2 * base)


def test_uplink_sinr_single_sensor_no_si():
    p = SystemParams(n_tx=2, n_rx=1, k_dl=1, k_ul=1, tau=3, sigma_n2=1.0)
    g = np.array([[1.0], [1.0]])                       # ||g||^2 = 2
    ch = _realization([[1.0]], np.zeros((1, 2)), g, [[0.0]], [[0.0]])
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    assert uplink_sinr(ch, beams, SensorPowers(np.array([3.0]), 0.5), p)[0] == pytest.approx(6.0)


def test_uplink_sinr_orthogonal_sensors():
    p = SystemParams(n_tx=2, n_rx=1, k_dl=1, k_ul=2, tau=3)
    ch = _realization([[1.0]], np.zeros((1, 2)), np.diag([1.0, 2.0]), [[0.0, 0.0]], [[0.0], [0.0]])
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    sinr = uplink_sinr(ch, beams, SensorPowers(np.array([1.0, 1.0]), 0.5), p)
    np.testing.assert_allclose(sinr, [1.0, 4.0])


def test_uplink_sinr_two_by_two_hand_instance():
    # N_t = 2, K_u = 2, K_d = 1, N_r = 1
    p = SystemParams(n_tx=2, n_rx=1, k_dl=1, k_ul=2, tau=3, p_ap=2.0, sigma_n2=1.0)
    g_ul = np.array([[1.0, 1.0], [0.0, 1.0]])
    h_si = np.array([[1.0, 2.0]])
    ch = _realization([[1.0]], h_si, g_ul, [[0.0, 0.0]], [[0.0], [0.0]])
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)        # w_t = [1]
    powers = SensorPowers(np.array([1.0, 2.0]), 0.5)
    # sensor 0: w_r = e1; signal 1*1; interference 2*|1|^2; SI 2*|1|^2
    # sensor 1: w_r = [1,1]/sqrt2; signal 2*2; interference 1*1/2; SI 2*|3/sqrt2|^2 = 9
    np.testing.assert_allclose(uplink_sinr(ch, beams, powers, p), [1 / 5, 4 / 10.5])


def test_downlink_sinr_hand_values():
    p = SystemParams(n_tx=1, n_rx=2, k_dl=1, k_ul=1, tau=2, p_ap=3.0, sigma_n2=1.0)
    g_dl = np.array([[1.0], [1.0]])                    # ||g||^2 = 2
    ch = _realization(g_dl, np.zeros((2, 1)), [[1.0]], [[0.0]], [[0.0]])
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    assert downlink_sinr(ch, beams, SensorPowers(np.array([0.0]), 0.5), p)[0] == pytest.approx(6.0)
    ch2 = _realization(g_dl, np.zeros((2, 1)), [[1.0]], [[0.0]], [[2.0]])   # |g_ud|^2 = 4
    assert downlink_sinr(ch2, beams, SensorPowers(np.array([1.0]), 0.5), p)[0] == pytest.approx(6.0 / 5.0)


def test_downlink_sinr_two_users_two_sensors_unit_channels():
    p = SystemParams(n_tx=1, n_rx=2, k_dl=2, k_ul=2, tau=3, p_ap=1.0, sigma_n2=1.0)
    g_dl = np.array([[1.0, 1.0], [0.0, 1.0]])
    ch = _realization(g_dl, np.zeros((2, 1)), [[1.0, 1.0]], np.ones((2, 2)), np.ones((2, 2)))
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    powers = SensorPowers(np.array([1.0, 1.0]), 0.5)
    # user 0: signal 1; MUI |g0^T w1|^2 = 1/2; sensors 2; noise 1
    # user 1: signal 2; MUI |g1^T w0|^2 = 1;   sensors 2; noise 1
    np.testing.assert_allclose(downlink_sinr(ch, beams, powers, p), [1 / 3.5, 2 / 4])


def test_residual_si_limits(small_params, unit_losses):
    ch = draw_channels(small_params, unit_losses, RngStream(9))
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    zero = np.zeros_like(ch.h_si)
    perfect = ChannelEstimate(ch.g_ap_dl, np.zeros_like(ch.g_ap_dl), ch.h_si, zero, np.ones(2), 1.0)
    np.testing.assert_allclose(imperfect_csi_uplink_terms(ch, perfect, beams, small_params), 0)
    blind = ChannelEstimate(ch.g_ap_dl, np.zeros_like(ch.g_ap_dl), zero, ch.h_si, np.ones(2), 0.0)
    np.testing.assert_allclose(imperfect_csi_uplink_terms(ch, blind, beams, small_params),
                               si_interference(beams.w_r, ch.h_si, beams.w_t, small_params.p_ap))


def test_residual_si_halves_at_unit_training_energy():
    # tau P_A sigma_SI^2 = 1 -> error variance sigma_SI^2 / 2
    from fdhap.montecarlo import TrialPlan, draw_batch
    p = SystemParams(n_tx=2, n_rx=4, k_dl=1, k_ul=1, tau=3, p_ap=1 / 3, sigma_si2=1.0)
    plan = TrialPlan(4000, 5, p, PathLossProfile.uniform(p), csi_mode="estimated")
    ch, est = draw_batch(plan, range(plan.n_trials))
    beams = mrc_mrt_beams(ch.g_ap_ul, est.g_ap_dl_hat)
    full = si_interference(beams.w_r, ch.h_si, beams.w_t, p.p_ap)
    resid = imperfect_csi_uplink_terms(ch, est, beams, p)
    assert np.mean(resid) / np.mean(full) == pytest.approx(0.5, rel=0.05)


def test_sum_rate_uses_time_split():
    assert sum_rate(np.array([1.0, 3.0]), 0.5) == pytest.approx(0.5 * (1 + 2))
    assert sum_rate(np.array([1.0]), 0.0) == pytest.approx(1.0)


def test_batched_evaluation_matches_loop(small_params, unit_losses):
    chs = [draw_channels(small_params, unit_losses, RngStream(3, i)) for i in range(4)]
    stacked = ChannelRealization.stack(chs)
    beams = mrc_mrt_beams(stacked.g_ap_ul, stacked.g_ap_dl)
    w_e = mrt_energy_beams(stacked.g_ap_ul)
    rep = evaluate(stacked, beams.with_energy(w_e), harvested_powers(stacked, w_e, small_params), small_params)
    for i, ch in enumerate(chs):
        b = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
        w = mrt_energy_beams(ch.g_ap_ul)
        one = evaluate(ch, b, harvested_powers(ch, w, small_params), small_params)
        np.testing.assert_allclose(rep.uplink[i], one.uplink)
        np.testing.assert_allclose(rep.downlink_rate_sum[i], one.downlink_rate_sum)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), phase=st.floats(0, 2 * np.pi), mag=st.floats(0.1, 10))
def test_uplink_sinr_invariant_to_combiner_scaling(seed, phase, mag):
    p = SystemParams(n_tx=4, n_rx=3, k_dl=2, k_ul=3, tau=6)
    ch = draw_channels(p, PathLossProfile.uniform(p), RngStream(seed))
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    powers = harvested_powers(ch, mrt_energy_beams(ch.g_ap_ul), p)
    scaled = BeamformerSet(beams.w_r * mag * np.exp(1j * phase), beams.w_t)
    np.testing.assert_allclose(uplink_sinr(ch, scaled, powers, p), uplink_sinr(ch, beams, powers, p), rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), extra=st.floats(0.0, 5.0), sensor=st.integers(0, 2))
def test_sinr_properties(seed, extra, sensor):
    p = SystemParams(n_tx=4, n_rx=3, k_dl=2, k_ul=3, tau=6)
    ch = draw_channels(p, PathLossProfile.uniform(p), RngStream(seed))
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    powers = harvested_powers(ch, mrt_energy_beams(ch.g_ap_ul), p)
    up, down = uplink_sinr(ch, beams, powers, p), downlink_sinr(ch, beams, powers, p)
    assert np.all(np.isfinite(up)) and np.all(up >= 0)
    assert np.all(np.isfinite(down)) and np.all(down >= 0)
    more = powers.p_ul.copy()
    more[sensor] += extra
    assert np.all(downlink_sinr(ch, beams, SensorPowers(more, powers.kappa), p) <= down + 1e-12)


def test_single_sensor_no_si_closed_form():
    gen = np.random.default_rng(7)
    p = SystemParams(n_tx=5, n_rx=2, k_dl=1, k_ul=1, tau=6, sigma_n2=0.7)
    g = cplx(gen, 5, 1)
    ch = _realization(cplx(gen, 2, 1), np.zeros((2, 5)), g, [[0.0]], [[0.0]])
    beams = mrc_mrt_beams(ch.g_ap_ul, ch.g_ap_dl)
    pw = SensorPowers(np.array([1.7]), 0.5)
    assert uplink_sinr(ch, beams, pw, p)[0] == pytest.approx(1.7 * np.linalg.norm(g) ** 2 / 0.7)
