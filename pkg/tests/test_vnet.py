import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scenario, x_at_range
from qvnet.errors import ConfigurationError, DomainError, TypeMismatchError
from qvnet.vnet import (
    BSType,
    VNetConfig,
    generate_scenario,
    link_rate,
    load_config,
    load_scenario,
    rate_from_sinr,
    read_wr_csv,
    save_config,
    save_scenario,
    sinr_matrix,
    sinr_rf,
    sinr_thz,
    weighted_rate_matrix,
)


def test_generate_is_deterministic():
    a = generate_scenario(VNetConfig(), seed=7)
    b = generate_scenario(VNetConfig(), seed=7)
    np.testing.assert_array_equal(a.av_positions, b.av_positions)
    np.testing.assert_array_equal(a.fading_gains, b.fading_gains)
    assert a.bs_types == b.bs_types


def test_generate_places_avs_on_the_highway():
    cfg = VNetConfig(n_avs=4, n_rbs=2, n_tbs=2)
    s = generate_scenario(cfg, seed=1)
    assert s.av_positions.shape == (4, 2)
    assert np.all((s.av_positions[:, 0] >= 0) & (s.av_positions[:, 0] <= 1000))
    assert np.all((s.av_positions[:, 1] >= 0) & (s.av_positions[:, 1] <= cfg.road_width))
    assert s.bs_types == (BSType.RF, BSType.THZ, BSType.RF, BSType.THZ)
    np.testing.assert_allclose(s.bs_positions[:, 0], [125, 375, 625, 875])


def test_seed_changes_positions():
    a = generate_scenario(VNetConfig(), seed=1)
    b = generate_scenario(VNetConfig(), seed=2)
    assert not np.array_equal(a.av_positions, b.av_positions)


def test_explicit_placement_and_prior_modes():
    cfg = VNetConfig(n_rbs=1, n_tbs=1, n_avs=3)
    s = generate_scenario(cfg, 3, placement=[(10, 0, "THz"), (500, 0, "RF")], prior="strongest")
    assert s.bs_types == (BSType.THZ, BSType.RF)
    np.testing.assert_array_equal(s.prior_association, np.argmax(sinr_matrix(s), axis=1))
    r = generate_scenario(cfg, 3, prior="random")
    assert r.prior_association.shape == (3,)
    with pytest.raises(ConfigurationError):
        generate_scenario(cfg, 3, prior="sideways")


@pytest.mark.parametrize("field, value", [
    ("p_tx_rf", 0.0), ("w_thz", -1.0), ("q_align", 1.5), ("mu_thz", 1.0),
    ("rho", 1.5), ("cap_rf", 0), ("n_avs", 0),
])
def test_invalid_config_names_field(field, value):
    with pytest.raises(ConfigurationError) as err:
        VNetConfig(**{field: value})
    assert err.value.field == field


def test_rf_handoff_penalty_cannot_exceed_thz():
    with pytest.raises(ConfigurationError):
        VNetConfig(mu_rf=0.5, mu_thz=0.4)


def test_sinr_rf_single_bs_hand_value():
    s = make_scenario([(0, 0, "RF")], [(x_at_range(100), 0)])
    # 1 W * (c / (4 pi 2.1 GHz))^2 / 100^2.5 / 1e-10 W, evaluated separately
    assert sinr_rf(s, 0, 0) == pytest.approx(12.90574525429354, rel=1e-12)


def test_sinr_rf_linear_in_power():
    avs = [(x_at_range(100), 0)]
    low = make_scenario([(0, 0, "RF")], avs)
    high = make_scenario([(0, 0, "RF")], avs, p_tx_rf=2.0)
    assert sinr_rf(high, 0, 0) == pytest.approx(2 * sinr_rf(low, 0, 0), rel=1e-14)


def test_sinr_rf_colocated_interferer():
    s = make_scenario([(0, 0, "RF"), (0, 0, "RF")], [(x_at_range(20), 0)])
    single = make_scenario([(0, 0, "RF")], [(x_at_range(20), 0)])
    signal_over_noise = sinr_rf(single, 0, 0)
    expected = signal_over_noise / (1 + signal_over_noise)
    assert sinr_rf(s, 0, 0) == pytest.approx(expected, rel=1e-12)
    assert sinr_rf(s, 0, 0) < 1


def test_sinr_thz_absorption_factor():
    r0 = 30.0
    avs = [(x_at_range(r0), 0)]
    clear = make_scenario([(0, 0, "THz")], avs, k_a=0.0)
    humid = make_scenario([(0, 0, "THz")], avs, k_a=0.05)
    assert sinr_thz(clear, 0, 0) / sinr_thz(humid, 0, 0) == pytest.approx(math.exp(0.05 * r0), rel=1e-12)


def test_sinr_thz_default_params_at_10m():
    s = make_scenario([(0, 0, "THz")], [(x_at_range(10), 0)])
    # 10^5 gain * (c / (4 pi 1 THz))^2 * e^-0.5 / 10^2 / 1e-10 W, evaluated separately
    assert sinr_thz(s, 0, 0) == pytest.approx(3452.0290107779024, rel=1e-12)


def test_thz_interference_vanishes_without_alignment():
    bs = [(0, 0, "THz"), (40, 0, "THz")]
    avs = [(x_at_range(10), 0)]
    alone = make_scenario([(0, 0, "THz")], avs)
    aligned = make_scenario(bs, avs, q_align=0.5)
    blind = make_scenario(bs, avs, q_align=0.0)
    assert sinr_thz(blind, 0, 0) == pytest.approx(sinr_thz(alone, 0, 0), rel=1e-14)
    assert sinr_thz(aligned, 0, 0) < sinr_thz(alone, 0, 0)


def test_band_type_mismatch():
    s = make_scenario([(0, 0, "RF"), (50, 0, "THz")], [(10, 0)])
    with pytest.raises(TypeMismatchError):
        sinr_rf(s, 0, 1)
    with pytest.raises(TypeMismatchError):
        sinr_thz(s, 0, 0)
    with pytest.raises(IndexError):
        link_rate(s, 2, 0)


def test_rate_examples():
    assert rate_from_sinr(1.0, 1.0, gamma_th_db=-1.0) == 1.0
    assert rate_from_sinr(3.0, 10.0, gamma_th_db=-5.0) == 20.0
    assert rate_from_sinr(0.1, 10.0, gamma_th_db=-5.0) == 0.0


def test_link_rate_uses_band_bandwidth():
    s = make_scenario([(0, 0, "RF"), (0, 0, "THz")], [(x_at_range(10), 0)])
    assert link_rate(s, 0, 0) == pytest.approx(s.config.w_rf * math.log2(1 + sinr_rf(s, 0, 0)))
    assert link_rate(s, 0, 1) == pytest.approx(s.config.w_thz * math.log2(1 + sinr_thz(s, 0, 1)))


def test_link_rate_threshold_gate():
    s = make_scenario([(0, 0, "THz")], [(900, 0)])
    assert sinr_thz(s, 0, 0) < 10 ** (-0.5)
    assert link_rate(s, 0, 0) == 0.0


def _two_bs():
    return [(0, 0, "RF"), (30, 0, "THz")]


def test_wr_without_prior_equals_rate():
    s = make_scenario(_two_bs(), [(x_at_range(10), 0)])
    wr = weighted_rate_matrix(s)
    assert wr.wr[0, 0] == pytest.approx(link_rate(s, 0, 0), rel=1e-14)
    assert wr.wr[0, 1] == pytest.approx(link_rate(s, 0, 1), rel=1e-14)


def test_wr_staying_on_prior_bs_has_no_penalty():
    s = make_scenario(_two_bs(), [(x_at_range(10), 0)], prior=[1])
    wr = weighted_rate_matrix(s, load_estimate=[3, 3])
    # min(Q=2, n=3) = 2
    assert wr.wr[0, 1] == pytest.approx(link_rate(s, 0, 1) / 2, rel=1e-14)
    assert wr.wr[0, 0] == pytest.approx(link_rate(s, 0, 0) / 2 * (1 - 0.2), rel=1e-14)


def test_wr_thz_handoff_penalty():
    s = make_scenario(_two_bs(), [(x_at_range(10), 0)], prior=[0])
    wr = weighted_rate_matrix(s)
    assert wr.wr[0, 1] == pytest.approx(0.6 * link_rate(s, 0, 1), rel=1e-14)


def test_wr_zero_load_rejected():
    s = make_scenario(_two_bs(), [(10, 0)])
    with pytest.raises(DomainError):
        weighted_rate_matrix(s, load_estimate=[1, 0])


def test_wr_normalization_divides_by_bandwidth():
    s = generate_scenario(VNetConfig(), seed=4)
    raw = weighted_rate_matrix(s)
    norm = weighted_rate_matrix(s, normalize=True)
    bw = np.array([s.bandwidth(j) for j in range(s.n_bs)])
    np.testing.assert_allclose(norm.wr * bw, raw.wr, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    band=st.sampled_from(["RF", "THz"]),
    ranges=st.lists(st.floats(4.0, 900.0), min_size=2, max_size=12),
)
def test_sinr_nonincreasing_in_distance(band, ranges):
    rs = sorted(ranges)
    s = make_scenario([(0, 0, band)], [(x_at_range(r), 0) for r in rs])
    values = sinr_matrix(s)[:, 0]
    assert np.all(np.diff(values) <= 1e-12 * values[:-1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), prior=st.sampled_from(["none", "random", "strongest"]),
       loads=st.lists(st.integers(1, 4), min_size=4, max_size=4))
def test_wr_never_exceeds_rate(seed, prior, loads):
    s = generate_scenario(VNetConfig(), seed, prior=prior)
    wr = weighted_rate_matrix(s, load_estimate=loads).wr
    rates = np.array([[link_rate(s, i, j) for j in range(s.n_bs)] for i in range(s.n_avs)])
    assert np.all(wr <= rates * (1 + 1e-12))
    mu_zero = np.ones_like(wr, dtype=bool) if s.prior_association is None else \
        (np.arange(s.n_bs)[None, :] == s.prior_association[:, None])
    unit = np.minimum(np.array(s.capacities()), loads) == 1
    equal_expected = mu_zero & unit[None, :] & (rates > 0)
    np.testing.assert_allclose(wr[equal_expected], rates[equal_expected], rtol=1e-14)
    strict = ~(mu_zero & unit[None, :]) & (rates > 0)
    assert np.all(wr[strict] < rates[strict])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-30.0, 30.0))
def test_noise_scaling_keeps_best_bs_without_interference(seed, shift):
    cfg = VNetConfig(n_rbs=1, n_tbs=3, q_align=0.0)
    s = generate_scenario(cfg, seed)
    loud = generate_scenario(cfg.replace(sigma2_dbm=-70 + shift, n_molecular_dbm=-70 + shift), seed)
    np.testing.assert_array_equal(np.argmax(sinr_matrix(s), 1), np.argmax(sinr_matrix(loud), 1))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n_rbs=st.integers(0, 3), n_tbs=st.integers(0, 3),
       n_avs=st.integers(1, 5), normalize=st.booleans())
def test_outputs_finite_and_nonnegative(seed, n_rbs, n_tbs, n_avs, normalize):
    if n_rbs + n_tbs == 0:
        n_rbs = 1
    s = generate_scenario(VNetConfig(n_rbs=n_rbs, n_tbs=n_tbs, n_avs=n_avs), seed, prior="random")
    sinr = sinr_matrix(s)
    wr = weighted_rate_matrix(s, normalize=normalize)
    assert np.all(np.isfinite(sinr)) and np.all(sinr >= 0)
    assert np.all(np.isfinite(wr.wr)) and np.all(wr.wr >= 0)
    assert np.all(wr.wr[~wr.feasible_mask] == 0)


def test_config_and_scenario_round_trip(tmp_path):
    cfg = VNetConfig(n_avs=3, k_a=0.07)
    save_config(cfg, tmp_path / "vnet.toml")
    assert load_config(tmp_path / "vnet.toml") == cfg
    assert "k_a = 0.07" in (tmp_path / "vnet.toml").read_text()

    s = generate_scenario(cfg, 11, prior="random")
    save_scenario(s, tmp_path / "scenario.toml")
    back = load_scenario(tmp_path / "scenario.toml")
    np.testing.assert_array_equal(back.av_positions, s.av_positions)
    np.testing.assert_array_equal(back.fading_gains, s.fading_gains)
    np.testing.assert_array_equal(back.prior_association, s.prior_association)
    np.testing.assert_array_equal(weighted_rate_matrix(back).wr, weighted_rate_matrix(s).wr)


def test_wr_csv_export(tmp_path):
    s = generate_scenario(VNetConfig(), 5)
    wr = weighted_rate_matrix(s, normalize=True)
    wr.to_csv(tmp_path / "wr.csv")
    lines = (tmp_path / "wr.csv").read_text().splitlines()
    assert lines[0] == "av,bs,wr,feasible"
    assert len(lines) == 1 + 16
    back = read_wr_csv(tmp_path / "wr.csv")
    np.testing.assert_array_equal(back.wr, wr.wr)
    np.testing.assert_array_equal(back.feasible_mask, wr.feasible_mask)
