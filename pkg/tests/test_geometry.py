import math

import pytest

from risdet.geometry import (
    C_LIGHT,
    BinLayout,
    InfeasibleGeometry,
    PathDelays,
    ScenarioGeometry,
    WindowTooSmall,
    bin_layout,
    check_feasibility,
    compute_delays,
    path_distances,
    ris_angles,
    scenario_from_config,
)

CASE_STUDY = ScenarioGeometry(
    radar_pos=(-30_000.0, 200.0),
    ris_pos=(0.0, 0.0),
    target_pos=(1_000.0, 500.0),
    range_resolution=20.0,
    carrier_freq=3.0e9,
)


def test_path_distances_345_triangle():
    geom = ScenarioGeometry((0.0, 0.0), (3.0, 0.0), (3.0, 4.0), 1.0, 3e9)
    assert path_distances(geom) == pytest.approx((5.0, 3.0, 4.0))


def test_case_study_distances():
    d_rt, d_rs, d_st = path_distances(CASE_STUDY)
    # Independent scalar arithmetic on the coordinates.
    assert d_rt == pytest.approx(math.hypot(31_000.0, 300.0), rel=1e-12)
    assert d_rs == pytest.approx(math.hypot(30_000.0, 200.0), rel=1e-12)
    assert d_st == pytest.approx(math.hypot(1_000.0, 500.0), rel=1e-12)
    assert d_rt == pytest.approx(31e3, rel=2e-3)
    assert d_rs == pytest.approx(30e3, rel=2e-3)
    assert d_st == pytest.approx(1.118e3, rel=2e-3)


def test_coincident_positions_rejected():
    with pytest.raises(ValueError):
        ScenarioGeometry((0.0, 0.0), (3.0, 0.0), (0.0, 0.0), 1.0, 3e9)


def test_nonpositive_resolution_rejected():
    with pytest.raises(ValueError):
        ScenarioGeometry((0.0, 0.0), (3.0, 0.0), (3.0, 4.0), 0.0, 3e9)


def test_wavelength():
    assert CASE_STUDY.wavelength == pytest.approx(C_LIGHT / 3e9, rel=1e-15)


def test_delays_reference_distances():
    delays = compute_delays(19_000.0, 20_000.0, 1_000.0)
    assert delays.tau1 * 1e6 == pytest.approx(126.0, abs=1.0)
    assert delays.tau2 * 1e6 == pytest.approx(133.0, abs=1.0)
    assert delays.tau3 * 1e6 == pytest.approx(140.0, abs=1.0)


def test_delays_equilateral_case():
    d = 5_000.0
    delays = compute_delays(d, d, d)
    assert delays.tau1 == pytest.approx(2.0 * d / C_LIGHT, rel=1e-15)
    assert delays.tau2 == pytest.approx(3.0 * d / C_LIGHT, rel=1e-15)
    assert delays.tau3 == pytest.approx(4.0 * d / C_LIGHT, rel=1e-15)
    assert delays.tau1 < delays.tau2 < delays.tau3


def test_case_study_delays_hand_oracle():
    d_rt, d_rs, d_st = path_distances(CASE_STUDY)
    delays = compute_delays(d_rt, d_rs, d_st)
    assert delays.tau1 == pytest.approx(2.0 * d_rt / 299792458.0, rel=1e-12)
    assert delays.tau2 == pytest.approx(
        (d_rt + d_st + d_rs) / 299792458.0, rel=1e-12)
    assert delays.tau3 == pytest.approx(
        2.0 * (d_rs + d_st) / 299792458.0, rel=1e-12)


def test_delays_reject_nonpositive_distance():
    with pytest.raises(ValueError):
        compute_delays(0.0, 1.0, 1.0)


def test_feasibility_reference_true():
    assert check_feasibility(19_000.0, 20_000.0, 1_000.0, 50.0)


def test_feasibility_boundary_inclusive():
    assert check_feasibility(100.0, 60.0, 60.0, 10.0)


def test_feasibility_colinear_grazing_false():
    assert not check_feasibility(100.0, 60.0, 40.0, 10.0)


def test_bin_layout_case_study():
    delays = compute_delays(*path_distances(CASE_STUDY))
    layout = bin_layout(delays, 20.0, 6)
    assert (layout.n, layout.m) == (3, 6)
    assert layout.window_size == 6


def test_bin_layout_floor_convention():
    # One-way excess paths of 58.6 m and 117.25 m with 20 m bins.
    tau1 = 2.0 * 1_000.0 / C_LIGHT
    delays = PathDelays(
        tau1=tau1,
        tau2=tau1 + 2.0 * 58.6 / C_LIGHT,
        tau3=tau1 + 2.0 * 117.25 / C_LIGHT,
    )
    layout = bin_layout(delays, 20.0, 6)
    assert (layout.n, layout.m) == (3, 6)


def test_bin_layout_infeasible():
    tau1 = 2.0 * 1_000.0 / C_LIGHT
    with pytest.raises(InfeasibleGeometry):
        bin_layout(PathDelays(tau1, tau1, tau1 + 1e-6), 20.0, 6)


def test_bin_layout_window_too_small():
    delays = compute_delays(*path_distances(CASE_STUDY))
    with pytest.raises(WindowTooSmall):
        bin_layout(delays, 20.0, 5)


def test_bin_layout_validation():
    with pytest.raises(ValueError):
        BinLayout(n=3, m=3, window_size=6)
    with pytest.raises(ValueError):
        BinLayout(n=1, m=4, window_size=6)


def test_ris_angles_case_study():
    theta_si, theta_so = ris_angles(CASE_STUDY)
    assert theta_si == pytest.approx(89.62, abs=0.05)
    assert theta_so == pytest.approx(26.5, abs=0.1)


def test_ris_angles_radar_on_normal():
    geom = ScenarioGeometry((0.0, 5_000.0), (0.0, 0.0), (1_000.0, 500.0),
                            20.0, 3e9)
    theta_si, _ = ris_angles(geom)
    assert theta_si == pytest.approx(0.0, abs=1e-12)


def test_ris_angles_45_degree_target():
    geom = ScenarioGeometry((-30_000.0, 200.0), (0.0, 0.0),
                            (1_000.0, 1_000.0), 20.0, 3e9)
    _, theta_so = ris_angles(geom)
    assert theta_so == pytest.approx(45.0, abs=1e-9)


def test_scenario_from_config():
    cfg = {
        "radar_pos": [-30_000, 200],
        "ris_pos": [0, 0],
        "target_pos": [1_000, 500],
        "delta_r": 20,
        "fc": 3e9,
    }
    assert scenario_from_config(cfg) == CASE_STUDY


def test_scenario_from_config_missing_key():
    with pytest.raises(ValueError):
        scenario_from_config({"radar_pos": [0, 0]})
