import numpy as np
import pytest

from src import guidance_pn
from src.airframe import Airframe, default_thrusters
from src.dynamics import GravityModel, ManeuverSpec
from src.engagement import EngagementConfig, NeverFire, run_episode
from src.errors import ConfigFault, PastIntercept
from src.guidance_pn import GuidanceConfig, PNController, TruthFilter
from src.mathkit import IDENTITY_QUAT
from src.scenario import EngagementGeometry, Scenario
from src.seeker import SensorErrorConfig


def test_zem_zero_on_collision_course():
    a = guidance_pn.zem_accel(np.array([1000.0, 0.0, 0.0]), np.array([-7000.0, 0.0, 0.0]), None, 3.0)
    assert np.allclose(a, 0.0)


def test_zem_lateral_command():
    a = guidance_pn.zem_accel(np.array([7000.0, 0.0, 0.0]), np.array([-7000.0, 70.0, 0.0]), None, 3.0)
    assert np.allclose(a, [0.0, 210.0, 0.0])


def test_apn_adds_target_acceleration():
    a = guidance_pn.zem_accel(np.array([7000.0, 0.0, 0.0]), np.array([-7000.0, 0.0, 0.0]),
                              np.array([0.0, 0.0, 10.0]), 3.0)
    assert np.allclose(a, [0.0, 0.0, 15.0])


def test_zem_past_intercept():
    with pytest.raises(PastIntercept):
        guidance_pn.zem_accel(np.array([100.0, 0.0, 0.0]), np.array([10.0, 0.0, 0.0]), None, 3.0)


def test_pulse_map_thresholds():
    thrusters = default_thrusters()
    cmd = guidance_pn.pulse_map(np.array([0.0, -300.0, 0.0]), IDENTITY_QUAT, 35.0, thrusters)
    assert cmd.bits == (1, 0, 0, 0, 0, 0, 0, 0, 0, 0)
    # threshold is a third of 5000/35 m/s²
    assert guidance_pn.pulse_map(np.array([0.0, 0.0, 47.0]), IDENTITY_QUAT, 35.0, thrusters).bits == (0,) * 10
    assert guidance_pn.pulse_map(np.array([0.0, 0.0, 48.0]), IDENTITY_QUAT, 35.0, thrusters).bits[2] == 1


def test_pulse_map_uses_body_frame():
    half_turn_x = np.array([0.0, 1.0, 0.0, 0.0])
    cmd = guidance_pn.pulse_map(np.array([0.0, -300.0, 0.0]), half_turn_x, 35.0, default_thrusters())
    assert cmd.bits[:4] == (0, 1, 0, 0)


def test_truth_filter():
    f = TruthFilter(0.04)
    assert np.array_equal(f.update(np.ones(3), 0.04), np.ones(3))
    f = TruthFilter(0.04, initial=np.zeros(3))
    assert np.allclose(f.update(np.ones(3), 0.04), 1.0 - np.exp(-1.0))
    assert np.array_equal(TruthFilter(0.0, initial=np.zeros(3)).update(np.ones(3), 0.04), np.ones(3))


def test_guidance_config_validation():
    with pytest.raises(ConfigFault):
        GuidanceConfig(nav_constant=0.0)
    with pytest.raises(ConfigFault):
        GuidanceConfig(law="augmented")
    with pytest.raises(ConfigFault):
        GuidanceConfig(pulse_threshold=1.5)


def _heading_error_scenario():
    v_m = np.array([3000.0, 30.0, 0.0])
    return Scenario(
        r_m=np.zeros(3), v_m=v_m, q=IDENTITY_QUAT.copy(),
        r_t=np.array([20e3, 0.0, 0.0]), v_t=np.array([-4000.0, 0.0, 0.0]),
        maneuver=ManeuverSpec(), sensor=SensorErrorConfig(tau_theta=0.020), tau_u=0.0,
        com_offset=np.zeros(3),
        geometry=EngagementGeometry(0.0, 0.0, 20e3 / 7000.0, 7000.0, np.array([0.0, 0.0, 1.0])),
        v_collision=np.array([3000.0, 0.0, 0.0]), heading_error=0.01, attitude_error=0.0,
    )


def test_pn_removes_heading_error():
    cfg = EngagementConfig(six_dof=False)
    gravity = GravityModel(enabled=False)
    airframe = Airframe()
    drift = run_episode(_heading_error_scenario(), NeverFire(), airframe, gravity, cfg, np.random.default_rng(0))
    pn = PNController(GuidanceConfig(), airframe.thrusters, tau=0.020)
    guided = run_episode(_heading_error_scenario(), pn, airframe, gravity, cfg, np.random.default_rng(0))
    assert drift.miss > 50.0
    assert guided.miss < 5.0
    assert guided.fuel_used > 0.0
    assert guided.cause == "intercept-window-exit"


def test_filtered_truth_splits_channels():
    f = TruthFilter(0.04)
    r, v, a = guidance_pn.filtered_truth(np.ones(3), 2.0 * np.ones(3), 3.0 * np.ones(3), 0.04, 0.04, f)
    assert np.array_equal(r, np.ones(3)) and np.array_equal(v, 2.0 * np.ones(3))
    assert np.array_equal(a, 3.0 * np.ones(3))
    r, _, _ = guidance_pn.filtered_truth(np.zeros(3), np.zeros(3), np.zeros(3), 0.04, 0.04, f)
    assert np.allclose(r, np.exp(-1.0))
