import numpy as np
import pytest

from src import dynamics
from src.airframe import ActionCommand, Airframe, nominal_inertia
from src.dynamics import GravityModel, ManeuverSpec, Propagator, SimClock, make_state, target_accel
from src.errors import ConfigFault, InvalidArgument
from src.mathkit import IDENTITY_QUAT, dcm_from_quat

NO_GRAVITY = GravityModel(enabled=False)


def _state(airframe, omega=(0.0, 0.0, 0.0), v_m=(3000.0, 0.0, 0.0)):
    mass = airframe.initial_mass_state(np.zeros(3))
    return make_state(
        r_m=np.zeros(3), v_m=np.array(v_m), q=IDENTITY_QUAT.copy(), omega=np.array(omega),
        r_t=np.array([50e3, 0.0, 0.0]), v_t=np.array([-4000.0, 0.0, 0.0]), mass=mass,
    )


def test_state_layout():
    assert dynamics.STATE_SIZE == 42
    assert dynamics.TVEL.stop == dynamics.STATE_SIZE
    state = _state(Airframe())
    assert state.range == pytest.approx(50e3)
    assert np.allclose(state.v_tm, [-7000.0, 0.0, 0.0])
    assert state.x[dynamics.MASS] == 35.0


def test_gravity_over_pole():
    g = GravityModel()
    a = g.accel(np.zeros(3))
    expected = dynamics.MU_EARTH / (dynamics.R_EARTH + 50e3) ** 2
    assert np.allclose(a, [0.0, 0.0, -expected])
    assert 9.6 < np.linalg.norm(a) < 9.7
    assert not NO_GRAVITY.accel(np.zeros(3)).any()


def test_gravity_over_equator_points_down_x():
    g = GravityModel(colatitude=np.pi / 2, longitude=0.0, altitude=1000e3)
    a = g.accel(np.zeros(3))
    assert a[0] < 0.0
    assert abs(a[1]) < 1e-9 and abs(a[2]) < 1e-6


def test_bang_bang_signs():
    spec = ManeuverSpec(kind="bang-bang", accel=10.0, start=1.0, duration=2.0, lateral=np.array([0.0, 1.0, 0.0]))
    v = np.array([1000.0, 0.0, 0.0])
    assert not target_accel(spec, 0.5, v).any()
    assert np.allclose(target_accel(spec, 1.5, v), [0.0, 10.0, 0.0])
    assert np.allclose(target_accel(spec, 3.5, v), [0.0, -10.0, 0.0])
    assert not target_accel(spec, 5.5, v).any()


def test_vertical_s_switches_every_half_period():
    spec = ManeuverSpec(kind="vertical-S", accel=5.0, period=2.0, offset=1.0, lateral=np.array([0.0, 0.0, 1.0]))
    v = np.array([1000.0, 0.0, 0.0])
    assert not target_accel(spec, 0.5, v).any()
    assert np.allclose(target_accel(spec, 1.5, v), [0.0, 0.0, 5.0])
    assert np.allclose(target_accel(spec, 2.5, v), [0.0, 0.0, -5.0])
    assert np.allclose(target_accel(spec, 3.5, v), [0.0, 0.0, 5.0])


def test_maneuvers_stay_orthogonal_to_velocity():
    v = np.array([-3000.0, 1000.0, 500.0])
    lateral = np.array([0.2, 0.9, -0.1])
    for kind in ("bang-bang", "vertical-S", "barrel-roll"):
        spec = ManeuverSpec(kind=kind, accel=20.0, start=0.0, duration=3.0, period=2.0, offset=0.0, lateral=lateral)
        for t in np.linspace(0.0, 2.9, 13):
            a = target_accel(spec, t, v)
            assert abs(a @ v) < 1e-8 * np.linalg.norm(v)
            assert np.linalg.norm(a) == pytest.approx(20.0)


def test_maneuver_rejects_excess_accel():
    with pytest.raises(ConfigFault):
        ManeuverSpec(kind="bang-bang", accel=6.0 * 9.81)
    with pytest.raises(ConfigFault):
        ManeuverSpec(kind="zigzag")


def test_clock_substeps():
    clock = SimClock()
    assert clock.substep(5000.0) == 0.020
    assert clock.substep(1000.0) == clock.fine_dt
    with pytest.raises(ConfigFault):
        SimClock(guidance_dt=0.030)


def test_torque_free_angular_momentum_conserved():
    airframe = Airframe(inertia_scale=np.array([1.0, 0.7, 1.3]))
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec())
    state = _state(airframe, omega=(0.3, 0.1, -0.2))

    def momentum(s):
        return dcm_from_quat(s.q).T @ (s.mass.inertia @ s.omega)

    h0 = momentum(state)
    for _ in range(500):
        state = prop.step(state, 0.02)
    assert state.t == pytest.approx(10.0)
    assert np.max(np.abs(momentum(state) - h0)) < 1e-6
    assert abs(np.linalg.norm(state.q) - 1.0) < 1e-12


def test_divert_burn_consumes_fuel():
    airframe = Airframe()
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec())
    prop.set_command(ActionCommand.from_groups(0))
    state = _state(airframe)
    for _ in range(5):
        state = prop.step(state, 0.02)
    burned = 0.1 * 5000.0 / (airframe.isp * 9.81)
    assert state.mass.mass == pytest.approx(35.0 - burned, rel=1e-9)
    assert state.fuel_used == pytest.approx(burned, rel=1e-9)
    assert state.v_m[1] < -10.0
    assert state.v_m[0] == pytest.approx(3000.0)


def test_ignition_lag_delays_force():
    airframe = Airframe()
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec(), tau_u=0.020)
    prop.set_command(ActionCommand.from_groups(0))
    state = _state(airframe)
    for _ in range(10):
        state = prop.step(state, 0.002)
    # one time constant: 63.21% of the commanded force
    assert state.x[dynamics.FORCE][1] == pytest.approx(-5000.0 * (1.0 - np.exp(-1.0)), rel=1e-3)


def test_fuel_exhaustion_clamps_at_dry_mass():
    airframe = Airframe(fuel_capacity=0.01)
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec())
    prop.set_command(ActionCommand.from_groups(0, 1, 2, 3))
    state = prop.step(_state(airframe), 0.02)
    assert state.fuel_exhausted
    assert state.mass.mass == airframe.dry_mass
    v = state.v_m.copy()
    state = prop.step(state, 0.02)
    assert state.mass.mass == airframe.dry_mass
    assert np.allclose(state.v_m, v)


def test_three_dof_ignores_attitude_thrusters():
    airframe = Airframe()
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec(), six_dof=False)
    prop.set_command(ActionCommand.from_groups(0, 4, 6))
    assert prop.command.bits == ActionCommand.from_groups(0).bits
    state = _state(airframe, omega=(0.0, 0.0, 0.0))
    for _ in range(3):
        state = prop.step(state, 0.02)
    assert np.array_equal(state.q, IDENTITY_QUAT)
    assert not state.omega.any()


def test_roll_pair_spins_up_about_x():
    airframe = Airframe()
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec())
    prop.set_command(ActionCommand.from_groups(5))
    state = prop.step(_state(airframe), 0.02)
    jxx = nominal_inertia(35.0, 0.25, 1.0)[0, 0]
    assert state.omega[0] == pytest.approx(62.5 / jxx * 0.02, rel=1e-2)
    assert abs(state.omega[1]) < 1e-9 and abs(state.omega[2]) < 1e-9


def test_negative_lag_rejected():
    with pytest.raises(InvalidArgument):
        Propagator(Airframe(), NO_GRAVITY, ManeuverSpec(), tau_u=-1.0)


def test_gravity_accel_points_to_earth_center():
    model = GravityModel(colatitude=0.5, longitude=0.2)
    g = dynamics.gravity_accel(np.zeros(3), model)
    r = np.linalg.norm(model.anchor)
    assert np.linalg.norm(g) == pytest.approx(model.mu / r ** 2)
    assert np.allclose(g / np.linalg.norm(g), -model.anchor / r)
    assert np.allclose(model.accel(np.array([10.0, 0.0, 0.0])),
                       dynamics.gravity_accel(np.array([10.0, 0.0, 0.0]), model))


def test_missile_derivatives_force_and_euler_terms():
    airframe = Airframe()
    state = _state(airframe, omega=(0.0, 1.0, 1.0))
    commanded = (np.array([0.0, 100.0, 0.0]), np.zeros(3), np.zeros(16))
    dx = dynamics.missile_derivatives(state.x, state.mass, NO_GRAVITY, airframe.isp, commanded)
    assert np.allclose(dx[dynamics.POS], state.v_m)
    assert np.allclose(dx[dynamics.VEL], [0.0, 100.0 / 35.0, 0.0])
    assert dx[dynamics.MASS] == 0.0
    w = state.omega
    j = state.mass.inertia
    expected = np.linalg.solve(j, -np.cross(w, j @ w) - state.mass.inertia_rate @ w)
    assert np.allclose(dx[dynamics.OMEGA], expected, atol=1e-12)
    flat = dynamics.missile_derivatives(state.x, state.mass, NO_GRAVITY, airframe.isp, commanded, six_dof=False)
    assert not flat[dynamics.OMEGA].any() and not flat[dynamics.QUAT].any()


@pytest.mark.parametrize("com_offset, spins", [((0.0, 0.0, 0.0), False), ((0.025, 0.0, 0.0), True)])
def test_divert_through_center_of_mass_does_not_rotate(com_offset, spins):
    airframe = Airframe()
    prop = Propagator(airframe, NO_GRAVITY, ManeuverSpec(), tau_u=0.020)
    prop.set_command(ActionCommand.from_groups(0, 2))
    mass = airframe.initial_mass_state(np.array(com_offset))
    state = make_state(np.zeros(3), np.array([3000.0, 0.0, 0.0]), IDENTITY_QUAT.copy(), np.zeros(3),
                       np.array([50e3, 0.0, 0.0]), np.array([-4000.0, 0.0, 0.0]), mass)
    for _ in range(50):
        state = prop.step(state, 0.02)
    assert state.fuel_used > 5.0
    if spins:
        assert np.abs(state.omega).max() > 1e-3
    else:
        assert not state.omega.any()
        assert np.array_equal(state.q, IDENTITY_QUAT)
