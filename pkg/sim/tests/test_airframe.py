import numpy as np
import pytest
import yaml

from src import airframe
from src.airframe import ActionCommand, Airframe
from src.errors import ConfigFault, InvalidArgument


def test_nominal_inertia_examples():
    j = airframe.nominal_inertia(50.0, 0.25, 1.0)
    assert np.allclose(np.diag(j), [1.5625, 4.947916666666667, 4.947916666666667])
    assert np.allclose(airframe.nominal_inertia(0.0, 0.25, 1.0), 0.0)
    assert np.allclose(airframe.nominal_inertia(25.0, 0.25, 1.0), 0.5 * j)


def test_com_fuel_drift():
    offset = np.array([0.025, 0.0125, 0.0125])
    assert np.allclose(airframe.com_fuel_drift(offset, 0.0, 25.0), 0.0)
    assert np.allclose(airframe.com_fuel_drift(offset, 12.5, 25.0), [0.0125, 0.00625, 0.00625])
    assert np.allclose(airframe.com_fuel_drift(offset, 25.0, 25.0), offset)
    with pytest.raises(InvalidArgument):
        airframe.com_fuel_drift(offset, 1.0, 0.0)


def test_com_slosh_bounds():
    rng = np.random.default_rng(1)
    assert np.allclose(airframe.com_slosh(rng, 0.0), 0.0)
    for _ in range(200):
        c = airframe.com_slosh(rng, 0.025)
        assert np.all(np.abs(c) <= np.array([0.0125, 0.00625, 0.00625]))
    a = airframe.com_slosh(np.random.default_rng(9), 0.025)
    b = airframe.com_slosh(np.random.default_rng(9), 0.025)
    assert np.array_equal(a, b)


def test_default_table_groups():
    thrusters = airframe.default_thrusters()
    assert len(thrusters) == 16
    assert [t.group for t in thrusters] == [0, 1, 2, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9]
    assert [t.max_thrust for t in thrusters[:4]] == [5000.0] * 4
    assert all(t.max_thrust == 125.0 for t in thrusters[4:])


def test_divert_force_through_com():
    force, torque, mags = airframe.command_force_torque(
        ActionCommand.from_groups(0), np.zeros(3), airframe.default_thrusters())
    assert np.allclose(force, [0.0, -5000.0, 0.0])
    assert np.allclose(torque, 0.0)
    assert mags[0] == 5000.0 and mags[1:].sum() == 0.0


@pytest.mark.parametrize("group, expected", [
    (4, (-62.5, 0.0, 0.0)),
    (5, (62.5, 0.0, 0.0)),
    (6, (0.0, 125.0, 0.0)),
    (7, (0.0, -125.0, 0.0)),
    (8, (0.0, 0.0, -125.0)),
    (9, (0.0, 0.0, 125.0)),
])
def test_attitude_pairs_are_pure_couples(group, expected):
    thrusters = airframe.default_thrusters()
    for com in (np.zeros(3), np.array([0.02, -0.01, 0.005])):
        force, torque, _ = airframe.command_force_torque(ActionCommand.from_groups(group), com, thrusters)
        assert np.allclose(force, 0.0, atol=1e-12)
        assert np.allclose(torque, expected, atol=1e-9)


def test_no_thrusters_active():
    force, torque, mags = airframe.command_force_torque(ActionCommand.none(), np.zeros(3),
                                                        airframe.default_thrusters())
    assert not force.any() and not torque.any() and not mags.any()


def test_torque_cancellation_at_five_percent_offset():
    thrusters = airframe.default_thrusters()
    com = np.array([0.025, 0.0125, 0.0125])
    _, divert_torque, _ = airframe.command_force_torque(ActionCommand.from_groups(0), com, thrusters)
    assert np.allclose(divert_torque, [-62.5, 0.0, 125.0], atol=1e-9)
    _, total, _ = airframe.command_force_torque(ActionCommand.from_groups(0, 5, 8), com, thrusters)
    assert np.max(np.abs(total)) < 1e-9


def test_actuator_lag_derivative():
    f = np.array([1.0, 2.0, 3.0])
    df, dl = airframe.actuator_lag_derivative(f, f, f, f, 0.02)
    assert not df.any() and not dl.any()
    with pytest.raises(InvalidArgument):
        airframe.actuator_lag_derivative(f, f, f, f, 0.0)


def test_mass_flow_examples():
    assert airframe.mass_flow(np.zeros(16), 250.0) == 0.0
    assert airframe.mass_flow(np.array([5000.0]), 250.0) == pytest.approx(-2.03874, abs=1e-5)
    mags = np.array([5000.0] * 4 + [125.0] * 12)
    assert airframe.mass_flow(mags, 250.0) == pytest.approx(-8.766, abs=1e-3)


def test_action_command_validation():
    with pytest.raises(InvalidArgument):
        ActionCommand((0, 1, 2, 0, 0, 0, 0, 0, 0, 0))
    with pytest.raises(InvalidArgument):
        ActionCommand((0,) * 9)
    cmd = ActionCommand.from_groups(1, 4, 9)
    assert cmd.acs_count == 2
    assert cmd.divert_only().bits == (0, 1, 0, 0, 0, 0, 0, 0, 0, 0)
    assert cmd.expand(airframe.default_thrusters()).sum() == 5


def test_airframe_mass_properties():
    af = Airframe()
    state = af.initial_mass_state(np.array([0.025, 0.0125, 0.0125]))
    assert state.mass == 35.0
    assert np.allclose(state.com, 0.0)
    assert np.allclose(state.inertia, airframe.nominal_inertia(35.0, 0.25, 1.0))
    later = af.refresh(state, 22.5, 0.5)
    assert later.fuel_used == pytest.approx(12.5)
    assert np.allclose(later.com, [0.0125, 0.00625, 0.00625])
    assert np.all(np.diag(later.inertia_rate) < 0.0)


def test_airframe_thrust_scale():
    af = Airframe().with_thrust_scale(0, 0.8)
    assert af.thrusters[0].max_thrust == pytest.approx(4000.0)
    assert Airframe().thrusters[0].max_thrust == 5000.0


def test_airframe_rejects_bad_values():
    with pytest.raises(ConfigFault):
        Airframe(dry_mass=0.0)
    with pytest.raises(ConfigFault):
        Airframe(thrusters=airframe.default_thrusters()[:10])


def test_load_thruster_table(tmp_path):
    rows = [{"direction": t.direction.tolist(), "location": t.location.tolist(),
             "max_thrust": t.max_thrust, "group": t.group} for t in airframe.default_thrusters()]
    path = tmp_path / "thrusters.yaml"
    path.write_text(yaml.safe_dump({"thrusters": rows}), encoding="utf-8")
    loaded = airframe.load_thruster_table(path)
    assert [t.group for t in loaded] == [t.group for t in airframe.default_thrusters()]
    assert np.allclose(loaded[12].location, [0.5, -0.25, 0.0])

    path.write_text(yaml.safe_dump({"thrusters": rows[:3]}), encoding="utf-8")
    with pytest.raises(ConfigFault):
        airframe.load_thruster_table(path)
