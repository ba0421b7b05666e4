import numpy as np
import pytest

from src import mathkit
from src.errors import IntegrationFault, InvalidArgument


def _random_quat(rng):
    return mathkit.quat_normalize(rng.normal(size=4))


def test_dcm_identity():
    assert np.allclose(mathkit.dcm_from_quat(mathkit.IDENTITY_QUAT), np.eye(3))


def test_dcm_half_turn_about_x():
    c = mathkit.dcm_from_quat(np.array([0.0, 1.0, 0.0, 0.0]))
    assert np.allclose(c, np.diag([1.0, -1.0, -1.0]))


def test_dcm_composition_and_double_cover():
    rng = np.random.default_rng(3)
    for _ in range(100):
        q1, q2 = _random_quat(rng), _random_quat(rng)
        lhs = mathkit.dcm_from_quat(mathkit.quat_multiply(q1, q2))
        rhs = mathkit.dcm_from_quat(q2) @ mathkit.dcm_from_quat(q1)
        assert np.max(np.abs(lhs - rhs)) < 1e-12
        assert np.allclose(mathkit.dcm_from_quat(q1), mathkit.dcm_from_quat(-q1), atol=1e-15)


def test_dcm_orthonormal():
    rng = np.random.default_rng(4)
    c = mathkit.dcm_from_quat(_random_quat(rng))
    assert np.max(np.abs(c @ c.T - np.eye(3))) < 1e-9
    assert np.linalg.det(c) == pytest.approx(1.0, abs=1e-9)


def test_dcm_rejects_non_finite():
    with pytest.raises(InvalidArgument):
        mathkit.dcm_from_quat(np.array([np.nan, 0.0, 0.0, 0.0]))


def test_quat_from_dcm_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = _random_quat(rng)
        if q[0] < 0:
            q = -q
        assert np.allclose(mathkit.quat_from_dcm(mathkit.dcm_from_quat(q)), q, atol=1e-12)


def test_quat_derivative_examples():
    assert np.allclose(mathkit.quat_derivative(mathkit.IDENTITY_QUAT, np.zeros(3)), 0.0)
    qdot = mathkit.quat_derivative(mathkit.IDENTITY_QUAT, np.array([2.0, 0.0, 0.0]))
    assert np.allclose(qdot, [0.0, 1.0, 0.0, 0.0])


def test_constant_rate_rotation_closed_form():
    w = np.array([np.pi / 2, 0.0, 0.0])
    q = mathkit.IDENTITY_QUAT.copy()
    for _ in range(100):
        q = mathkit.quat_normalize(mathkit.rk4_step(q, lambda _t, y: mathkit.quat_derivative(y, w), 0.01))
    expected = np.array([np.cos(np.pi / 4), np.sin(np.pi / 4), 0.0, 0.0])
    assert np.max(np.abs(q - expected)) < 1e-8


def test_rk4_zero_derivative():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(mathkit.rk4_step(x, lambda _t, y: np.zeros_like(y), 0.5), x)


def test_rk4_exponential():
    x = mathkit.rk4_step(np.array([1.0]), lambda _t, y: y, 0.1)
    # fourth-order Taylor polynomial of exp(0.1)
    assert x[0] == pytest.approx(1.0 + 0.1 + 0.01 / 2 + 0.001 / 6 + 0.0001 / 24, abs=1e-15)
    assert abs(x[0] - np.exp(0.1)) < 1e-7


def test_rk4_exact_on_cubics():
    # ẋ = 3t² - 2t + 1 -> x(t) = t³ - t² + t
    x = mathkit.rk4_step(np.array([0.0]), lambda t, _y: np.array([3 * t * t - 2 * t + 1]), 0.7, t=0.0)
    assert x[0] == pytest.approx(0.7 ** 3 - 0.7 ** 2 + 0.7, abs=1e-14)


def test_rk4_deterministic():
    f = lambda _t, y: np.sin(y)  # noqa: E731
    x = np.array([0.3, 1.1])
    assert np.array_equal(mathkit.rk4_step(x, f, 0.02), mathkit.rk4_step(x, f, 0.02))


def test_rk4_non_finite_names_component():
    def deriv(_t, y):
        out = np.zeros_like(y)
        out[2] = np.inf
        return out

    with pytest.raises(IntegrationFault) as info:
        mathkit.rk4_step(np.zeros(4), deriv, 0.01, t=1.5)
    assert info.value.details["index"] == 2


def test_rk4_rejects_bad_dt():
    with pytest.raises(InvalidArgument):
        mathkit.rk4_step(np.zeros(2), lambda _t, y: y, 0.0)


def test_renormalization_keeps_unit_norm():
    w = np.array([3.0, -1.0, 0.5])
    q = mathkit.IDENTITY_QUAT.copy()
    for _ in range(2000):
        q = mathkit.quat_normalize(mathkit.rk4_step(q, lambda _t, y: mathkit.quat_derivative(y, w), 0.02))
        assert abs(np.linalg.norm(q) - 1.0) < 1e-9


def test_lag_update_exact_step():
    assert mathkit.lag_update(0.0, 1.0, 0.040, 0.020) == pytest.approx(1.0 - np.exp(-2.0), abs=1e-12)
    assert np.array_equal(mathkit.lag_update(np.zeros(2), np.ones(2), 0.04, 0.0), np.ones(2))


def test_sample_cap_stays_inside():
    rng = np.random.default_rng(6)
    axis = np.array([0.3, -0.2, 0.9])
    half = np.radians(5.0)
    for _ in range(200):
        v = mathkit.sample_cap(axis, half, rng)
        assert mathkit.angle_between(v, axis) <= half + 1e-12
    assert np.allclose(mathkit.sample_cap(axis, 0.0, rng), mathkit.unit(axis))


def test_rng_streams_reproducible_and_independent():
    a = mathkit.episode_rng(7, 3, "sensors").normal(size=5)
    b = mathkit.episode_rng(7, 3, "sensors").normal(size=5)
    c = mathkit.episode_rng(7, 4, "sensors").normal(size=5)
    d = mathkit.episode_rng(7, 3, "scenario").normal(size=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
