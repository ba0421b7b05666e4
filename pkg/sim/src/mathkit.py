"""
Quaternion / DCM algebra and fixed-step integration
- Scalar-first quaternions, inertial-to-body DCM convention
- Classical RK4 step over flat state vectors
- Per-episode random streams keyed by (run seed, episode, purpose)
"""
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from src.errors import IntegrationFault, InvalidArgument

Vector = np.ndarray
Derivative = Callable[[float, np.ndarray], np.ndarray]

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

# Stream purposes; one independent generator each per episode
STREAM_SCENARIO = 0
STREAM_SENSORS = 1
STREAM_POLICY = 2
STREAM_SLOSH = 3
STREAM_INACCURACY = 4

STREAM_PURPOSES = {
    "scenario": STREAM_SCENARIO,
    "sensors": STREAM_SENSORS,
    "policy": STREAM_POLICY,
    "slosh": STREAM_SLOSH,
    "inaccuracy": STREAM_INACCURACY,
}


def _require_finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise InvalidArgument(f"{name} must be finite")


def quat_normalize(q: Vector) -> Vector:
    q = np.asarray(q, dtype=np.float64)
    n = float(np.sqrt(q @ q))
    if not np.isfinite(n) or n == 0.0:
        raise InvalidArgument("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(p: Vector, q: Vector) -> Vector:
    """Hamilton product p ⊗ q"""
    p0, p1, p2, p3 = p
    q0, q1, q2, q3 = q
    return np.array([
        p0 * q0 - p1 * q1 - p2 * q2 - p3 * q3,
        p0 * q1 + p1 * q0 + p2 * q3 - p3 * q2,
        p0 * q2 - p1 * q3 + p2 * q0 + p3 * q1,
        p0 * q3 + p1 * q2 - p2 * q1 + p3 * q0,
    ])


def quat_conjugate(q: Vector) -> Vector:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def dcm_from_quat(q: Vector) -> np.ndarray:
    """
    Inertial-to-body rotation matrix for attitude q
    - C(q1 ⊗ q2) = C(q2) @ C(q1)
    - q and -q give the same matrix
    """
    q = np.asarray(q, dtype=np.float64)
    _require_finite("quaternion", q)
    q0, q1, q2, q3 = q
    return np.array([
        [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2.0 * (q1 * q2 + q0 * q3), 2.0 * (q1 * q3 - q0 * q2)],
        [2.0 * (q1 * q2 - q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2.0 * (q2 * q3 + q0 * q1)],
        [2.0 * (q1 * q3 + q0 * q2), 2.0 * (q2 * q3 - q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
    ])


def quat_from_dcm(c: np.ndarray) -> Vector:
    """
    Inverse of dcm_from_quat (Shepperd's method)
    - Picks the largest squared component to avoid cancellation
    - Returns the representative with q0 >= 0
    """
    c = np.asarray(c, dtype=np.float64)
    tr = float(np.trace(c))
    squares = np.array([
        0.25 * (1.0 + tr),
        0.25 * (1.0 + 2.0 * c[0, 0] - tr),
        0.25 * (1.0 + 2.0 * c[1, 1] - tr),
        0.25 * (1.0 + 2.0 * c[2, 2] - tr),
    ])
    i = int(np.argmax(squares))
    q = np.empty(4)
    if i == 0:
        q[0] = np.sqrt(squares[0])
        q[1] = (c[1, 2] - c[2, 1]) / (4.0 * q[0])
        q[2] = (c[2, 0] - c[0, 2]) / (4.0 * q[0])
        q[3] = (c[0, 1] - c[1, 0]) / (4.0 * q[0])
    elif i == 1:
        q[1] = np.sqrt(squares[1])
        q[0] = (c[1, 2] - c[2, 1]) / (4.0 * q[1])
        q[2] = (c[0, 1] + c[1, 0]) / (4.0 * q[1])
        q[3] = (c[2, 0] + c[0, 2]) / (4.0 * q[1])
    elif i == 2:
        q[2] = np.sqrt(squares[2])
        q[0] = (c[2, 0] - c[0, 2]) / (4.0 * q[2])
        q[1] = (c[0, 1] + c[1, 0]) / (4.0 * q[2])
        q[3] = (c[1, 2] + c[2, 1]) / (4.0 * q[2])
    else:
        q[3] = np.sqrt(squares[3])
        q[0] = (c[0, 1] - c[1, 0]) / (4.0 * q[3])
        q[1] = (c[2, 0] + c[0, 2]) / (4.0 * q[3])
        q[2] = (c[1, 2] + c[2, 1]) / (4.0 * q[3])
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_derivative(q: Vector, omega: Vector) -> Vector:
    """q̇ = ½ B(q) ω with ω the body rotational velocity"""
    q0, q1, q2, q3 = q
    w0, w1, w2 = omega
    return 0.5 * np.array([
        -q1 * w0 - q2 * w1 - q3 * w2,
        q0 * w0 - q3 * w1 + q2 * w2,
        q3 * w0 + q0 * w1 - q1 * w2,
        -q2 * w0 + q1 * w1 + q0 * w2,
    ])


def quat_angle_between(q: Vector, p: Vector) -> float:
    """Rotation angle between two attitudes, in [0, π]"""
    d = float(np.dot(q, p))
    return float(np.arccos(np.clip(2.0 * d * d - 1.0, -1.0, 1.0)))


def _check_derivative(k: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(k)):
        index = int(np.flatnonzero(~np.isfinite(k))[0])
        raise IntegrationFault(f"non-finite derivative at component {index}", index=index, time=t)
    return k


def rk4_step(x: np.ndarray, deriv: Derivative, dt: float, t: float = 0.0) -> np.ndarray:
    """
    One classical fourth-order Runge-Kutta step
    - deriv(t, x) returns ẋ
    - no renormalization; callers fix up quaternions
    """
    if not dt > 0.0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    half = 0.5 * dt
    k1 = _check_derivative(deriv(t, x), t)
    k2 = _check_derivative(deriv(t + half, x + half * k1), t)
    k3 = _check_derivative(deriv(t + half, x + half * k2), t)
    k4 = _check_derivative(deriv(t + dt, x + dt * k3), t)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lag_update(state: Union[float, np.ndarray], target: Union[float, np.ndarray], dt: float, tau: float):
    """Exact zero-order-hold solution of a first-order lag over dt; tau = 0 passes target through"""
    if tau <= 0.0:
        return np.array(target, dtype=np.float64, copy=True)
    gain = -np.expm1(-dt / tau)
    return state + gain * (np.asarray(target, dtype=np.float64) - state)


def unit(v: Vector) -> Vector:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise InvalidArgument("cannot normalize a zero vector")
    return v / n


def any_orthogonal(v: Vector) -> Vector:
    """Some unit vector orthogonal to v"""
    v = unit(v)
    helper = np.eye(3)[int(np.argmin(np.abs(v)))]
    return unit(np.cross(v, helper))


def orthonormal_pair(v: Vector):
    """(e1, e2) spanning the plane orthogonal to v, right-handed with v̂"""
    e1 = any_orthogonal(v)
    e2 = np.cross(unit(v), e1)
    return e1, e2


def angle_between(a: Vector, b: Vector) -> float:
    cosang = float(np.dot(unit(a), unit(b)))
    return float(np.arccos(np.clip(cosang, -1.0, 1.0)))


def sample_cap(axis: Vector, half_angle: float, rng: np.random.Generator) -> Vector:
    """Unit vector drawn uniformly over the spherical cap of given half angle around axis"""
    axis = unit(axis)
    if half_angle <= 0.0:
        return axis
    cos_max = np.cos(half_angle)
    cos_a = 1.0 - rng.uniform() * (1.0 - cos_max)
    sin_a = np.sqrt(max(0.0, 1.0 - cos_a * cos_a))
    psi = rng.uniform(0.0, 2.0 * np.pi)
    e1, e2 = orthonormal_pair(axis)
    return unit(cos_a * axis + sin_a * (np.cos(psi) * e1 + np.sin(psi) * e2))


def cap_mean_angle(half_angle: float) -> float:
    """Mean angle from the axis of a uniform spherical-cap distribution"""
    h = float(half_angle)
    return (np.sin(h) - h * np.cos(h)) / (1.0 - np.cos(h))


@dataclass(frozen=True)
class RngStream:
    """Deterministic generator keyed by run seed and stream id (episode index)"""

    seed: int
    stream_id: int

    def generator(self, purpose: Union[int, str] = 0) -> np.random.Generator:
        if isinstance(purpose, str):
            purpose = STREAM_PURPOSES[purpose]
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), int(purpose)))
        return np.random.Generator(np.random.PCG64(seq))


def episode_rng(seed: int, episode: int, purpose: Union[int, str]) -> np.random.Generator:
    return RngStream(seed, episode).generator(purpose)
