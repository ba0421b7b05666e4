"""
Strapdown seeker and navigation front end
- Corrupts ground truth (scale factor + Gaussian noise)
- Reconstructs the body LOS and stabilizes it with the integrated attitude change dq
- First-order lag filter, finite-difference rates, 11-element observation
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.errors import ConfigFault, DegenerateGeometry, FovFault, InvalidArgument
from src.mathkit import IDENTITY_QUAT, dcm_from_quat, lag_update, quat_derivative, quat_normalize, rk4_step

log = logging.getLogger(__name__)

OBS_DIM = 11
DQ_STEP = 0.020
GUIDANCE_DT = 0.040


@dataclass(frozen=True)
class SensorErrorConfig:
    e_theta: float = 0.0
    e_omega: float = 0.0
    sigma_theta: float = 0.0
    sigma_omega: float = 0.0
    tau_theta: float = 0.020

    def __post_init__(self):
        if self.sigma_theta < 0.0 or self.sigma_omega < 0.0:
            raise ConfigFault("sensor noise std-devs must be non-negative")
        if abs(self.e_theta) >= 1.0 or abs(self.e_omega) >= 1.0:
            raise ConfigFault("scale-factor errors must satisfy |e| < 1")
        if self.tau_theta < 0.0:
            raise ConfigFault("tau_theta must be non-negative")


@dataclass
class SeekerState:
    theta_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    prev_theta_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    dq: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    q_ref: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    theta0: Optional[np.ndarray] = None
    initialized: bool = False


@dataclass
class SensorPacket:
    """Everything the seeker produced at one guidance step"""

    t: float
    theta_true: np.ndarray
    theta_meas: np.ndarray
    omega_hat: np.ndarray
    theta_stab: np.ndarray
    theta_filt: np.ndarray
    theta_rate: np.ndarray
    dq: np.ndarray
    obs: np.ndarray


def true_seeker_angles(r_m: np.ndarray, r_t: np.ndarray, q: np.ndarray) -> Tuple[float, float]:
    los = np.asarray(r_t, dtype=np.float64) - np.asarray(r_m, dtype=np.float64)
    n = float(np.linalg.norm(los))
    if n == 0.0:
        raise DegenerateGeometry("zero range between missile and target")
    lb = dcm_from_quat(q) @ (los / n)
    return float(np.arcsin(np.clip(lb[1], -1.0, 1.0))), float(np.arcsin(np.clip(lb[2], -1.0, 1.0)))


def corrupt(omega_true: np.ndarray, theta_true, cfg: SensorErrorConfig, rng: np.random.Generator):
    """
    ω̂ = ω(1+e_ω) + N(0, σ_ω); θ = θ(1+e_θ) + N(0, σ_θ)
    - draw order: 3 rate channels, then 2 angle channels
    """
    omega_hat = np.asarray(omega_true, dtype=np.float64) * (1.0 + cfg.e_omega)
    theta = np.asarray(theta_true, dtype=np.float64) * (1.0 + cfg.e_theta)
    if cfg.sigma_omega > 0.0:
        omega_hat = omega_hat + rng.normal(0.0, cfg.sigma_omega, size=3)
    if cfg.sigma_theta > 0.0:
        theta = theta + rng.normal(0.0, cfg.sigma_theta, size=2)
    return omega_hat, float(theta[0]), float(theta[1])


def reconstruct_los(theta_u: float, theta_v: float) -> np.ndarray:
    y = np.sin(theta_u)
    z = np.sin(theta_v)
    arg = 1.0 - y * y - z * z
    if arg < 0.0:
        raise FovFault(f"seeker angles ({theta_u:.4f}, {theta_v:.4f}) outside the reconstructable region")
    return np.array([np.sqrt(arg), y, z])


def stabilize(los_body: np.ndarray, dq: np.ndarray) -> Tuple[float, float]:
    """Rotate the body LOS back into the homing-start body frame"""
    ls = dcm_from_quat(dq).T @ los_body
    return float(np.arcsin(np.clip(ls[1], -1.0, 1.0))), float(np.arcsin(np.clip(ls[2], -1.0, 1.0)))


def filter_and_rate(state: SeekerState, theta_stab, tau_theta: float, guidance_dt: float = GUIDANCE_DT):
    """
    Advance the angle lag filter one guidance period
    - uninitialized filters start at the first sample and report zero rate
    """
    theta_stab = np.asarray(theta_stab, dtype=np.float64)
    if not state.initialized:
        state.prev_theta_hat = theta_stab.copy()
        state.theta_hat = theta_stab.copy()
        state.initialized = True
        return state.theta_hat.copy(), np.zeros(2)
    state.prev_theta_hat = state.theta_hat.copy()
    state.theta_hat = lag_update(state.theta_hat, theta_stab, guidance_dt, tau_theta)
    rate = (state.theta_hat - state.prev_theta_hat) / guidance_dt
    return state.theta_hat.copy(), rate


def integrate_dq(dq: np.ndarray, omega_hat: np.ndarray, interval: float, step: float = DQ_STEP) -> np.ndarray:
    """Integrate attitude change with held ω̂ in 20 ms RK4 steps"""
    n = int(round(interval / step))
    if n < 0 or abs(n * step - interval) > 1e-9:
        raise InvalidArgument(f"interval {interval} is not a multiple of {step}")
    w = np.asarray(omega_hat, dtype=np.float64)
    q = np.asarray(dq, dtype=np.float64)
    if not w.any():
        return q.copy()
    for _ in range(n):
        q = quat_normalize(rk4_step(q, lambda _t, y: quat_derivative(y, w), step))
    return q


def build_observation(state: SeekerState, theta_hat, theta_rate, omega_hat) -> np.ndarray:
    if state.theta0 is None:
        raise InvalidArgument("homing-start angles are not latched")
    obs = np.concatenate((
        np.asarray(theta_hat) - state.theta0,
        np.asarray(theta_rate),
        state.dq,
        np.asarray(omega_hat),
    ))
    return obs


class Seeker:
    """
    Per-episode seeker pipeline
    - sense() runs one guidance step of the pipeline
    - advance() integrates dq across the held interval
    """

    def __init__(
        self,
        cfg: SensorErrorConfig,
        rng: np.random.Generator,
        guidance_dt: float = GUIDANCE_DT,
        zero_init: bool = False,
        q_ref: Optional[np.ndarray] = None,
    ):
        self.cfg = cfg
        self.rng = rng
        self.guidance_dt = guidance_dt
        self.state = SeekerState(q_ref=IDENTITY_QUAT.copy() if q_ref is None else np.asarray(q_ref).copy())
        if zero_init:
            self.state.initialized = True
        self.omega_hat = np.zeros(3)

    def sense(self, t: float, r_m: np.ndarray, r_t: np.ndarray, q: np.ndarray, omega: np.ndarray) -> SensorPacket:
        theta_true = np.array(true_seeker_angles(r_m, r_t, q))
        omega_hat, tu, tv = corrupt(omega, theta_true, self.cfg, self.rng)
        return self.process(t, theta_true, np.array([tu, tv]), omega_hat)

    def process(self, t: float, theta_true: np.ndarray, theta_meas: np.ndarray, omega_hat: np.ndarray) -> SensorPacket:
        """Pipeline from corrupted measurements on; also used to replay logged measurements"""
        self.omega_hat = np.asarray(omega_hat, dtype=np.float64)
        los = reconstruct_los(theta_meas[0], theta_meas[1])
        theta_stab = np.array(stabilize(los, self.state.dq))
        theta_filt, theta_rate = filter_and_rate(self.state, theta_stab, self.cfg.tau_theta, self.guidance_dt)
        if self.state.theta0 is None:
            self.state.theta0 = theta_filt.copy()
        obs = build_observation(self.state, theta_filt, theta_rate, omega_hat)
        return SensorPacket(
            t=t,
            theta_true=np.asarray(theta_true, dtype=np.float64),
            theta_meas=np.asarray(theta_meas, dtype=np.float64),
            omega_hat=np.asarray(omega_hat, dtype=np.float64),
            theta_stab=theta_stab,
            theta_filt=theta_filt,
            theta_rate=theta_rate,
            dq=self.state.dq.copy(),
            obs=obs,
        )

    def advance(self, interval: float) -> None:
        self.state.dq = integrate_dq(self.state.dq, self.omega_hat, interval)
