"""
Classical PN / APN benchmark
- Zero-effort-miss acceleration command
- Pulsed divert-thruster quantization (1/3 of max acceleration)
- First-order lag on the ground-truth engagement state
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.airframe import N_DIVERT, ActionCommand, ThrusterSpec
from src.engagement import Controller, TruthView
from src.errors import ConfigFault, PastIntercept
from src.mathkit import dcm_from_quat, lag_update
from src.seeker import GUIDANCE_DT, SensorPacket

log = logging.getLogger(__name__)

LAW_PN = "pn"
LAW_APN = "apn"


@dataclass(frozen=True)
class GuidanceConfig:
    nav_constant: float = 3.0
    law: str = LAW_PN
    tau: Optional[float] = None
    pulse_threshold: float = 1.0 / 3.0

    def __post_init__(self):
        if self.nav_constant <= 0.0:
            raise ConfigFault("navigation constant must be positive")
        if self.law not in (LAW_PN, LAW_APN):
            raise ConfigFault(f"unknown guidance law {self.law!r}")
        if not 0.0 < self.pulse_threshold < 1.0:
            raise ConfigFault("pulse threshold must lie in (0, 1)")
        if self.tau is not None and self.tau < 0.0:
            raise ConfigFault("guidance filter tau must be non-negative")


def zem_accel(r_tm: np.ndarray, v_tm: np.ndarray, a_t: Optional[np.ndarray], nav_constant: float) -> np.ndarray:
    """
    a = N·ZEM/t_go² with ZEM = r + v·t_go (+ ½·a_T·t_go² for APN)
    - raises PastIntercept when the closing velocity is not positive
    """
    r_tm = np.asarray(r_tm, dtype=np.float64)
    v_tm = np.asarray(v_tm, dtype=np.float64)
    rng_m = float(np.linalg.norm(r_tm))
    v_c = -float(r_tm @ v_tm) / rng_m
    if v_c <= 0.0:
        raise PastIntercept(f"closing velocity {v_c:.3f} m/s")
    t_go = rng_m / v_c
    zem = r_tm + v_tm * t_go
    if a_t is not None:
        zem = zem + 0.5 * np.asarray(a_t, dtype=np.float64) * t_go * t_go
    return nav_constant * zem / (t_go * t_go)


def pulse_map(a_com: np.ndarray, q: np.ndarray, mass: float, thrusters: Sequence[ThrusterSpec],
              threshold: float = 1.0 / 3.0) -> ActionCommand:
    """Fire each divert thruster whose signed body-frame demand exceeds threshold·(T_max/m)"""
    if mass <= 0.0:
        raise ConfigFault("mass must be positive")
    a_body = dcm_from_quat(q) @ np.asarray(a_com, dtype=np.float64)
    bits = [0] * 10
    for spec in thrusters:
        if spec.group >= N_DIVERT:
            continue
        demand = float(a_body @ spec.direction)
        if demand > threshold * spec.max_thrust / mass:
            bits[spec.group] = 1
    return ActionCommand(tuple(bits))


class TruthFilter:
    """First-order lag on (r_TM, v_TM, a_T); the first sample passes straight through"""

    def __init__(self, tau: float, initial: Optional[np.ndarray] = None):
        self.tau = tau
        self.value = None if initial is None else np.asarray(initial, dtype=np.float64).copy()

    def update(self, sample: np.ndarray, dt: float) -> np.ndarray:
        sample = np.asarray(sample, dtype=np.float64)
        if self.value is None or self.tau <= 0.0:
            self.value = sample.copy()
        else:
            self.value = lag_update(self.value, sample, dt, self.tau)
        return self.value.copy()


def filtered_truth(r_tm: np.ndarray, v_tm: np.ndarray, a_t: np.ndarray, tau: float, dt: float,
                   truth_filter: Optional[TruthFilter] = None):
    """One filter update; returns filtered (r_TM, v_TM, a_T)"""
    truth_filter = truth_filter or TruthFilter(tau)
    out = truth_filter.update(np.concatenate((r_tm, v_tm, a_t)), dt)
    return out[0:3], out[3:6], out[6:9]


class PNController(Controller):
    """Benchmark controller with perfect (lagged) knowledge of the engagement state"""

    def __init__(self, cfg: GuidanceConfig, thrusters: Sequence[ThrusterSpec], tau: float,
                 guidance_dt: float = GUIDANCE_DT):
        self.cfg = cfg
        self.thrusters = thrusters
        self.tau = cfg.tau if cfg.tau is not None else tau
        self.guidance_dt = guidance_dt
        self.name = cfg.law
        self.reset()

    def reset(self) -> None:
        self.filter = TruthFilter(self.tau)

    def act(self, packet: SensorPacket, truth: TruthView) -> ActionCommand:
        r_tm, v_tm, a_t = filtered_truth(truth.r_tm, truth.v_tm, truth.a_t, self.tau, self.guidance_dt, self.filter)
        try:
            a_com = zem_accel(r_tm, v_tm, a_t if self.cfg.law == LAW_APN else None, self.cfg.nav_constant)
        except PastIntercept:
            return ActionCommand.none()
        return pulse_map(a_com, truth.q, truth.mass, self.thrusters, self.cfg.pulse_threshold)
