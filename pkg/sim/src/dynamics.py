"""
Ground-truth propagation of missile and target
- Flat 42-element state integrated jointly by RK4
- Translational / rotational equations of motion with ignition lag
- Earth point-mass gravity anchored at (colatitude, longitude, altitude)
- Target maneuvers: bang-bang, vertical-S, barrel roll
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.airframe import ActionCommand, Airframe, MassState, actuator_lag_derivative, command_force_torque, mass_flow
from src.errors import ConfigFault, DynamicsFault, IntegrationFault, InvalidArgument
from src.mathkit import any_orthogonal, dcm_from_quat, quat_derivative, quat_normalize, rk4_step
from src.seeker import GUIDANCE_DT

log = logging.getLogger(__name__)

# State layout
POS = slice(0, 3)
VEL = slice(3, 6)
QUAT = slice(6, 10)
OMEGA = slice(10, 13)
MASS = 13
FORCE = slice(14, 17)
TORQUE = slice(17, 20)
THRUST = slice(20, 36)
TPOS = slice(36, 39)
TVEL = slice(39, 42)
STATE_SIZE = 42

MU_EARTH = 3.986004418e14
R_EARTH = 6378137.0

MANEUVER_NONE = "none"
MANEUVER_BANG_BANG = "bang-bang"
MANEUVER_VERTICAL_S = "vertical-S"
MANEUVER_BARREL_ROLL = "barrel-roll"
MANEUVER_KINDS = (MANEUVER_NONE, MANEUVER_BANG_BANG, MANEUVER_VERTICAL_S, MANEUVER_BARREL_ROLL)
MAX_TARGET_ACCEL = 5.0 * 9.81


@dataclass(frozen=True)
class GravityModel:
    """Point-mass Earth; colatitude 0 puts the engagement over the pole"""

    mu: float = MU_EARTH
    radius: float = R_EARTH
    colatitude: float = 0.0
    longitude: float = 0.0
    altitude: float = 50e3
    enabled: bool = True

    def __post_init__(self):
        if self.mu <= 0.0 or self.radius <= 0.0:
            raise ConfigFault("gravity parameter and earth radius must be positive")
        rho = self.radius + self.altitude
        anchor = rho * np.array([
            np.sin(self.colatitude) * np.cos(self.longitude),
            np.sin(self.colatitude) * np.sin(self.longitude),
            np.cos(self.colatitude),
        ])
        object.__setattr__(self, "_anchor", anchor)

    @property
    def anchor(self) -> np.ndarray:
        return self._anchor

    def accel(self, position: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return np.zeros(3)
        return gravity_accel(position, self)


def gravity_accel(position: np.ndarray, model: GravityModel) -> np.ndarray:
    r = model.anchor + position
    n = float(np.sqrt(r @ r))
    if n == 0.0:
        raise InvalidArgument("position coincides with the earth center")
    return -model.mu * r / (n * n * n)


@dataclass(frozen=True)
class ManeuverSpec:
    kind: str = MANEUVER_NONE
    accel: float = 0.0
    start: float = 0.0
    duration: float = 0.0
    period: float = 1.0
    offset: float = 0.0
    lateral: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in MANEUVER_KINDS:
            raise ConfigFault(f"unknown maneuver kind {self.kind!r}")
        if not 0.0 <= self.accel <= MAX_TARGET_ACCEL + 1e-9:
            raise ConfigFault(f"maneuver acceleration {self.accel} outside [0, {MAX_TARGET_ACCEL}]")
        if self.kind in (MANEUVER_VERTICAL_S, MANEUVER_BARREL_ROLL) and self.period <= 0.0:
            raise ConfigFault("maneuver period must be positive")


def _lateral_unit(lateral: Optional[np.ndarray], vhat: np.ndarray) -> np.ndarray:
    if lateral is None:
        return any_orthogonal(vhat)
    p = lateral - (lateral @ vhat) * vhat
    n = float(np.sqrt(p @ p))
    if n < 1e-12:
        return any_orthogonal(vhat)
    return p / n


def target_accel(spec: ManeuverSpec, t: float, v_target: np.ndarray) -> np.ndarray:
    """Commanded maneuver acceleration, always orthogonal to the current target velocity"""
    if spec.kind == MANEUVER_NONE or spec.accel == 0.0:
        return np.zeros(3)
    speed = float(np.linalg.norm(v_target))
    if speed == 0.0:
        raise InvalidArgument("target velocity must be nonzero")
    vhat = v_target / speed
    u = _lateral_unit(spec.lateral, vhat)

    if spec.kind == MANEUVER_BANG_BANG:
        if spec.start <= t < spec.start + spec.duration:
            return spec.accel * u
        if spec.start + spec.duration <= t < spec.start + 2.0 * spec.duration:
            return -spec.accel * u
        return np.zeros(3)

    if t < spec.offset:
        return np.zeros(3)

    if spec.kind == MANEUVER_VERTICAL_S:
        k = int(np.floor((t - spec.offset) / (0.5 * spec.period)))
        return (spec.accel if k % 2 == 0 else -spec.accel) * u

    # barrel roll
    phase = 2.0 * np.pi * (t - spec.offset) / spec.period
    w = np.cross(vhat, u)
    return spec.accel * (np.cos(phase) * u + np.sin(phase) * w)


@dataclass(frozen=True)
class SimClock:
    coarse_dt: float = 0.020
    fine_dt: float = 6.7e-5
    fine_range: float = 1000.0
    guidance_dt: float = GUIDANCE_DT

    def __post_init__(self):
        if min(self.coarse_dt, self.fine_dt, self.guidance_dt) <= 0.0:
            raise ConfigFault("clock steps must be positive")
        ratio = self.guidance_dt / self.coarse_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigFault("guidance dt must be an integer multiple of the coarse dt")

    def substep(self, range_m: float) -> float:
        return self.fine_dt if range_m <= self.fine_range else self.coarse_dt


@dataclass
class EngagementState:
    t: float
    x: np.ndarray
    mass: MassState
    fuel_exhausted: bool = False

    @property
    def r_m(self) -> np.ndarray:
        return self.x[POS]

    @property
    def v_m(self) -> np.ndarray:
        return self.x[VEL]

    @property
    def q(self) -> np.ndarray:
        return self.x[QUAT]

    @property
    def omega(self) -> np.ndarray:
        return self.x[OMEGA]

    @property
    def r_t(self) -> np.ndarray:
        return self.x[TPOS]

    @property
    def v_t(self) -> np.ndarray:
        return self.x[TVEL]

    @property
    def r_tm(self) -> np.ndarray:
        return self.x[TPOS] - self.x[POS]

    @property
    def v_tm(self) -> np.ndarray:
        return self.x[TVEL] - self.x[VEL]

    @property
    def range(self) -> float:
        return float(np.linalg.norm(self.r_tm))

    @property
    def fuel_used(self) -> float:
        return self.mass.fuel_used


def make_state(r_m, v_m, q, omega, r_t, v_t, mass: MassState, t: float = 0.0) -> EngagementState:
    x = np.zeros(STATE_SIZE)
    x[POS] = r_m
    x[VEL] = v_m
    x[QUAT] = quat_normalize(q)
    x[OMEGA] = omega
    x[MASS] = mass.mass
    x[TPOS] = r_t
    x[TVEL] = v_t
    return EngagementState(t=t, x=x, mass=mass)


def missile_derivatives(
    x: np.ndarray,
    mass: MassState,
    gravity: GravityModel,
    isp: float,
    commanded: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
    tau_u: float = 0.0,
    six_dof: bool = True,
) -> np.ndarray:
    """
    Missile part of ẋ (target slots left zero)
    - lagged force / torque / thrust states when tau_u > 0, commanded values otherwise
    - ω̇ = J⁻¹(−ω×(Jω) − J̇ω + L)
    """
    dx = np.zeros_like(x)
    if commanded is None:
        commanded = (np.zeros(3), np.zeros(3), np.zeros(x[THRUST].shape[0]))
    cmd_force, cmd_torque, cmd_mags = commanded
    if tau_u > 0.0:
        force, torque, mags = x[FORCE], x[TORQUE], x[THRUST]
        dx[FORCE], dx[TORQUE] = actuator_lag_derivative(force, torque, cmd_force, cmd_torque, tau_u)
        dx[THRUST] = (cmd_mags - mags) / tau_u
    else:
        force, torque, mags = cmd_force, cmd_torque, cmd_mags

    q = x[QUAT]
    dx[POS] = x[VEL]
    dx[VEL] = dcm_from_quat(q).T @ force / x[MASS] + gravity.accel(x[POS])
    if six_dof:
        w = x[OMEGA]
        j = mass.inertia
        rhs = -np.cross(w, j @ w) - mass.inertia_rate @ w + torque
        try:
            dx[OMEGA] = np.linalg.solve(j, rhs)
        except np.linalg.LinAlgError as exc:
            raise DynamicsFault("singular inertia tensor") from exc
        dx[QUAT] = quat_derivative(q, w)
    dx[MASS] = mass_flow(mags, isp)
    return dx


class Propagator:
    """
    Advances an EngagementState by one simulation substep
    - the guidance action is latched with set_command and held between calls
    - six_dof=False freezes attitude (3-DOF benchmark)
    """

    def __init__(
        self,
        airframe: Airframe,
        gravity: GravityModel,
        maneuver: ManeuverSpec,
        tau_u: float = 0.0,
        six_dof: bool = True,
        slosh_rng: Optional[np.random.Generator] = None,
    ):
        if tau_u < 0.0:
            raise InvalidArgument("tau_u must be non-negative")
        self.airframe = airframe
        self.gravity = gravity
        self.maneuver = maneuver
        self.tau_u = tau_u
        self.six_dof = six_dof
        self.slosh_rng = slosh_rng
        self.command = ActionCommand.none()
        self._mass: Optional[MassState] = None
        self._commanded = None

    def set_command(self, command: ActionCommand) -> None:
        self.command = command if self.six_dof else command.divert_only()

    def derivative(self, t: float, x: np.ndarray) -> np.ndarray:
        dx = missile_derivatives(
            x, self._mass, self.gravity, self.airframe.isp,
            commanded=self._commanded, tau_u=self.tau_u, six_dof=self.six_dof,
        )
        dx[TPOS] = x[TVEL]
        dx[TVEL] = self.gravity.accel(x[TPOS]) + target_accel(self.maneuver, t, x[TVEL])
        return dx

    def commanded(self, state: EngagementState):
        n = len(self.airframe.thrusters)
        if state.fuel_exhausted:
            return np.zeros(3), np.zeros(3), np.zeros(n)
        force, torque, mags = command_force_torque(self.command, state.mass.com, self.airframe.thrusters)
        if not self.six_dof:
            torque = np.zeros(3)
        return force, torque, mags

    def step(self, state: EngagementState, dt: float) -> EngagementState:
        self._commanded = self.commanded(state)
        self._mass = state.mass
        x0 = state.x.copy()
        if self.tau_u <= 0.0:
            x0[FORCE], x0[TORQUE], x0[THRUST] = self._commanded
        try:
            x1 = rk4_step(x0, self.derivative, dt, state.t)
        except IntegrationFault as exc:
            raise IntegrationFault(str(exc), index=exc.index, time=state.t) from exc
        except InvalidArgument as exc:
            raise IntegrationFault(f"invalid intermediate state: {exc}", time=state.t) from exc
        bad = ~np.isfinite(x1)
        if bad.any():
            index = int(np.flatnonzero(bad)[0])
            raise IntegrationFault(f"non-finite state at component {index}", index=index, time=state.t)

        x1[QUAT] = quat_normalize(x1[QUAT])
        exhausted = state.fuel_exhausted
        if x1[MASS] <= self.airframe.dry_mass:
            x1[MASS] = self.airframe.dry_mass
            x1[FORCE] = 0.0
            x1[TORQUE] = 0.0
            x1[THRUST] = 0.0
            if not exhausted:
                log.debug("Fuel exhausted at t=%.3fs", state.t + dt)
            exhausted = True
        mass = self.airframe.refresh(state.mass, float(x1[MASS]), dt, self.slosh_rng)
        return EngagementState(t=state.t + dt, x=x1, mass=mass, fuel_exhausted=exhausted)
