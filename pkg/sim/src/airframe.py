"""
Missile physical model
- Thruster table (4 divert + 12 attitude thrusters in 6 pairs)
- Commanded force / torque for a 10-bit group command
- Time-varying mass, inertia tensor and center of mass
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml

from src.errors import ConfigFault, InvalidArgument

log = logging.getLogger(__name__)

G_REF = 9.81
N_GROUPS = 10
N_DIVERT = 4
DIVERT_THRUST = 5000.0
ACS_THRUST = 125.0
# Calibrated against the PN benchmark fuel mean (~8 kg); the vehicle data gives no Isp
DEFAULT_ISP = 135.0

# Torque direction of each attitude pair, in group order 4..9
ACS_GROUP_LABELS = ("roll-", "roll+", "pitch+", "pitch-", "yaw-", "yaw+")


@dataclass(frozen=True)
class ThrusterSpec:
    direction: np.ndarray
    location: np.ndarray
    max_thrust: float
    group: int

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ConfigFault(f"thruster direction must be a unit vector, got {d.tolist()}")
        if not 0 <= int(self.group) < N_GROUPS:
            raise ConfigFault(f"thruster group must be in [0, {N_GROUPS - 1}], got {self.group}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "location", np.asarray(self.location, dtype=np.float64))


def default_thrusters(radius: float = 0.25, length: float = 1.0) -> List[ThrusterSpec]:
    """Built-in placement table; rows 5..16 pair up consecutively into groups 4..9"""
    r, hh = radius, 0.5 * length
    rows = [
        ((0, -1, 0), (0, -0.25, 0), DIVERT_THRUST),
        ((0, 1, 0), (0, 0.25, 0), DIVERT_THRUST),
        ((0, 0, 1), (0, 0, 0.25), DIVERT_THRUST),
        ((0, 0, -1), (0, 0, -0.25), DIVERT_THRUST),
        ((0, 0, 1), (0, -r, 0), ACS_THRUST),
        ((0, 0, -1), (0, r, 0), ACS_THRUST),
        ((0, -1, 0), (0, 0, r), ACS_THRUST),
        ((0, 1, 0), (0, 0, -r), ACS_THRUST),
        ((0, 0, -1), (hh, 0, -r), ACS_THRUST),
        ((0, 0, 1), (-hh, 0, r), ACS_THRUST),
        ((0, 0, 1), (hh, 0, r), ACS_THRUST),
        ((0, 0, -1), (-hh, 0, -r), ACS_THRUST),
        ((0, -1, 0), (hh, -r, 0), ACS_THRUST),
        ((0, 1, 0), (-hh, r, 0), ACS_THRUST),
        ((0, 1, 0), (hh, r, 0), ACS_THRUST),
        ((0, -1, 0), (-hh, -r, 0), ACS_THRUST),
    ]
    specs = []
    for i, (d, loc, thrust) in enumerate(rows):
        group = i if i < N_DIVERT else N_DIVERT + (i - N_DIVERT) // 2
        specs.append(ThrusterSpec(np.array(d, dtype=np.float64), np.array(loc, dtype=np.float64), thrust, group))
    return specs


def load_thruster_table(path: Path) -> List[ThrusterSpec]:
    """
    Read a 16-row thruster table from YAML (JSON also works)
    - each row: {direction: [x,y,z], location: [x,y,z], max_thrust: N, group: k}
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigFault(f"cannot read thruster table {path}: {exc}") from exc
    rows = data.get("thrusters") if isinstance(data, dict) else data
    if not isinstance(rows, list) or len(rows) != 16:
        raise ConfigFault(f"thruster table {path} must list 16 thrusters")
    specs = []
    for row in rows:
        try:
            specs.append(ThrusterSpec(
                np.array(row["direction"], dtype=np.float64),
                np.array(row["location"], dtype=np.float64),
                float(row["max_thrust"]),
                int(row["group"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigFault(f"bad thruster row {row!r}: {exc}") from exc
    log.info("Loaded thruster table from %s", path)
    return specs


@dataclass(frozen=True)
class ActionCommand:
    """10 binary group commands: 4 divert, then 6 attitude pairs"""

    bits: Tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != N_GROUPS or any(b not in (0, 1) for b in bits):
            raise InvalidArgument(f"action needs {N_GROUPS} binary flags, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def none(cls) -> "ActionCommand":
        return cls((0,) * N_GROUPS)

    @classmethod
    def from_groups(cls, *groups: int) -> "ActionCommand":
        bits = [0] * N_GROUPS
        for g in groups:
            bits[g] = 1
        return cls(tuple(bits))

    def expand(self, thrusters: Sequence[ThrusterSpec]) -> np.ndarray:
        """Per-thruster firing mask; every thruster of an asserted group fires"""
        return np.array([self.bits[t.group] == 1 for t in thrusters], dtype=bool)

    def divert_only(self) -> "ActionCommand":
        return ActionCommand(self.bits[:N_DIVERT] + (0,) * (N_GROUPS - N_DIVERT))

    @property
    def acs_count(self) -> int:
        return sum(self.bits[N_DIVERT:])

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int64)


@dataclass
class MassState:
    mass: float
    fuel_used: float
    com_offset: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    inertia_rate: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))


def nominal_inertia(mass: float, r: float, h: float) -> np.ndarray:
    """Solid cylinder about its center: diag(m r²/2, m(3r²+h²)/12, m(3r²+h²)/12)"""
    transverse = mass * (3.0 * r * r + h * h) / 12.0
    return np.diag([0.5 * mass * r * r, transverse, transverse])


def com_fuel_drift(com_offset: np.ndarray, fuel_used: float, fuel_capacity: float) -> np.ndarray:
    if fuel_capacity <= 0.0:
        raise InvalidArgument("fuel capacity must be positive")
    return np.asarray(com_offset, dtype=np.float64) * (fuel_used / fuel_capacity)


def com_bound(bound_fraction: float, r: float = 0.25, h: float = 1.0) -> np.ndarray:
    return bound_fraction * np.array([0.5 * h, r, r])


def com_slosh(rng: np.random.Generator, bound_fraction: float, r: float = 0.25, h: float = 1.0) -> np.ndarray:
    """Uniform com within ±(bound·h/2, bound·r, bound·r)"""
    limit = com_bound(bound_fraction, r, h)
    return rng.uniform(-1.0, 1.0, size=3) * limit


def command_force_torque(cmd: ActionCommand, com: np.ndarray, thrusters: Sequence[ThrusterSpec]):
    """
    Commanded body force and torque about com
    - returns (force N, torque N·m, per-thruster commanded magnitude N)
    """
    active = cmd.expand(thrusters)
    magnitudes = np.array([t.max_thrust for t in thrusters]) * active
    if not active.any():
        return np.zeros(3), np.zeros(3), magnitudes
    directions = np.array([t.direction for t in thrusters])
    arms = np.array([t.location for t in thrusters]) - np.asarray(com, dtype=np.float64)
    forces = directions * magnitudes[:, None]
    force = forces.sum(axis=0)
    torque = np.cross(arms, forces).sum(axis=0)
    return force, torque, magnitudes


def actuator_lag_derivative(force, torque, commanded_force, commanded_torque, tau_u: float):
    """(Ḟ, L̇) of the first-order ignition lag"""
    if tau_u <= 0.0:
        raise InvalidArgument("actuator lag requires tau_u > 0; use bypass mode for tau_u = 0")
    return (commanded_force - force) / tau_u, (commanded_torque - torque) / tau_u


def mass_flow(thrust_magnitudes: np.ndarray, isp: float) -> float:
    if isp <= 0.0:
        raise InvalidArgument("Isp must be positive")
    return -float(np.sum(np.abs(thrust_magnitudes))) / (isp * G_REF)


@dataclass
class Airframe:
    """
    Vehicle constants plus per-episode perturbations
    - inertia_scale / inertia_offdiag perturb the nominal tensor
    - fuel_slosh redraws com within slosh_bound every step
    """

    thrusters: List[ThrusterSpec] = field(default_factory=default_thrusters)
    dry_mass: float = 10.0
    fuel_capacity: float = 25.0
    isp: float = DEFAULT_ISP
    radius: float = 0.25
    length: float = 1.0
    inertia_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    inertia_offdiag: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    fuel_slosh: bool = False
    slosh_bound: float = 0.0

    def __post_init__(self):
        if self.dry_mass <= 0.0 or self.fuel_capacity <= 0.0:
            raise ConfigFault("dry mass and fuel capacity must be positive")
        if self.isp <= 0.0:
            raise ConfigFault("Isp must be positive")
        if len(self.thrusters) != 16:
            raise ConfigFault("airframe needs exactly 16 thrusters")

    @property
    def wet_mass(self) -> float:
        return self.dry_mass + self.fuel_capacity

    def inertia(self, mass: float) -> np.ndarray:
        base = np.diag(nominal_inertia(mass, self.radius, self.length))
        return np.diag(base * self.inertia_scale) + self.inertia_offdiag

    def com(self, fuel_used: float, com_offset: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if self.fuel_slosh and rng is not None:
            return com_slosh(rng, self.slosh_bound, self.radius, self.length)
        return com_fuel_drift(com_offset, fuel_used, self.fuel_capacity)

    def initial_mass_state(self, com_offset: np.ndarray, rng: Optional[np.random.Generator] = None) -> MassState:
        mass = self.wet_mass
        return MassState(
            mass=mass,
            fuel_used=0.0,
            com_offset=np.asarray(com_offset, dtype=np.float64),
            com=self.com(0.0, com_offset, rng),
            inertia=self.inertia(mass),
        )

    def refresh(self, prev: MassState, mass: float, dt: float, rng: Optional[np.random.Generator] = None) -> MassState:
        """Mass properties after a step; J̇ by backward difference"""
        mass = max(mass, self.dry_mass)
        fuel_used = min(self.fuel_capacity, self.wet_mass - mass)
        inertia = self.inertia(mass)
        return MassState(
            mass=mass,
            fuel_used=fuel_used,
            com_offset=prev.com_offset,
            com=self.com(fuel_used, prev.com_offset, rng),
            inertia=inertia,
            inertia_rate=(inertia - prev.inertia) / dt,
        )

    def with_thrust_scale(self, index: int, scale: float) -> "Airframe":
        thrusters = list(self.thrusters)
        t = thrusters[index]
        thrusters[index] = dataclasses.replace(t, max_thrust=t.max_thrust * scale)
        return dataclasses.replace(self, thrusters=thrusters)
