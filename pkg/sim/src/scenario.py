"""
Randomized engagement generation
- Target position / velocity sampled in a missile-centered frame
- Gravity-corrected collision triangle in 3-D (two passes)
- Heading and attitude error injection, feasibility retry
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from src.airframe import Airframe
from src.dynamics import (
    MANEUVER_BANG_BANG,
    MANEUVER_BARREL_ROLL,
    MANEUVER_KINDS,
    MANEUVER_NONE,
    MANEUVER_VERTICAL_S,
    EngagementState,
    GravityModel,
    ManeuverSpec,
    make_state,
)
from src.errors import ConfigFault, InfeasibleConfig, InfeasibleGeometry
from src.mathkit import any_orthogonal, orthonormal_pair, quat_from_dcm, sample_cap, unit
from src.seeker import SensorErrorConfig

log = logging.getLogger(__name__)

G0 = 9.81


@dataclass(frozen=True)
class Span:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigFault(f"range min {self.lo} exceeds max {self.hi}")

    @classmethod
    def parse(cls, name: str, value: Any) -> "Span":
        try:
            if isinstance(value, Mapping):
                return cls(float(value["min"]), float(value["max"]))
            if isinstance(value, (list, tuple)):
                lo, hi = value
                return cls(float(lo), float(hi))
            return cls(float(value), float(value))
        except ConfigFault as exc:
            raise ConfigFault(f"{name}: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigFault(f"{name}: expected {{min, max}} or a number, got {value!r}") from exc

    def draw(self, rng: np.random.Generator) -> float:
        if self.lo == self.hi:
            return self.lo
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, value: float, tol: float = 1e-12) -> bool:
        return self.lo - tol <= value <= self.hi + tol

    def to_dict(self) -> Dict[str, float]:
        return {"min": self.lo, "max": self.hi}


def _span(lo: float, hi: Optional[float] = None):
    return field(default_factory=lambda: Span(lo, lo if hi is None else hi))


@dataclass(frozen=True)
class ScenarioConfig:
    """Initial Conditions table; every row is a {min, max} span in table units"""

    range_km: Span = _span(50.0, 55.0)
    missile_speed: Span = _span(3000.0)
    target_speed: Span = _span(4000.0)
    theta_deg: Span = _span(80.0, 100.0)
    phi_deg: Span = _span(-10.0, 10.0)
    alpha_deg: Span = _span(-10.0, 10.0)
    beta_deg: Span = _span(-10.0, 10.0)
    heading_error_deg: Span = _span(0.0, 5.0)
    attitude_error_deg: Span = _span(0.0, 5.0)
    target_accel_g: Span = _span(0.0, 5.0)
    bang_duration: Span = _span(1.0, 4.0)
    bang_start: Span = _span(0.0, 6.0)
    s_period: Span = _span(1.0, 5.0)
    s_offset: Span = _span(1.0, 5.0)
    roll_period: Span = _span(1.0, 5.0)
    roll_offset: Span = _span(1.0, 5.0)
    com_pct: Span = _span(-2.5, 2.5)
    e_theta: Span = _span(-1e-3, 1e-3)
    e_omega: Span = _span(-1e-3, 1e-3)
    sigma_theta: Span = _span(1e-3)
    sigma_omega: Span = _span(1e-3)
    tau_u_ms: Span = _span(20.0)
    tau_theta_ms: Span = _span(20.0)
    maneuver_mix: Dict[str, float] = field(default_factory=lambda: {MANEUVER_BANG_BANG: 0.5, MANEUVER_VERTICAL_S: 0.5})
    dry_mass: float = 10.0
    colatitude_deg: float = 0.0
    longitude_deg: float = 0.0
    altitude_km: float = 50.0
    max_retries: int = 100

    def __post_init__(self):
        unknown = set(self.maneuver_mix) - set(MANEUVER_KINDS)
        if unknown:
            raise ConfigFault(f"unknown maneuver kinds in mix: {sorted(unknown)}")
        if any(w < 0 for w in self.maneuver_mix.values()):
            raise ConfigFault("maneuver mix weights must be non-negative")
        if self.target_accel_g.hi > 5.0 + 1e-12 or self.target_accel_g.lo < 0.0:
            raise ConfigFault("target acceleration must lie within [0, 5] g")
        if self.max_retries < 1:
            raise ConfigFault("max_retries must be at least 1")
        if self.dry_mass <= 0.0:
            raise ConfigFault("dry mass must be positive")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        kwargs: Dict[str, Any] = {}
        spans = {f.name for f in dataclasses.fields(cls) if f.type in (Span, "Span")}
        for key, value in (data or {}).items():
            if key in spans:
                kwargs[key] = Span.parse(key, value)
            elif key == "maneuver_mix":
                kwargs[key] = {str(k): float(v) for k, v in dict(value).items()}
            elif key == "max_retries":
                kwargs[key] = int(value)
            elif key in ("dry_mass", "colatitude_deg", "longitude_deg", "altitude_km"):
                kwargs[key] = float(value)
            else:
                raise ConfigFault(f"unknown scenario key {key!r}")
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.to_dict() if isinstance(value, Span) else value
        return out

    def gravity(self) -> GravityModel:
        return GravityModel(
            colatitude=np.radians(self.colatitude_deg),
            longitude=np.radians(self.longitude_deg),
            altitude=self.altitude_km * 1e3,
        )


@dataclass(frozen=True)
class EngagementGeometry:
    lead_angle: float
    los_angle: float
    time_of_flight: float
    closing_velocity: float
    normal: np.ndarray


@dataclass
class Scenario:
    r_m: np.ndarray
    v_m: np.ndarray
    q: np.ndarray
    r_t: np.ndarray
    v_t: np.ndarray
    maneuver: ManeuverSpec
    sensor: SensorErrorConfig
    tau_u: float
    com_offset: np.ndarray
    geometry: EngagementGeometry
    v_collision: np.ndarray
    heading_error: float
    attitude_error: float
    retries: int = 0

    def initial_state(self, airframe: Airframe, rng: Optional[np.random.Generator] = None) -> EngagementState:
        mass = airframe.initial_mass_state(self.com_offset, rng)
        return make_state(self.r_m, self.v_m, self.q, np.zeros(3), self.r_t, self.v_t, mass)


def target_position(range_m: float, theta: float, phi: float) -> np.ndarray:
    return range_m * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def target_velocity(speed: float, alpha: float, beta: float) -> np.ndarray:
    return np.array([
        -speed * np.cos(beta) * np.cos(alpha),
        -speed * np.cos(beta) * np.sin(alpha),
        speed * np.sin(beta),
    ])


def _lead_solution(r_tm: np.ndarray, v_eff: np.ndarray, v_t: np.ndarray, speed: float):
    rng_m = float(np.linalg.norm(r_tm))
    los = r_tm / rng_m
    perp = v_eff - (v_eff @ los) * los
    p = float(np.linalg.norm(perp))
    if p <= 1e-9 * max(1.0, float(np.linalg.norm(v_eff))):
        e2 = any_orthogonal(los)
        sin_l = 0.0
    else:
        e2 = perp / p
        sin_l = p / speed
    if sin_l > 1.0:
        raise InfeasibleGeometry(f"lead angle argument {sin_l:.3f} exceeds 1")
    cos_l = np.sqrt(1.0 - sin_l * sin_l)
    v_m = speed * (cos_l * los + sin_l * e2)
    v_c = speed * cos_l - float(v_t @ los)
    if v_c <= 0.0:
        raise InfeasibleGeometry(f"non-positive closing velocity {v_c:.1f} m/s")
    normal = unit(np.cross(e2, los))
    return v_m, float(np.arcsin(sin_l)), rng_m / v_c, v_c, los, normal


def _los_angle(los: np.ndarray, normal: np.ndarray) -> float:
    x = np.array([1.0, 0.0, 0.0])
    xp = x - (x @ normal) * normal
    if np.linalg.norm(xp) < 1e-9:
        xp = any_orthogonal(normal)
    xp = unit(xp)
    return float(np.arctan2(np.cross(xp, los) @ normal, xp @ los))


def collision_triangle_velocity(
    r_t: np.ndarray,
    v_t: np.ndarray,
    speed: float,
    gravity: Optional[GravityModel] = None,
    r_m: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, EngagementGeometry]:
    """
    Missile velocity of magnitude speed that puts it on a collision triangle
    - pass 1 ignores gravity and yields t_f
    - pass 2 leads the relative gravity Δg = g_T − g_M, which shrinks linearly to zero at intercept (Δg·t_f/3)
    """
    if speed <= 0.0:
        raise InfeasibleGeometry("missile speed must be positive")
    r_m = np.zeros(3) if r_m is None else np.asarray(r_m, dtype=np.float64)
    r_tm = np.asarray(r_t, dtype=np.float64) - r_m
    v_t = np.asarray(v_t, dtype=np.float64)
    v_m, lead, t_f, v_c, los, normal = _lead_solution(r_tm, v_t, v_t, speed)
    if gravity is not None and gravity.enabled:
        dg = gravity.accel(np.asarray(r_t, dtype=np.float64)) - gravity.accel(r_m)
        v_eff = v_t + dg * (t_f / 3.0)
        v_m, lead, t_f, v_c, los, normal = _lead_solution(r_tm, v_eff, v_t, speed)
    geometry = EngagementGeometry(
        lead_angle=lead,
        los_angle=_los_angle(los, normal),
        time_of_flight=t_f,
        closing_velocity=v_c,
        normal=normal,
    )
    return v_m, geometry


def perturb_heading(v_m: np.ndarray, heading_error: float, rng: np.random.Generator) -> np.ndarray:
    v_m = np.asarray(v_m, dtype=np.float64)
    if heading_error <= 0.0:
        return v_m.copy()
    return float(np.linalg.norm(v_m)) * sample_cap(v_m, heading_error, rng)


def initial_attitude(v_m: np.ndarray, attitude_error: float, rng: np.random.Generator) -> np.ndarray:
    """Body x within attitude_error of v̂_M, free roll about it"""
    b1 = sample_cap(v_m, attitude_error, rng)
    roll = rng.uniform(0.0, 2.0 * np.pi)
    e1, e2 = orthonormal_pair(b1)
    b2 = np.cos(roll) * e1 + np.sin(roll) * e2
    b3 = np.cross(b1, b2)
    return quat_from_dcm(np.vstack((b1, b2, b3)))


def _draw_maneuver(cfg: ScenarioConfig, v_t: np.ndarray, rng: np.random.Generator) -> ManeuverSpec:
    kinds = [k for k in MANEUVER_KINDS if cfg.maneuver_mix.get(k, 0.0) > 0.0]
    if not kinds:
        return ManeuverSpec()
    weights = np.array([cfg.maneuver_mix[k] for k in kinds])
    kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]
    accel = cfg.target_accel_g.draw(rng) * G0
    e1, e2 = orthonormal_pair(v_t)
    psi = rng.uniform(0.0, 2.0 * np.pi)
    lateral = np.cos(psi) * e1 + np.sin(psi) * e2
    if kind == MANEUVER_BANG_BANG:
        return ManeuverSpec(kind, accel, start=cfg.bang_start.draw(rng), duration=cfg.bang_duration.draw(rng),
                            lateral=lateral)
    if kind == MANEUVER_VERTICAL_S:
        return ManeuverSpec(kind, accel, period=cfg.s_period.draw(rng), offset=cfg.s_offset.draw(rng),
                            lateral=lateral)
    if kind == MANEUVER_BARREL_ROLL:
        return ManeuverSpec(kind, accel, period=cfg.roll_period.draw(rng), offset=cfg.roll_offset.draw(rng),
                            lateral=lateral)
    return ManeuverSpec(MANEUVER_NONE)


def sample_scenario(cfg: ScenarioConfig, rng: np.random.Generator, gravity: Optional[GravityModel] = None,
                    radius: float = 0.25, length: float = 1.0) -> Scenario:
    """One random engagement; raises InfeasibleGeometry when the collision triangle does not exist"""
    gravity = cfg.gravity() if gravity is None else gravity
    r_t = target_position(cfg.range_km.draw(rng) * 1e3, np.radians(cfg.theta_deg.draw(rng)),
                          np.radians(cfg.phi_deg.draw(rng)))
    v_t = target_velocity(cfg.target_speed.draw(rng), np.radians(cfg.alpha_deg.draw(rng)),
                          np.radians(cfg.beta_deg.draw(rng)))
    speed = cfg.missile_speed.draw(rng)
    v_collision, geometry = collision_triangle_velocity(r_t, v_t, speed, gravity)

    heading_error = np.radians(cfg.heading_error_deg.draw(rng))
    v_m = perturb_heading(v_collision, heading_error, rng)
    attitude_error = np.radians(cfg.attitude_error_deg.draw(rng))
    q = initial_attitude(v_m, attitude_error, rng)

    maneuver = _draw_maneuver(cfg, v_t, rng)
    com_frac = np.array([cfg.com_pct.draw(rng) for _ in range(3)]) / 100.0
    com_offset = com_frac * np.array([0.5 * length, radius, radius])
    sensor = SensorErrorConfig(
        e_theta=cfg.e_theta.draw(rng),
        e_omega=cfg.e_omega.draw(rng),
        sigma_theta=cfg.sigma_theta.draw(rng),
        sigma_omega=cfg.sigma_omega.draw(rng),
        tau_theta=cfg.tau_theta_ms.draw(rng) * 1e-3,
    )
    tau_u = cfg.tau_u_ms.draw(rng) * 1e-3
    return Scenario(
        r_m=np.zeros(3), v_m=v_m, q=q, r_t=r_t, v_t=v_t,
        maneuver=maneuver, sensor=sensor, tau_u=tau_u, com_offset=com_offset,
        geometry=geometry, v_collision=v_collision,
        heading_error=heading_error, attitude_error=attitude_error,
    )


def sample_feasible(cfg: ScenarioConfig, rng: np.random.Generator, max_retries: Optional[int] = None,
                    gravity: Optional[GravityModel] = None, radius: float = 0.25, length: float = 1.0) -> Scenario:
    """Keep drawing engagements until a collision triangle exists"""
    max_retries = cfg.max_retries if max_retries is None else max_retries
    if max_retries < 1:
        raise ConfigFault("max_retries must be at least 1")
    gravity = cfg.gravity() if gravity is None else gravity
    for attempt in range(max_retries):
        try:
            scenario = sample_scenario(cfg, rng, gravity, radius, length)
        except InfeasibleGeometry as exc:
            log.debug("Infeasible engagement (attempt %d): %s", attempt + 1, exc)
            continue
        scenario.retries = attempt
        if attempt:
            log.debug("Feasible engagement after %d retries", attempt)
        return scenario
    raise InfeasibleConfig(f"no feasible engagement after {max_retries} attempts")
