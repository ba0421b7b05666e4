"""
Episode orchestration
- 25 Hz guidance loop over the dual-timestep propagator
- Termination rules, miss distance, shaping / terminal rewards
- Optional per-step trajectory record and 3-D track
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from src.airframe import ActionCommand, Airframe, N_GROUPS
from src.dynamics import EngagementState, GravityModel, Propagator, SimClock, target_accel
from src.errors import FovFault, IntegrationFault, InvalidArgument, SimulationError
from src.mathkit import angle_between, dcm_from_quat, quat_angle_between
from src.scenario import Scenario
from src.seeker import Seeker, SensorPacket

log = logging.getLogger(__name__)

CAUSE_WINDOW_EXIT = "intercept-window-exit"
CAUSE_FOV = "fov-violation"
CAUSE_RATE = "rate-limit"
CAUSE_FUEL = "fuel-exhausted"
CAUSE_MAX_TIME = "max-time"
CAUSE_FAULT = "integration-fault"
CAUSES = (CAUSE_WINDOW_EXIT, CAUSE_FOV, CAUSE_RATE, CAUSE_FUEL, CAUSE_MAX_TIME, CAUSE_FAULT)

TIME_EPS = 1e-9


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 1.0
    beta: float = -0.02
    delta: float = -0.1
    eta: float = 10.0
    sigma_rate: float = 0.04
    terminal_miss: float = 0.5


@dataclass(frozen=True)
class TerminationConfig:
    half_fov_deg: float = 45.0
    rate_limit: float = 12.0
    max_time: float = 20.0

    def __post_init__(self):
        if min(self.half_fov_deg, self.rate_limit, self.max_time) <= 0.0:
            raise InvalidArgument("termination thresholds must be positive")


@dataclass(frozen=True)
class EngagementConfig:
    clock: SimClock = field(default_factory=SimClock)
    reward: RewardConfig = field(default_factory=RewardConfig)
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    six_dof: bool = True
    zero_init_filter: bool = False


@dataclass
class RewardTerms:
    tracking: float = 0.0
    control: float = 0.0
    attitude: float = 0.0
    terminal: float = 0.0

    @property
    def shaping(self) -> float:
        return self.tracking + self.control + self.attitude

    @property
    def total(self) -> float:
        return self.shaping + self.terminal

    def as_dict(self) -> Dict[str, float]:
        return {"tracking": self.tracking, "control": self.control, "attitude": self.attitude, "terminal": self.terminal}


def reward(theta_rate, action: ActionCommand, q: np.ndarray, q_init: np.ndarray,
           terminal_miss: Optional[float], cfg: RewardConfig) -> RewardTerms:
    """Shaping terms every step; terminal bonus when the final miss is inside the kill radius"""
    rate_norm = float(np.linalg.norm(theta_rate))
    terms = RewardTerms(
        tracking=cfg.alpha * float(np.exp(-rate_norm / cfg.sigma_rate)),
        control=cfg.beta * action.acs_count,
        attitude=cfg.delta * quat_angle_between(q, q_init),
    )
    if terminal_miss is not None and terminal_miss < cfg.terminal_miss:
        terms.terminal = cfg.eta
    return terms


def check_termination(omega: np.ndarray, angles, fuel_used: float, fuel_capacity: float, t: float,
                      passed_minimum: bool, cfg: TerminationConfig) -> Optional[str]:
    """
    First applicable cause, or None
    - angles: iterable of (θ_u, θ_v) pairs to test against the half FOV; None skips the FOV rule
    """
    if passed_minimum:
        return CAUSE_WINDOW_EXIT
    if angles is not None:
        limit = np.radians(cfg.half_fov_deg)
        for pair in angles:
            if np.any(np.abs(pair) > limit):
                return CAUSE_FOV
    if np.any(np.abs(omega) > cfg.rate_limit):
        return CAUSE_RATE
    if fuel_used >= fuel_capacity:
        return CAUSE_FUEL
    if t >= cfg.max_time - TIME_EPS:
        return CAUSE_MAX_TIME
    return None


def vertex_miss(samples) -> float:
    """Minimum range from a parabola through the last three (t, range²) samples"""
    samples = list(samples)
    fmin = min(f for _, f in samples)
    if len(samples) < 3:
        return float(np.sqrt(fmin))
    (t0, f0), (t1, f1), (t2, f2) = samples[-3:]
    s0, s2 = t0 - t1, t2 - t1
    denom = s0 * s2 * (s0 - s2)
    if denom == 0.0:
        return float(np.sqrt(fmin))
    # f(s) = a s² + b s + f1 through (s0, f0), (0, f1), (s2, f2)
    a = (s2 * (f0 - f1) - s0 * (f2 - f1)) / denom
    b = (s0 * s0 * (f2 - f1) - s2 * s2 * (f0 - f1)) / denom
    if a <= 0.0:
        return float(np.sqrt(fmin))
    sv = -b / (2.0 * a)
    if not s0 <= sv <= s2:
        return float(np.sqrt(fmin))
    fv = a * sv * sv + b * sv + f1
    return float(np.sqrt(min(max(fv, 0.0), fmin)))


def closest_approach(r_tm: np.ndarray, v_tm: np.ndarray) -> float:
    """Straight-line closest approach distance; current range if already opening"""
    rv = float(r_tm @ v_tm)
    vv = float(v_tm @ v_tm)
    rr = float(r_tm @ r_tm)
    if rv >= 0.0 or vv == 0.0:
        return float(np.sqrt(rr))
    return float(np.sqrt(max(rr - rv * rv / vv, 0.0)))


@dataclass
class TruthView:
    """Ground truth handed to benchmark controllers"""

    t: float
    r_tm: np.ndarray
    v_tm: np.ndarray
    a_t: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    mass: float


@dataclass
class StepOutcome:
    packet: SensorPacket
    reward: RewardTerms
    done: bool
    cause: Optional[str]


@dataclass
class EpisodeResult:
    index: int
    miss: float
    fuel_used: float
    cause: str
    steps: int
    duration: float
    total_reward: float
    reward_terms: Dict[str, float]
    shaping: np.ndarray
    terminal: np.ndarray
    retries: int = 0
    fault: Optional[dict] = None
    trajectory: Optional[List[dict]] = None
    track: Optional[List[dict]] = None

    @property
    def hit(self) -> bool:
        return self.miss < 0.5

    @property
    def failed(self) -> bool:
        return self.fault is not None

    @classmethod
    def from_fault(cls, index: int, exc: SimulationError, retries: int = 0) -> "EpisodeResult":
        return cls(
            index=index, miss=float("inf"), fuel_used=0.0, cause=exc.kind, steps=0, duration=0.0,
            total_reward=0.0, reward_terms=RewardTerms().as_dict(), shaping=np.zeros(0), terminal=np.zeros(0),
            retries=retries, fault=exc.to_record(),
        )

    def summary(self) -> Dict[str, object]:
        row = {
            "episode": self.index,
            "miss": self.miss,
            "fuel_used": self.fuel_used,
            "cause": self.cause,
            "steps": self.steps,
            "duration": self.duration,
            "total_reward": self.total_reward,
            "retries": self.retries,
        }
        row.update({f"reward_{k}": v for k, v in self.reward_terms.items()})
        return row


class Controller:
    """Maps a sensor packet (and ground truth in benchmark mode) to a group command every 40 ms"""

    name = "controller"

    def reset(self) -> None:
        pass

    def act(self, packet: SensorPacket, truth: TruthView) -> ActionCommand:
        raise NotImplementedError


class NeverFire(Controller):
    name = "never"

    def act(self, packet, truth):
        return ActionCommand.none()


class RandomFire(Controller):
    """Each group fires with probability 1/2"""

    name = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, packet, truth):
        return ActionCommand(tuple(int(b) for b in self.rng.integers(0, 2, size=N_GROUPS)))


class ScriptedController(Controller):
    name = "scripted"

    def __init__(self, schedule: Callable[[float], ActionCommand]):
        self.schedule = schedule

    def act(self, packet, truth):
        return self.schedule(truth.t)


def _trajectory_row(step: int, state: EngagementState, packet: SensorPacket) -> dict:
    row = {"t": state.t, "step": step}
    for name, vec in (("r_m", state.r_m), ("v_m", state.v_m), ("omega", state.omega),
                      ("r_t", state.r_t), ("v_t", state.v_t), ("omega_hat", packet.omega_hat)):
        for axis, value in zip("xyz", vec):
            row[f"{name}_{axis}"] = float(value)
    for i, value in enumerate(state.q):
        row[f"q{i}"] = float(value)
    row["range"] = state.range
    for name, pair in (("true", packet.theta_true), ("meas", packet.theta_meas), ("stab", packet.theta_stab),
                       ("filt", packet.theta_filt), ("rate", packet.theta_rate)):
        row[f"theta_u_{name}"] = float(pair[0])
        row[f"theta_v_{name}"] = float(pair[1])
    for i, value in enumerate(packet.obs):
        row[f"obs_{i}"] = float(value)
    boresight = dcm_from_quat(state.q).T[:, 0]
    row["theta_bv"] = angle_between(state.v_m, boresight)
    row["fuel_used"] = state.fuel_used
    row["mass"] = state.mass.mass
    return row


class EngagementEnv:
    """
    One engagement as an episodic environment
    - reset() -> first SensorPacket
    - step(action) holds the action for one guidance period
    - result() summarizes the finished episode
    """

    def __init__(
        self,
        scenario: Scenario,
        airframe: Airframe,
        gravity: GravityModel,
        cfg: EngagementConfig,
        sensor_rng: np.random.Generator,
        slosh_rng: Optional[np.random.Generator] = None,
        index: int = 0,
        record: bool = False,
    ):
        self.scenario = scenario
        self.airframe = airframe
        self.gravity = gravity
        self.cfg = cfg
        self.sensor_rng = sensor_rng
        self.slosh_rng = slosh_rng
        self.index = index
        self.record = record
        self.done = True

    def reset(self) -> SensorPacket:
        self.state = self.scenario.initial_state(self.airframe, self.slosh_rng)
        self.propagator = Propagator(
            self.airframe, self.gravity, self.scenario.maneuver,
            tau_u=self.scenario.tau_u, six_dof=self.cfg.six_dof, slosh_rng=self.slosh_rng,
        )
        self.seeker = Seeker(
            self.scenario.sensor, self.sensor_rng, self.cfg.clock.guidance_dt,
            zero_init=self.cfg.zero_init_filter, q_ref=self.state.q,
        )
        self.q_init = self.state.q.copy()
        self.k = 0
        self.done = False
        self.cause: Optional[str] = None
        self.fault: Optional[dict] = None
        self.miss: Optional[float] = None
        self.min_range = self.state.range
        self.closing = float(self.state.r_tm @ self.state.v_tm) < 0.0
        self.fine_phase = self.state.range <= self.cfg.clock.fine_range
        self._samples = deque([(self.state.t, self.state.range ** 2)], maxlen=3)
        self.shaping: List[float] = []
        self.terminal: List[float] = []
        self.reward_sums = RewardTerms()
        self.trajectory: Optional[List[dict]] = [] if self.record else None
        self.track: Optional[List[dict]] = [] if self.record else None
        self._append_track()
        try:
            self.packet = self.seeker.sense(self.state.t, self.state.r_m, self.state.r_t, self.state.q,
                                            self.state.omega)
        except FovFault as exc:
            log.debug("Target outside the seeker FOV at episode start: %s", exc)
            self._finish(CAUSE_FOV)
            self.packet = None
        return self.packet

    def truth(self) -> TruthView:
        s = self.state
        return TruthView(
            t=s.t, r_tm=s.r_tm.copy(), v_tm=s.v_tm.copy(),
            a_t=target_accel(self.scenario.maneuver, s.t, s.v_t),
            q=s.q.copy(), omega=s.omega.copy(), mass=s.mass.mass,
        )

    def _append_track(self) -> None:
        if self.track is None:
            return
        s = self.state
        self.track.append({
            "t": s.t,
            "r_m_x": float(s.r_m[0]), "r_m_y": float(s.r_m[1]), "r_m_z": float(s.r_m[2]),
            "r_t_x": float(s.r_t[0]), "r_t_y": float(s.r_t[1]), "r_t_z": float(s.r_t[2]),
        })

    def _finish(self, cause: str, miss: Optional[float] = None) -> None:
        self.done = True
        self.cause = cause
        if miss is None:
            if cause in (CAUSE_FOV, CAUSE_FUEL) and self.fine_phase:
                miss = min(self.min_range, closest_approach(self.state.r_tm, self.state.v_tm))
            else:
                miss = self.min_range
        self.miss = miss

    def _propagate(self) -> None:
        """Substep until the next guidance instant; stops early once the range starts opening"""
        clock = self.cfg.clock
        t_next = (self.k + 1) * clock.guidance_dt
        while t_next - self.state.t > TIME_EPS:
            rng_now = self.state.range
            if rng_now <= clock.fine_range:
                self.fine_phase = True
            dt = min(clock.substep(rng_now), t_next - self.state.t)
            self.state = self.propagator.step(self.state, dt)
            if t_next - self.state.t <= TIME_EPS:
                self.state.t = t_next
            rng_new = self.state.range
            self.min_range = min(self.min_range, rng_new)
            self._samples.append((self.state.t, rng_new * rng_new))
            self._append_track()
            rv = float(self.state.r_tm @ self.state.v_tm)
            if self.closing and rv >= 0.0:
                self._finish(CAUSE_WINDOW_EXIT, min(self.min_range, vertex_miss(self._samples)))
                return
            self.closing = self.closing or rv < 0.0

    def step(self, action: ActionCommand) -> StepOutcome:
        if self.done:
            raise InvalidArgument("episode already finished; call reset()")
        row = _trajectory_row(self.k, self.state, self.packet) if self.record else None
        prev_packet = self.packet
        self.propagator.set_command(action)
        try:
            self._propagate()
        except IntegrationFault as exc:
            log.warning("Episode %d integration fault: %s", self.index, exc)
            self.fault = exc.to_record()
            self._finish(CAUSE_FAULT)
        self.k += 1
        self.seeker.advance(self.cfg.clock.guidance_dt)

        if not self.done:
            try:
                self.packet = self.seeker.sense(self.state.t, self.state.r_m, self.state.r_t, self.state.q,
                                                self.state.omega)
            except FovFault:
                if self.cfg.six_dof:
                    self._finish(CAUSE_FOV)
        if not self.done:
            angles = (self.packet.theta_filt, self.packet.theta_meas) if self.cfg.six_dof else None
            fuel_used = self.airframe.fuel_capacity if self.state.fuel_exhausted else self.state.fuel_used
            cause = check_termination(self.state.omega, angles, fuel_used, self.airframe.fuel_capacity,
                                      self.state.t, False, self.cfg.termination)
            if cause is not None:
                self._finish(cause)

        rates = self.packet.theta_rate if self.packet is not None else prev_packet.theta_rate
        terms = reward(rates, action, self.state.q, self.q_init, self.miss if self.done else None, self.cfg.reward)
        self.shaping.append(terms.shaping)
        self.terminal.append(terms.terminal)
        for name in ("tracking", "control", "attitude", "terminal"):
            setattr(self.reward_sums, name, getattr(self.reward_sums, name) + getattr(terms, name))
        if row is not None:
            row.update({f"a_{i}": b for i, b in enumerate(action.bits)})
            row.update({f"r_{k}": v for k, v in terms.as_dict().items()})
            self.trajectory.append(row)
        return StepOutcome(packet=self.packet, reward=terms, done=self.done, cause=self.cause)

    def result(self) -> EpisodeResult:
        return EpisodeResult(
            index=self.index,
            miss=float(self.miss if self.miss is not None else self.min_range),
            fuel_used=self.state.fuel_used,
            cause=self.cause or "",
            steps=self.k,
            duration=self.state.t,
            total_reward=self.reward_sums.total,
            reward_terms=self.reward_sums.as_dict(),
            shaping=np.array(self.shaping),
            terminal=np.array(self.terminal),
            retries=self.scenario.retries,
            fault=self.fault,
            trajectory=self.trajectory,
            track=self.track,
        )


def run_episode(
    scenario: Scenario,
    controller: Controller,
    airframe: Airframe,
    gravity: GravityModel,
    cfg: EngagementConfig,
    sensor_rng: np.random.Generator,
    slosh_rng: Optional[np.random.Generator] = None,
    index: int = 0,
    record: bool = False,
) -> EpisodeResult:
    env = EngagementEnv(scenario, airframe, gravity, cfg, sensor_rng, slosh_rng, index=index, record=record)
    packet = env.reset()
    controller.reset()
    while not env.done:
        action = controller.act(packet, env.truth())
        packet = env.step(action).packet
    result = env.result()
    log.debug("Episode %d: cause=%s miss=%.3fm fuel=%.2fkg steps=%d",
              index, result.cause, result.miss, result.fuel_used, result.steps)
    return result

