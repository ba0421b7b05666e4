"""
Monte Carlo harness
- Campaign configuration, named presets, per-episode factory
- Simulator-inaccuracy models (fuel slosh, inertia perturbation, thruster mismatch)
- Statistics, result files, trajectory dumps and replay, training runs
"""
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from src.airframe import DEFAULT_ISP, Airframe, default_thrusters, load_thruster_table, nominal_inertia
from src.dynamics import MANEUVER_BARREL_ROLL, MANEUVER_NONE, GravityModel, SimClock
from src.engagement import (
    CAUSES,
    Controller,
    EngagementConfig,
    EpisodeResult,
    NeverFire,
    RandomFire,
    RewardConfig,
    TerminationConfig,
    run_episode,
)
from src.errors import ConfigFault, InvalidArgument, LoadFault, SimulationError
from src.guidance_pn import LAW_APN, LAW_PN, GuidanceConfig, PNController
from src.logging_setup import get_run_metrics
from src.mathkit import episode_rng
from src.neuralpolicy import NetworkParams, PolicyController, load_weights
from src.ppo import EpisodeRollout, PPOConfig, Trainer
from src.scenario import Scenario, ScenarioConfig, Span, sample_feasible
from src.seeker import GUIDANCE_DT, Seeker, SensorErrorConfig
from src.utils import read_rows_csv, write_json, write_rows_csv
from src.worker_pool import WorkerPool

log = logging.getLogger(__name__)

CONTROLLERS = (LAW_PN, LAW_APN, "policy", "never", "random")
KILL_RADIUS = 0.5
NEAR_MISS = 1.0
# evaluation episodes draw from streams disjoint from training rollouts
EVAL_STREAM_OFFSET = 1 << 32
TRAINING_PRESET = "optimization"


def _table_row(com_pct: float, e: float, sigma: float, tau_ms: float) -> Dict[str, Any]:
    """Scenarios-table row in table units (%, 1e-3, 1e-3 rad, ms)"""
    return {
        "com_pct": [-com_pct, com_pct],
        "e_theta": [-e * 1e-3, e * 1e-3],
        "e_omega": [-e * 1e-3, e * 1e-3],
        "sigma_theta": [sigma * 1e-3, sigma * 1e-3],
        "sigma_omega": [sigma * 1e-3, sigma * 1e-3],
        "tau_u_ms": [tau_ms, tau_ms],
        "tau_theta_ms": [tau_ms, tau_ms],
    }


PRESETS: Dict[str, Dict[str, Any]] = {
    "scenario-1": _table_row(0.0, 0.0, 0.0, 20.0),
    "scenario-2": _table_row(2.5, 0.1, 0.1, 20.0),
    "scenario-3": _table_row(2.5, 1.0, 1.0, 20.0),
    "scenario-4": _table_row(4.0, 0.1, 0.1, 20.0),
    "scenario-5": _table_row(4.0, 1.0, 1.0, 20.0),
    "scenario-6": _table_row(2.5, 1.0, 1.0, 0.0),
    "scenario-7": _table_row(2.5, 1.0, 1.0, 10.0),
    "scenario-8": _table_row(2.5, 1.0, 1.0, 30.0),
    "optimization": _table_row(2.5, 0.0, 0.0, 20.0),
    "weave": dict(_table_row(2.5, 1.0, 1.0, 20.0), maneuver_mix={MANEUVER_BARREL_ROLL: 1.0}),
    "equator": dict(_table_row(2.5, 1.0, 1.0, 20.0), colatitude_deg=90.0, longitude_deg=0.0, altitude_km=1000.0),
    "clean-kill": {
        "heading_error_deg": [0.0, 0.0],
        "maneuver_mix": {MANEUVER_NONE: 1.0},
        "tau_u_ms": [0.0, 0.0],
        "tau_theta_ms": [0.0, 0.0],
    },
    "open-loop": {
        "heading_error_deg": [0.0, 0.0],
        "maneuver_mix": {MANEUVER_NONE: 1.0},
    },
    "reduced-training": dict(
        _table_row(1.0, 0.0, 0.0, 20.0),
        heading_error_deg=[0.0, 2.0],
        target_accel_g=[0.0, 2.0],
    ),
}

_EXTENDED_ROWS = ((50, 55, 80, 110), (50, 55, 100, 120), (50, 55, 110, 130), (50, 55, 120, 140),
                  (30, 55, 80, 110), (30, 55, 100, 120), (30, 55, 110, 130))
for _i, (_r0, _r1, _t0, _t1) in enumerate(_EXTENDED_ROWS, start=1):
    PRESETS[f"extended-{_i}"] = dict(PRESETS["scenario-2"], range_km=[_r0, _r1], theta_deg=[_t0, _t1])


def apply_preset(scenario: Mapping[str, Any], preset: Optional[str]) -> Dict[str, Any]:
    """Preset rows replace whole scenario keys"""
    out = dict(scenario or {})
    if not preset:
        return out
    if preset not in PRESETS:
        raise ConfigFault(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    out.update(PRESETS[preset])
    return out


def _typed(cls, data: Optional[Mapping[str, Any]], section: str):
    data = dict(data or {})
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ConfigFault(f"unknown {section} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except InvalidArgument as exc:
        raise ConfigFault(f"{section}: {exc}") from exc
    except TypeError as exc:
        raise ConfigFault(f"{section}: {exc}") from exc


@dataclass(frozen=True)
class AirframeConfig:
    fuel_capacity: float = 25.0
    isp: float = DEFAULT_ISP
    radius: float = 0.25
    length: float = 1.0
    thruster_table: Optional[str] = None

    def build(self, dry_mass: float) -> Airframe:
        if self.thruster_table:
            thrusters = load_thruster_table(Path(self.thruster_table))
        else:
            thrusters = default_thrusters(self.radius, self.length)
        return Airframe(thrusters=thrusters, dry_mass=dry_mass, fuel_capacity=self.fuel_capacity,
                        isp=self.isp, radius=self.radius, length=self.length)


@dataclass(frozen=True)
class InaccuracyConfig:
    fuel_slosh: bool = False
    inertia_perturbation: float = 0.0
    thruster_mismatch: bool = False
    mismatch_range: tuple = (0.80, 1.00)
    max_rejections: int = 100

    def __post_init__(self):
        if not 0.0 <= self.inertia_perturbation < 1.0:
            raise ConfigFault("inertia_perturbation must lie in [0, 1)")
        lo, hi = self.mismatch_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigFault("mismatch_range must satisfy 0 < lo <= hi <= 1")

    @property
    def active(self) -> bool:
        return self.fuel_slosh or self.inertia_perturbation > 0.0 or self.thruster_mismatch

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "InaccuracyConfig":
        data = dict(data or {})
        if "mismatch_range" in data:
            data["mismatch_range"] = tuple(float(v) for v in data["mismatch_range"])
        return _typed(cls, data, "inaccuracy")


def perturbed_inertia(airframe: Airframe, fraction: float, rng: np.random.Generator, max_rejections: int = 100):
    """
    Diagonal scale 1 + U(±f), symmetric off-diagonals U(±f) kg·m²
    - the draw must stay positive definite down to dry mass
    """
    dry = np.diag(nominal_inertia(airframe.dry_mass, airframe.radius, airframe.length))
    iu = np.triu_indices(3, 1)
    for attempt in range(max_rejections):
        scale = 1.0 + rng.uniform(-fraction, fraction, size=3)
        offdiag = np.zeros((3, 3))
        offdiag[iu] = rng.uniform(-fraction, fraction, size=3)
        offdiag = offdiag + offdiag.T
        if np.linalg.eigvalsh(np.diag(dry * scale) + offdiag).min() > 0.0:
            if attempt:
                log.debug("Inertia perturbation accepted after %d rejections", attempt)
            return scale, offdiag
    raise ConfigFault(f"no positive-definite inertia perturbation after {max_rejections} draws")


def apply_inaccuracy_models(cfg: InaccuracyConfig, airframe: Airframe, rng: np.random.Generator,
                            com_bound: float = 0.025) -> Airframe:
    """Per-episode physical perturbations; nominal airframe when every flag is off"""
    if not cfg.active:
        return airframe
    out = airframe
    if cfg.inertia_perturbation > 0.0:
        scale, offdiag = perturbed_inertia(airframe, cfg.inertia_perturbation, rng, cfg.max_rejections)
        out = dataclasses.replace(out, inertia_scale=scale, inertia_offdiag=offdiag)
    if cfg.thruster_mismatch:
        index = int(rng.integers(0, len(out.thrusters)))
        out = out.with_thrust_scale(index, float(rng.uniform(*cfg.mismatch_range)))
    if cfg.fuel_slosh:
        out = dataclasses.replace(out, fuel_slosh=True, slosh_bound=com_bound)
    return out


@dataclass
class CampaignConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    airframe: AirframeConfig = field(default_factory=AirframeConfig)
    engagement: EngagementConfig = field(default_factory=EngagementConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    inaccuracy: InaccuracyConfig = field(default_factory=InaccuracyConfig)
    controller: str = LAW_PN
    weights: Optional[str] = None
    policy_mode: str = "argmax"
    episodes: int = 1000
    seed: int = 0
    workers: int = 1
    output_dir: Optional[Path] = None
    preset: Optional[str] = None

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigFault("episode count must be at least 1")
        if self.controller not in CONTROLLERS:
            raise ConfigFault(f"unknown controller {self.controller!r}; choose from {list(CONTROLLERS)}")
        if self.controller == "policy" and not self.weights:
            raise ConfigFault("policy controller needs a weight file")

    @property
    def com_bound(self) -> float:
        return max(abs(self.scenario.com_pct.lo), abs(self.scenario.com_pct.hi)) / 100.0


def campaign_from_config(config: Mapping[str, Any], **overrides) -> CampaignConfig:
    """
    Typed campaign from the merged configuration tree
    - overrides (CLI flags) win over the `campaign` section; None values are ignored
    """
    campaign = dict(config.get("campaign") or {})
    campaign.update({k: v for k, v in overrides.items() if v is not None})
    preset = campaign.pop("preset", None)
    six_dof = campaign.pop("six_dof", None)
    controller = campaign.get("controller", LAW_PN)

    scenario = ScenarioConfig.from_dict(apply_preset(config.get("scenario"), preset))
    if six_dof is None:
        # the PN/APN benchmark flies with attitude frozen
        six_dof = controller not in (LAW_PN, LAW_APN)
    engagement = EngagementConfig(
        clock=_typed(SimClock, config.get("clock"), "clock"),
        reward=_typed(RewardConfig, config.get("reward"), "reward"),
        termination=_typed(TerminationConfig, config.get("termination"), "termination"),
        six_dof=bool(six_dof),
        zero_init_filter=bool(campaign.pop("zero_init_filter", False)),
    )
    guidance = dict(config.get("guidance") or {})
    if controller in (LAW_PN, LAW_APN):
        guidance["law"] = controller
    if "output_dir" in campaign and campaign["output_dir"] is not None:
        campaign["output_dir"] = Path(campaign["output_dir"])
    known = {f.name for f in dataclasses.fields(CampaignConfig)}
    unknown = set(campaign) - known
    if unknown:
        raise ConfigFault(f"unknown campaign keys: {sorted(unknown)}")
    return CampaignConfig(
        scenario=scenario,
        airframe=_typed(AirframeConfig, config.get("airframe"), "airframe"),
        engagement=engagement,
        guidance=_typed(GuidanceConfig, guidance, "guidance"),
        inaccuracy=InaccuracyConfig.from_dict(config.get("inaccuracy")),
        preset=preset,
        **campaign,
    )


def training_campaign(config: Mapping[str, Any], **overrides) -> CampaignConfig:
    """Campaign for PPO rollouts; without a preset the sensor errors are zeroed (optimization row)"""
    if overrides.get("preset") is None and not (config.get("campaign") or {}).get("preset"):
        overrides["preset"] = TRAINING_PRESET
    overrides["controller"] = "never"
    return campaign_from_config(config, **overrides)


@dataclass
class EpisodeFactory:
    """Builds and runs episode `index` from its own random streams; picklable for worker processes"""

    scenario_cfg: ScenarioConfig
    engagement_cfg: EngagementConfig
    airframe: Airframe
    gravity: GravityModel
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    inaccuracy: InaccuracyConfig = field(default_factory=InaccuracyConfig)
    controller: str = LAW_PN
    params: Optional[NetworkParams] = None
    policy_mode: str = "argmax"
    seed: int = 0
    com_bound: float = 0.025

    @classmethod
    def from_campaign(cls, cfg: CampaignConfig, params: Optional[NetworkParams] = None) -> "EpisodeFactory":
        if cfg.controller == "policy" and params is None:
            params = load_weights(Path(cfg.weights))
        return cls(
            scenario_cfg=cfg.scenario,
            engagement_cfg=cfg.engagement,
            airframe=cfg.airframe.build(cfg.scenario.dry_mass),
            gravity=cfg.scenario.gravity(),
            guidance=cfg.guidance,
            inaccuracy=cfg.inaccuracy,
            controller=cfg.controller,
            params=params,
            policy_mode=cfg.policy_mode,
            seed=cfg.seed,
            com_bound=cfg.com_bound,
        )

    def scenario(self, index: int) -> Scenario:
        return sample_feasible(self.scenario_cfg, episode_rng(self.seed, index, "scenario"), gravity=self.gravity,
                               radius=self.airframe.radius, length=self.airframe.length)

    def airframe_for(self, index: int) -> Airframe:
        return apply_inaccuracy_models(self.inaccuracy, self.airframe, episode_rng(self.seed, index, "inaccuracy"),
                                       self.com_bound)

    def make_controller(self, index: int, scenario: Scenario, airframe: Airframe,
                        kind: Optional[str] = None, mode: Optional[str] = None) -> Controller:
        kind = kind or self.controller
        if kind in (LAW_PN, LAW_APN):
            guidance = dataclasses.replace(self.guidance, law=kind)
            return PNController(guidance, airframe.thrusters, scenario.sensor.tau_theta,
                                self.engagement_cfg.clock.guidance_dt)
        if kind == "never":
            return NeverFire()
        if kind == "random":
            return RandomFire(episode_rng(self.seed, index, "policy"))
        if kind == "policy":
            if self.params is None:
                raise ConfigFault("policy controller has no parameters")
            return PolicyController(self.params, episode_rng(self.seed, index, "policy"), mode or self.policy_mode)
        raise ConfigFault(f"unknown controller {kind!r}")

    def _run(self, index: int, controller_for, record: bool):
        scenario = self.scenario(index)
        airframe = self.airframe_for(index)
        controller = controller_for(scenario, airframe)
        slosh_rng = episode_rng(self.seed, index, "slosh") if airframe.fuel_slosh else None
        result = run_episode(scenario, controller, airframe, self.gravity, self.engagement_cfg,
                             episode_rng(self.seed, index, "sensors"), slosh_rng, index=index, record=record)
        return result, controller

    def run(self, index: int, record: bool = False, kind: Optional[str] = None) -> EpisodeResult:
        """One episode; simulation faults become failed results, configuration faults propagate"""
        t0 = time.perf_counter()
        try:
            result, _ = self._run(index, lambda s, a: self.make_controller(index, s, a, kind), record)
        except (ConfigFault, LoadFault):
            raise
        except SimulationError as exc:
            log.warning("Episode %d failed: %s", index, exc)
            return EpisodeResult.from_fault(index, exc)
        get_run_metrics().log_episode(time.perf_counter() - t0, result.steps)
        return result

    def rollout(self, index: int, params: NetworkParams) -> EpisodeRollout:
        """Sampled-mode policy episode with the record PPO trains on"""
        try:
            result, ctrl = self._run(
                index, lambda s, a: PolicyController(params, episode_rng(self.seed, index, "policy"), "sample"), False)
        except (ConfigFault, LoadFault):
            raise
        except SimulationError as exc:
            log.warning("Rollout %d failed: %s", index, exc)
            result, ctrl = EpisodeResult.from_fault(index, exc), None
        if ctrl is None or not ctrl.actions:
            obs_dim, act_dim = params.policy_shape.obs_dim, params.act_dim
            empty = np.zeros(0)
            return EpisodeRollout(np.zeros((0, obs_dim)), np.zeros((0, act_dim), dtype=np.int64), empty, empty,
                                  empty, empty, result)
        return EpisodeRollout(
            obs=np.array(ctrl.observations),
            actions=np.array(ctrl.actions, dtype=np.int64),
            log_probs=np.array(ctrl.log_probs),
            shaping=np.asarray(result.shaping),
            terminal=np.asarray(result.terminal),
            values=np.array(ctrl.values),
            result=result,
        )


@dataclass
class CampaignStats:
    episodes: int
    failed: int
    hit_100: float
    hit_50: float
    fuel_mean: float
    fuel_std: float
    fuel_max: float
    miss_median: float
    causes: Dict[str, int]
    retries_total: int
    retries_max: int

    def as_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def row(self, label: str = "") -> Dict[str, Any]:
        """Flat row in the layout of the miss/fuel tables"""
        out = {"case": label, "episodes": self.episodes, "failed": self.failed,
               "miss_lt_100cm_pct": 100.0 * self.hit_100, "miss_lt_50cm_pct": 100.0 * self.hit_50,
               "fuel_mean": self.fuel_mean, "fuel_std": self.fuel_std, "fuel_max": self.fuel_max,
               "miss_median": self.miss_median, "retries_total": self.retries_total}
        out.update({f"cause_{k}": v for k, v in self.causes.items()})
        return out


def compute_stats(results: Sequence[EpisodeResult]) -> CampaignStats:
    """Aggregate episode results; exact summation keeps the stats independent of result order"""
    n = len(results)
    if n == 0:
        raise InvalidArgument("no episode results to aggregate")
    misses = sorted(r.miss for r in results)
    fuel = [r.fuel_used for r in results if not r.failed] or [0.0]
    fuel_mean = math.fsum(fuel) / len(fuel)
    fuel_var = math.fsum((f - fuel_mean) ** 2 for f in fuel) / len(fuel)
    causes = {c: 0 for c in CAUSES}
    for r in results:
        causes[r.cause] = causes.get(r.cause, 0) + 1
    return CampaignStats(
        episodes=n,
        failed=sum(1 for r in results if r.failed),
        hit_100=sum(1 for m in misses if m < NEAR_MISS) / n,
        hit_50=sum(1 for m in misses if m < KILL_RADIUS) / n,
        fuel_mean=fuel_mean,
        fuel_std=math.sqrt(fuel_var),
        fuel_max=max(fuel),
        miss_median=float(np.median(misses)),
        causes=dict(sorted(causes.items())),
        retries_total=sum(r.retries for r in results),
        retries_max=max(r.retries for r in results),
    )


@dataclass
class CampaignOutcome:
    stats: CampaignStats
    results: List[EpisodeResult]
    files: Dict[str, Path] = field(default_factory=dict)


def _chunksize(episodes: int, workers: int) -> int:
    return max(1, episodes // (4 * max(1, workers)))


def run_campaign(cfg: CampaignConfig, factory: Optional[EpisodeFactory] = None,
                 params: Optional[NetworkParams] = None) -> CampaignOutcome:
    """Run cfg.episodes episodes over the worker pool, aggregate, write result files"""
    factory = factory or EpisodeFactory.from_campaign(cfg, params)
    log.info("Campaign: %d episodes, controller=%s, preset=%s, %s, workers=%d, seed=%d",
             cfg.episodes, cfg.controller, cfg.preset or "-", "6-DOF" if cfg.engagement.six_dof else "3-DOF",
             cfg.workers, cfg.seed)
    t0 = time.perf_counter()
    with WorkerPool(cfg.workers, _chunksize(cfg.episodes, cfg.workers)) as pool:
        results = pool.map(factory.run, range(cfg.episodes))
    stats = compute_stats(results)
    get_run_metrics().log_fault(stats.failed)
    log.info("Campaign done in %.1fs: <100cm %.1f%%, <50cm %.1f%%, fuel %.2f ± %.2f (max %.2f) kg, retries %d",
             time.perf_counter() - t0, 100 * stats.hit_100, 100 * stats.hit_50, stats.fuel_mean, stats.fuel_std,
             stats.fuel_max, stats.retries_total)
    outcome = CampaignOutcome(stats, results)
    if cfg.output_dir is not None:
        outcome.files = write_campaign(cfg.output_dir, stats, results, cfg.preset or cfg.controller)
    return outcome


def write_campaign(out_dir: Path, stats: CampaignStats, results: Sequence[EpisodeResult],
                   label: str = "") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "episodes": write_rows_csv(out_dir / "episodes.csv", [r.summary() for r in results]),
        "stats_json": write_json(out_dir / "stats.json", stats.as_dict()),
        "stats_csv": write_rows_csv(out_dir / "stats.csv", [stats.row(label)]),
    }


def run_benchmark(cfg: CampaignConfig) -> Dict[str, CampaignOutcome]:
    """PN and APN over the same episode streams"""
    out: Dict[str, CampaignOutcome] = {}
    for law in (LAW_PN, LAW_APN):
        sub_dir = cfg.output_dir / law if cfg.output_dir is not None else None
        law_cfg = dataclasses.replace(cfg, controller=law, output_dir=sub_dir,
                                      guidance=dataclasses.replace(cfg.guidance, law=law))
        out[law] = run_campaign(law_cfg)
    if cfg.output_dir is not None:
        write_rows_csv(Path(cfg.output_dir) / "bench.csv", [o.stats.row(law) for law, o in out.items()])
    return out


def dump_trajectory(cfg: CampaignConfig, index: int = 0, out_dir: Optional[Path] = None,
                    params: Optional[NetworkParams] = None):
    """
    One recorded episode
    - trajectory.csv: one row per guidance step
    - track.csv: positions at every simulation substep
    """
    factory = EpisodeFactory.from_campaign(cfg, params)
    result = factory.run(index, record=True)
    if result.failed:
        raise SimulationError(f"episode {index} failed: {result.fault}", episode=index)
    files = {}
    out_dir = out_dir or cfg.output_dir
    if out_dir is not None:
        out_dir = Path(out_dir)
        files["trajectory"] = write_rows_csv(out_dir / "trajectory.csv", result.trajectory)
        files["track"] = write_rows_csv(out_dir / "track.csv", result.track)
        files["summary"] = write_json(out_dir / "episode.json", result.summary())
    log.info("Episode %d: %s, miss %.3f m, fuel %.2f kg, %d steps", index, result.cause, result.miss,
             result.fuel_used, result.steps)
    return result, files


def replay_trajectory(rows: Sequence[Mapping[str, Any]], tau_theta: float, guidance_dt: float = GUIDANCE_DT,
                      zero_init: bool = False) -> np.ndarray:
    """Feed logged measurements back through the seeker pipeline; returns the reproduced observations"""
    seeker = Seeker(SensorErrorConfig(tau_theta=tau_theta), rng=None, guidance_dt=guidance_dt, zero_init=zero_init)
    out = []
    for k, row in enumerate(rows):
        if k:
            seeker.advance(guidance_dt)
        theta_true = np.array([row["theta_u_true"], row["theta_v_true"]], dtype=np.float64)
        theta_meas = np.array([row["theta_u_meas"], row["theta_v_meas"]], dtype=np.float64)
        omega_hat = np.array([row["omega_hat_x"], row["omega_hat_y"], row["omega_hat_z"]], dtype=np.float64)
        out.append(seeker.process(float(row["t"]), theta_true, theta_meas, omega_hat).obs)
    return np.array(out)


def replay_file(path: Path, tau_theta: float, guidance_dt: float = GUIDANCE_DT) -> bool:
    """True when the logged observations are reproduced bit-exactly"""
    rows = read_rows_csv(Path(path))
    obs = replay_trajectory(rows, tau_theta, guidance_dt)
    logged = np.array([[row[f"obs_{i}"] for i in range(obs.shape[1])] for row in rows], dtype=np.float64)
    return bool(np.array_equal(obs, logged))


@dataclass
class TrainingReport:
    history: List[Dict[str, Any]]
    eval_stats: Dict[str, CampaignStats]
    weights: Optional[Path] = None

    @property
    def improved(self) -> bool:
        rewards = [h["mean_reward"] for h in self.history]
        if len(rewards) < 2:
            return False
        k = min(10, len(rewards) // 2)
        return float(np.mean(rewards[-k:])) > float(np.mean(rewards[:k]))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "updates": len(self.history),
            "improved": self.improved,
            "weights": str(self.weights) if self.weights else None,
            "eval": {k: v.as_dict() for k, v in self.eval_stats.items()},
        }


def evaluate(cfg: CampaignConfig, params: NetworkParams, episodes: int,
             baselines: Sequence[str] = ("never", "random")) -> Dict[str, CampaignStats]:
    """Argmax-mode policy next to the baseline controllers on identical evaluation streams"""
    out = {}
    factory = EpisodeFactory.from_campaign(dataclasses.replace(cfg, controller="never", weights=None))
    factory.params = params
    indices = range(EVAL_STREAM_OFFSET, EVAL_STREAM_OFFSET + episodes)
    with WorkerPool(cfg.workers, _chunksize(episodes, cfg.workers)) as pool:
        for kind in ("policy",) + tuple(baselines):
            job = _EvalJob(factory, kind)
            out[kind] = compute_stats(pool.map(job, indices))
            log.info("Eval %-7s: <50cm %.1f%%, <100cm %.1f%%, fuel %.2f kg", kind, 100 * out[kind].hit_50,
                     100 * out[kind].hit_100, out[kind].fuel_mean)
    return out


@dataclass
class _EvalJob:
    factory: EpisodeFactory
    kind: str

    def __call__(self, index: int) -> EpisodeResult:
        return self.factory.run(index, kind=self.kind)


def run_training(cfg: CampaignConfig, ppo_cfg: PPOConfig, out_dir: Optional[Path] = None,
                 params: Optional[NetworkParams] = None, updates: Optional[int] = None) -> TrainingReport:
    """PPO run, checkpoints, then argmax evaluation against never/random baselines"""
    train_cfg = dataclasses.replace(cfg, controller="never", weights=None)
    factory = EpisodeFactory.from_campaign(train_cfg)
    if params is None:
        params = NetworkParams.initialize(episode_rng(cfg.seed, 0, "policy"))
    out_dir = Path(out_dir) if out_dir is not None else cfg.output_dir
    log_path = out_dir / "train_log.jsonl" if out_dir is not None else None
    if log_path is not None and log_path.exists():
        log_path.unlink()
    with WorkerPool(cfg.workers) as pool:
        trainer = Trainer(factory, params, ppo_cfg, pool, log_path=log_path,
                          checkpoint_dir=out_dir / "checkpoints" if out_dir is not None else None)
        history = trainer.train(updates)
    eval_stats = evaluate(cfg, trainer.params, ppo_cfg.eval_episodes) if ppo_cfg.eval_episodes else {}
    report = TrainingReport(history, eval_stats)
    if out_dir is not None:
        report.weights = out_dir / "checkpoints" / "policy_final.ignw"
        write_json(out_dir / "training.json", report.as_dict())
        if eval_stats:
            write_rows_csv(out_dir / "eval.csv", [s.row(k) for k, s in eval_stats.items()])
    return report
