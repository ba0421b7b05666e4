"""
Engine entry point
- montecarlo / simulate / bench / train / gradcheck subcommands
- Loads config.yaml (or --config), applies CLI overrides, sets up logging
- Faults print a JSON record to stderr: exit 2; failed checks exit 1
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from config_loader import get_config
from src.errors import SimulationError
from src.harness import (
    PRESETS,
    campaign_from_config,
    dump_trajectory,
    replay_file,
    run_benchmark,
    run_campaign,
    run_training,
    training_campaign,
)
from src.logging_setup import get_run_metrics, setup_logging
from src.neuralpolicy import load_weights
from src.ppo import PPOConfig, gradient_check

log = logging.getLogger("runner")


def _add_campaign_args(parser: argparse.ArgumentParser, controller: bool = True) -> None:
    parser.add_argument("--preset", choices=sorted(PRESETS), default=None, help="scenario table override")
    if controller:
        parser.add_argument("--controller", choices=["pn", "apn", "policy", "never", "random"], default=None)
        parser.add_argument("--weights", default=None, help="policy weight file (.ignw)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None, help="worker processes (default: EXOIGN_WORKERS)")
    parser.add_argument("--out", default=None, help="output directory")
    dof = parser.add_mutually_exclusive_group()
    dof.add_argument("--six-dof", dest="six_dof", action="store_true", default=None)
    dof.add_argument("--three-dof", dest="six_dof", action="store_false")
    parser.add_argument("--dry-mass", type=float, default=None, help="dry mass override (kg)")
    parser.add_argument("--fuel-slosh", action="store_true", default=None)
    parser.add_argument("--inertia-perturbation", type=float, default=None, help="0.2 or 0.4")
    parser.add_argument("--thruster-mismatch", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="runner")
    parser.add_argument("--config", default="config.yaml", help="YAML or JSON configuration file")
    parser.add_argument("--log-level", default=None)
    subparsers = parser.add_subparsers(dest="command", required=True)

    mc = subparsers.add_parser("montecarlo", help="run a Monte Carlo campaign")
    _add_campaign_args(mc)
    mc.add_argument("--episodes", type=int, default=None)

    sim = subparsers.add_parser("simulate", help="run one recorded episode")
    _add_campaign_args(sim)
    sim.add_argument("--index", type=int, default=0, help="episode index (selects the random streams)")
    sim.add_argument("--replay-check", action="store_true", help="replay the trajectory through the seeker")

    bench = subparsers.add_parser("bench", help="PN and APN benchmark campaigns")
    _add_campaign_args(bench, controller=False)
    bench.add_argument("--episodes", type=int, default=None)

    train = subparsers.add_parser("train", help="PPO meta-RL training run")
    _add_campaign_args(train, controller=False)
    train.add_argument("--updates", type=int, default=None)
    train.add_argument("--eval-episodes", type=int, default=None)
    train.add_argument("--init-weights", default=None, help="start from a weight file")

    grad = subparsers.add_parser("gradcheck", help="verify BPTT gradients by finite differences")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--tolerance", type=float, default=1e-4)

    return parser


def _apply_overrides(config, args) -> None:
    if getattr(args, "dry_mass", None) is not None:
        config.set("scenario.dry_mass", args.dry_mass)
    if getattr(args, "fuel_slosh", None):
        config.set("inaccuracy.fuel_slosh", True)
    if getattr(args, "inertia_perturbation", None) is not None:
        config.set("inaccuracy.inertia_perturbation", args.inertia_perturbation)
    if getattr(args, "thruster_mismatch", None):
        config.set("inaccuracy.thruster_mismatch", True)


def _campaign(config, args, build=campaign_from_config, **extra):
    out = getattr(args, "out", None)
    return build(
        config.config,
        preset=args.preset,
        controller=getattr(args, "controller", None),
        weights=getattr(args, "weights", None),
        seed=args.seed,
        workers=args.workers,
        output_dir=Path(out) if out else None,
        six_dof=args.six_dof,
        **extra,
    )


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def _cmd_montecarlo(config, args) -> int:
    outcome = run_campaign(_campaign(config, args, episodes=args.episodes))
    _print_json(outcome.stats.as_dict())
    for path in outcome.files.values():
        print(f"wrote: {path}")
    return 0


def _cmd_simulate(config, args) -> int:
    cfg = _campaign(config, args, episodes=1)
    result, files = dump_trajectory(cfg, args.index)
    _print_json(result.summary())
    for path in files.values():
        print(f"wrote: {path}")
    if args.replay_check:
        if "trajectory" not in files:
            print("error: --replay-check needs --out", file=sys.stderr)
            return 2
        tau_theta = float(cfg.scenario.tau_theta_ms.lo) * 1e-3
        if cfg.scenario.tau_theta_ms.lo != cfg.scenario.tau_theta_ms.hi:
            print("error: --replay-check needs a fixed tau_theta", file=sys.stderr)
            return 2
        ok = replay_file(files["trajectory"], tau_theta, cfg.engagement.clock.guidance_dt)
        print(f"replay: {'ok' if ok else 'MISMATCH'}")
        return 0 if ok else 1
    return 0


def _cmd_bench(config, args) -> int:
    outcomes = run_benchmark(_campaign(config, args, episodes=args.episodes))
    _print_json({law: o.stats.as_dict() for law, o in outcomes.items()})
    return 0


def _cmd_train(config, args) -> int:
    ppo_section = dict(config.get_ppo_config())
    if args.updates is not None:
        ppo_section["updates"] = args.updates
    if args.eval_episodes is not None:
        ppo_section["eval_episodes"] = args.eval_episodes
    ppo_cfg = PPOConfig.from_dict(ppo_section)
    cfg = _campaign(config, args, build=training_campaign)
    out_dir = cfg.output_dir or Path(config.get("paths", "results", default="results")) / "train"
    params = load_weights(Path(args.init_weights)) if args.init_weights else None
    report = run_training(cfg, ppo_cfg, out_dir=out_dir, params=params)
    _print_json(report.as_dict())
    return 0


def _cmd_gradcheck(args) -> int:
    report = gradient_check(np.random.default_rng(args.seed), tolerance=args.tolerance)
    _print_json(report.as_dict())
    return 0 if report.passed else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = get_config(args.config)
        log_cfg = config.get_logging_config()
        setup_logging(
            level=args.log_level or log_cfg.get("level", "INFO"),
            save_to_file=log_cfg.get("save_to_file", False),
            log_dir=log_cfg.get("log_dir", "logs"),
        )
        _apply_overrides(config, args)

        if args.command == "montecarlo":
            code = _cmd_montecarlo(config, args)
        elif args.command == "simulate":
            code = _cmd_simulate(config, args)
        elif args.command == "bench":
            code = _cmd_bench(config, args)
        elif args.command == "train":
            code = _cmd_train(config, args)
        elif args.command == "gradcheck":
            code = _cmd_gradcheck(args)
        else:
            parser.print_help()
            return 1
    except SimulationError as exc:
        print(json.dumps(exc.to_record(), default=str), file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        log.warning("Interrupted")
        return 130

    get_run_metrics().print_stats()
    return code


if __name__ == "__main__":
    raise SystemExit(main())
