from __future__ import annotations

import argparse
import os
import subprocess
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml


ENGINE_COMMANDS = ("montecarlo", "simulate", "bench", "train", "gradcheck")


def _repo_root() -> Path:
    return Path(__file__).resolve().parents[1]


def _engine_dir(root: Path) -> Path:
    return root / "sim"


def _engine_entrypoint(root: Path) -> Path:
    return _engine_dir(root) / "runner.py"


def _engine_config_path(root: Path) -> Path:
    return _engine_dir(root) / "config.yaml"


def _validate_workers(workers: int) -> int:
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def _load_yaml_dict(path: Path) -> dict:
    if not path.exists():
        return {}
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    return data if isinstance(data, dict) else {}


def _save_yaml_dict(path: Path, data: dict) -> None:
    path.write_text(
        yaml.safe_dump(data, allow_unicode=True, sort_keys=False),
        encoding="utf-8",
    )


def _parse_value(text: str) -> Any:
    """YAML scalar typing: 8 -> int, 0.2 -> float, true -> bool, [50, 55] -> list"""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _set_dotted(data: dict, dotted: str, value: Any) -> None:
    keys = [k for k in dotted.split(".") if k]
    if len(keys) < 2:
        raise ValueError("key must look like <section>.<key>")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value


def _cmd_run(command: str, forwarded: Sequence[str], workers: Optional[int], log_level: Optional[str]) -> int:
    root = _repo_root()
    engine_entry = _engine_entrypoint(root)
    engine_dir = _engine_dir(root)

    if not engine_entry.exists():
        print(f"error: engine entrypoint not found: {engine_entry}", file=sys.stderr)
        return 1

    env = os.environ.copy()
    if workers is not None:
        try:
            env["EXOIGN_WORKERS"] = str(_validate_workers(workers))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    if log_level is not None:
        env["LOG_LEVEL"] = log_level.upper()

    args = list(forwarded)
    if args and args[0] == "--":
        args = args[1:]
    cmd = [sys.executable, str(engine_entry), command, *args]
    try:
        completed = subprocess.run(cmd, cwd=str(engine_dir), env=env, check=False)
    except FileNotFoundError:
        print("error: python executable is not available", file=sys.stderr)
        return 1
    return completed.returncode


def _cmd_config_set(key: str, value: str) -> int:
    root = _repo_root()
    config_path = _engine_config_path(root)
    config_data = _load_yaml_dict(config_path)
    try:
        _set_dotted(config_data, key, _parse_value(value))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("usage: exoign config set <section.key> <value>", file=sys.stderr)
        return 2
    config_path.parent.mkdir(parents=True, exist_ok=True)
    _save_yaml_dict(config_path, config_data)
    print(f"updated: {config_path}")
    return 0


def _cmd_config_show(key: Optional[str]) -> int:
    data: Any = _load_yaml_dict(_engine_config_path(_repo_root()))
    for part in (key or "").split("."):
        if not part:
            continue
        if not isinstance(data, dict) or part not in data:
            print(f"error: no such key: {key}", file=sys.stderr)
            return 1
        data = data[part]
    print(yaml.safe_dump(data, allow_unicode=True, sort_keys=False).rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exoign")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name in ENGINE_COMMANDS:
        sub = subparsers.add_parser(name, help=f"engine `{name}` (remaining arguments are forwarded)")
        sub.add_argument("--workers", type=int, default=None, help="worker processes for this run")
        sub.add_argument("--log-level", default=None)
        sub.add_argument("forwarded", nargs=argparse.REMAINDER, help="arguments for sim/runner.py")

    config_parser = subparsers.add_parser("config", help="edit sim/config.yaml")
    config_subparsers = config_parser.add_subparsers(dest="config_command", required=True)

    set_parser = config_subparsers.add_parser("set", help="set <section.key> to a YAML value")
    set_parser.add_argument("key")
    set_parser.add_argument("value")

    show_parser = config_subparsers.add_parser("show", help="print a section or key")
    show_parser.add_argument("key", nargs="?", default=None)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command in ENGINE_COMMANDS:
        return _cmd_run(args.command, args.forwarded, args.workers, args.log_level)
    if args.command == "config" and args.config_command == "set":
        return _cmd_config_set(args.key, args.value)
    if args.command == "config" and args.config_command == "show":
        return _cmd_config_show(args.key)

    parser.print_help()
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
