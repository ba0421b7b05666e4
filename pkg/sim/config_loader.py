"""
Configuration management module
- Provides settings by combining config.yaml and environment variables
- Manages global settings with a singleton pattern
- Supplies defaults and merges runtime overrides
"""
import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from src.errors import ConfigFault

log = logging.getLogger("config_loader")


class Config:
    """
    Configuration manager class
    Loads config.yaml and .env and provides merged settings
    Environment variables have higher priority
    """

    DEFAULT_CONFIG = {
        "logging": {
            "level": "INFO",
            "save_to_file": False,
            "log_dir": "logs",
        },
        "scenario": {},
        "airframe": {
            "fuel_capacity": 25.0,
            "isp": 135.0,
            "radius": 0.25,
            "length": 1.0,
            "thruster_table": None,
        },
        "clock": {
            "coarse_dt": 0.020,
            "fine_dt": 6.7e-5,
            "fine_range": 1000.0,
            "guidance_dt": 0.040,
        },
        "reward": {
            "alpha": 1.0,
            "beta": -0.02,
            "delta": -0.1,
            "eta": 10.0,
            "sigma_rate": 0.04,
            "terminal_miss": 0.5,
        },
        "termination": {
            "half_fov_deg": 45.0,
            "rate_limit": 12.0,
            "max_time": 20.0,
        },
        "guidance": {
            "nav_constant": 3.0,
            "pulse_threshold": 0.3333333333333333,
        },
        "ppo": {
            "clip": 0.1,
            "gamma_shaping": 0.90,
            "gamma_terminal": 0.995,
            "episodes_per_update": 30,
            "epochs": 20,
            "kl_target": 0.02,
            "lr_policy": 1e-4,
            "lr_value": 1e-3,
            "updates": 2000,
            "checkpoint_every": 50,
            "eval_episodes": 200,
        },
        "campaign": {
            "controller": "pn",
            "episodes": 1000,
            "seed": 0,
            "workers": 1,
        },
        "inaccuracy": {
            "fuel_slosh": False,
            "inertia_perturbation": 0.0,
            "thruster_mismatch": False,
        },
        "paths": {
            "results": "results",
        },
    }

    def __init__(self, config_file: str = "config.yaml"):
        self.config_file = config_file
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)

        self._load_yaml()
        self._load_env()

        log.debug("Configuration loaded")

    def _load_yaml(self):
        """Load config.yaml (JSON files parse too)"""
        path = Path(self.config_file)
        if not path.exists():
            log.warning("%s not found, using defaults", self.config_file)
            return
        try:
            with open(path, "r", encoding="utf-8") as f:
                yaml_config = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigFault(f"failed to load {self.config_file}: {e}") from e
        if yaml_config is None:
            return
        if not isinstance(yaml_config, dict):
            raise ConfigFault(f"{self.config_file} must hold a mapping at the top level")
        self._merge_config(self.config, yaml_config)
        log.debug("Loaded config from %s", self.config_file)

    def _load_env(self):
        """Load environment variables (supports .env file)"""
        try:
            from dotenv import load_dotenv
            load_dotenv()
        except ImportError:
            pass

        try:
            if "EXOIGN_WORKERS" in os.environ:
                self.config["campaign"]["workers"] = int(os.environ["EXOIGN_WORKERS"])
            if "EXOIGN_SEED" in os.environ:
                self.config["campaign"]["seed"] = int(os.environ["EXOIGN_SEED"])
        except ValueError as e:
            raise ConfigFault(f"bad environment override: {e}") from e

        if "LOG_LEVEL" in os.environ:
            self.config["logging"]["level"] = os.environ["LOG_LEVEL"]

    def _merge_config(self, base: Dict, override: Dict):
        """Recursively merge dictionaries"""
        for key, value in override.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict) and key != "maneuver_mix":
                self._merge_config(base[key], value)
            else:
                base[key] = value

    def get(self, *keys, default=None) -> Any:
        """
        Get a value using nested keys
        e.g. config.get("campaign", "episodes") -> 1000
        """
        value = self.config
        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, dotted: str, value: Any) -> None:
        """Set a value by dotted path, e.g. set("campaign.workers", 8)"""
        keys = dotted.split(".")
        node = self.config
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigFault(f"{dotted}: {key} is not a section")
        node[keys[-1]] = value

    def get_scenario_config(self) -> Dict:
        return self.config.get("scenario", {})

    def get_airframe_config(self) -> Dict:
        return self.config.get("airframe", {})

    def get_ppo_config(self) -> Dict:
        return self.config.get("ppo", {})

    def get_campaign_config(self) -> Dict:
        return self.config.get("campaign", {})

    def get_inaccuracy_config(self) -> Dict:
        return self.config.get("inaccuracy", {})

    def get_logging_config(self) -> Dict:
        """Return logging settings"""
        return self.config.get("logging", {})

    def save(self, config_file: Optional[str] = None):
        """Save current settings to a YAML file"""
        file_path = config_file or self.config_file
        try:
            with open(file_path, "w", encoding="utf-8") as f:
                yaml.safe_dump(self.config, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
        except OSError as e:
            raise ConfigFault(f"failed to save config to {file_path}: {e}") from e
        log.info("Configuration saved to %s", file_path)


_config = None


def get_config(config_file: str = "config.yaml") -> Config:
    """Return singleton Config instance"""
    global _config
    if _config is None:
        _config = Config(config_file)
    return _config


def reset_config() -> None:
    global _config
    _config = None
