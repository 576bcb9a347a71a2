#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# CONFIGURATION MANAGER v1.0
# CODEX: This module handles loading, validating, and providing access to run configuration.
# CODEX: User documents are merged onto a complete default; unknown keys are rejected.

import os
import copy
import platform

import yaml
from dotenv import load_dotenv

from src.errors import ConfigError
from src.utils import default_workers, write_json

SEED_ENV_VAR = "CURENET_SEED"


class ConfigManager:
    """
    CODEX: Manages run configuration.
    CODEX: Loads settings from config.yaml (or any YAML/JSON document) and provides access methods.
    """

    def __init__(self, config_path=None):
        """
        CODEX: Initialize the configuration manager.

        Args:
            config_path (str, optional): Path to configuration file. Defaults to None,
                which uses config.yaml at the repository root when present.
        """
        self.explicit_path = config_path is not None
        if config_path is None:
            self.config_path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config.yaml")
        else:
            self.config_path = config_path

        user_config = self._load_config()
        self.config = self._merge(self._create_default_config(), user_config, "")
        self._apply_environment()
        self._validate()
        self._adjust_for_platform()
        self._resolve_workers()

    def _load_config(self):
        """
        CODEX: Load the user document.
        CODEX: A missing default file means "all defaults"; a missing explicit file is an error.

        Returns:
            dict: User configuration (possibly empty)
        """
        try:
            with open(self.config_path, 'r', encoding='utf-8') as file:
                config = yaml.safe_load(file)
        except FileNotFoundError:
            if self.explicit_path:
                raise ConfigError(f"Configuration file not found: {self.config_path}")
            return {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Error parsing configuration file: {str(e)}")
        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigError(f"Configuration root must be a mapping, got {type(config).__name__}")
        return config

    def _create_default_config(self):
        """
        CODEX: Create default configuration settings.

        Returns:
            dict: Default configuration dictionary
        """
        return {
            "seed": 42,
            "workers": 0,
            "output_dir": "./runs",
            "dataset_path": None,
            "model_path": None,
            "ensemble_path": None,
            "record_path": None,
            "anchors": {
                "t0": 0.333,
                "T_start": 20.0,
                "t2": 171.658,
                "T_peak": 179.905,
                "t3": 205.0,
                "T_end": 20.0,
            },
            "kinetics": {
                "A1": 2.101e9,
                "E1": 8.07e4,
                "A2": 2.014e9,
                "E2": 7.78e4,
                "A3": 1.960e5,
                "E3": 5.66e4,
                "B": 0.47,
                "alpha_switch": 0.3,
                "mu_inf": 7.93e-14,
                "U": 9.08e4,
                "K": 30.0,
                "alpha_gel": 0.47,
                "mu_max": 1.0e6,
            },
            "deformation": {
                "kappa_cte": 0.15,
                "kappa_sh": 30.0,
                "width": 0.1,
                "T_ref": 20.0,
            },
            "simulation": {
                "dt": 0.5,
                "n_out": 128,
                "margin": 1.0,
                "sensor_count": 32,
            },
            "dataset": {
                "grid_t": 10,
                "grid_T": 10,
                "doc0_values": [0.3, 0.001],
                "holdout_t1": 1.61,
                "holdout_T1": 133.01,
                "holdout_doc0": 0.3,
                "holdout_scale": 1.05,
            },
            "network": {
                "branch_hidden": [20, 20, 20],
                "trunk_hidden": [20, 20, 20],
                "latent_width": 20,
            },
            "eki_network": {
                "branch_hidden": [10, 10],
                "trunk_hidden": [10, 10],
                "latent_width": 30,
            },
            "training": {
                "max_iterations": 100000,
                "learning_rate": 1.0e-3,
                "decay_rate": 0.95,
                "decay_steps": 1000,
                "eval_every": 100,
                "patience": 2000,
                "val_fraction": 0.2,
                "channel_weights": [1.0, 1.0, 1.0],
            },
            "ensemble": {
                "seeds": [0, 1, 2, 3, 4, 5],
            },
            "transfer": {
                "lambda_anchor": 1.0e-3,
                "learning_rate": 1.0e-3,
                "max_iterations": 5000,
                "tolerance": 1.0e-3,
            },
            "eki": {
                "ensemble_size": 2000,
                "iterations": 1000,
                "q": 0.002,
                "r": 0.01,
                "prior_std": 1.0,
                "input_noise": 0.01,
                "output_noise": 0.01,
                "time_points": 16,
                "max_records": 0,
            },
            "eki_transfer": {
                "iterations": 50,
                "q": 0.0,
                "r": 0.01,
                "lambda_tik": 0.1,
            },
            "optimization": {
                "doc_min": 0.990,
                "doc0": 0.3,
                "n_t": 50,
                "n_T": 50,
                "refine_rounds": 2,
                "refine_points": 5,
                "verify": True,
            },
            "prediction": {
                "t1": 1.61,
                "T1": 133.01,
                "doc0": 0.3,
                "n_times": 128,
                "trajectories": False,
            },
            "system": {
                "logging": {
                    "level": "INFO",
                    "file": "./logs/curenet.log",
                    "max_size": 10,
                    "backup_count": 5,
                    "console_level": "WARNING",
                },
            },
        }

    def _merge(self, default, user, prefix):
        """
        CODEX: Deep-merge a user mapping onto the defaults with key and type checks.

        Args:
            default (dict): Default mapping
            user (dict): User mapping
            prefix (str): Dotted path of the mapping, for messages

        Returns:
            dict: Merged mapping
        """
        merged = copy.deepcopy(default)
        for key, value in user.items():
            dotted = f"{prefix}{key}"
            if key not in default:
                raise ConfigError(f"Unknown configuration key: {dotted}")
            expected = default[key]
            if isinstance(expected, dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"Configuration key {dotted} must be a mapping")
                merged[key] = self._merge(expected, value, f"{dotted}.")
            else:
                merged[key] = self._check_type(dotted, expected, value)
        return merged

    @staticmethod
    def _check_type(dotted, expected, value):
        if expected is None:
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"Configuration key {dotted} must be a path string")
            return value
        if isinstance(expected, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"Configuration key {dotted} must be true or false")
            return value
        if isinstance(expected, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"Configuration key {dotted} must be an integer, got {value!r}")
            return value
        if isinstance(expected, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"Configuration key {dotted} must be a number, got {value!r}")
            return float(value)
        if isinstance(expected, str):
            if not isinstance(value, str):
                raise ConfigError(f"Configuration key {dotted} must be a string, got {value!r}")
            return value
        if isinstance(expected, list):
            if not isinstance(value, list):
                raise ConfigError(f"Configuration key {dotted} must be a list, got {value!r}")
            return list(value)
        return value

    def _apply_environment(self):
        """
        CODEX: Apply the CURENET_SEED override (a .env file is honoured).
        """
        load_dotenv()
        raw = os.environ.get(SEED_ENV_VAR)
        if raw is None or raw == "":
            return
        try:
            self.config["seed"] = int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")

    def _validate(self):
        """
        CODEX: Range checks that do not belong to any single engine type.
        """
        cfg = self.config
        if cfg["workers"] < 0:
            raise ConfigError("workers must be non-negative (0 uses every available CPU)")
        if len(cfg["dataset"]["doc0_values"]) == 0:
            raise ConfigError("dataset.doc0_values must not be empty")
        if len(cfg["training"]["channel_weights"]) != 3:
            raise ConfigError("training.channel_weights needs one weight per channel (3)")
        if any(w < 0 for w in cfg["training"]["channel_weights"]):
            raise ConfigError("training.channel_weights must be non-negative")
        if not (0.0 < cfg["training"]["val_fraction"] < 1.0):
            raise ConfigError("training.val_fraction must lie in (0, 1)")
        if cfg["training"]["max_iterations"] < 0:
            raise ConfigError("training.max_iterations must be non-negative")
        if cfg["training"]["eval_every"] < 1 or cfg["training"]["decay_steps"] < 1:
            raise ConfigError("training.eval_every and training.decay_steps must be positive")
        if len(set(cfg["ensemble"]["seeds"])) < 2:
            raise ConfigError("ensemble.seeds needs at least two distinct seeds")
        if cfg["simulation"]["n_out"] < 2 or cfg["simulation"]["sensor_count"] < 2:
            raise ConfigError("simulation.n_out and simulation.sensor_count must be at least 2")
        if cfg["system"]["logging"]["level"] not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"Unknown logging level: {cfg['system']['logging']['level']}")

    def _adjust_for_platform(self):
        """
        CODEX: Normalize path separators for the running platform.
        """
        separator = ("/", "\\") if platform.system() == "Windows" else ("\\", "/")
        logging_config = self.config["system"]["logging"]
        logging_config["file"] = logging_config["file"].replace(*separator)
        for key in ("output_dir", "dataset_path", "model_path", "ensemble_path", "record_path"):
            if self.config[key]:
                self.config[key] = self.config[key].replace(*separator)

    def _resolve_workers(self):
        if self.config["workers"] == 0:
            self.config["workers"] = default_workers()

    def apply_overrides(self, overrides):
        """
        CODEX: Apply command-line overrides to top-level scalars.
        CODEX: None values mean "flag not given" and are ignored.

        Args:
            overrides (dict): Top-level key -> value
        """
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in self.config or isinstance(self.config[key], dict):
                raise ConfigError(f"Only top-level scalars can be overridden, got {key}")
            self.config[key] = self._check_type(key, self._create_default_config()[key], value)
        self._validate()
        self._resolve_workers()

    def get(self, key):
        return self.config[key]

    def get_anchors_config(self):
        return dict(self.config["anchors"])

    def get_kinetics_config(self):
        return dict(self.config["kinetics"])

    def get_deformation_config(self):
        return dict(self.config["deformation"])

    def get_simulation_config(self):
        """
        CODEX: Get integrator and sampling configuration.

        Returns:
            dict: Simulation configuration
        """
        return dict(self.config["simulation"])

    def get_dataset_config(self):
        return dict(self.config["dataset"])

    def get_network_config(self):
        return dict(self.config["network"])

    def get_eki_network_config(self):
        return dict(self.config["eki_network"])

    def get_training_config(self):
        """
        CODEX: Get Adam training configuration.

        Returns:
            dict: Training configuration
        """
        return dict(self.config["training"])

    def get_ensemble_config(self):
        return dict(self.config["ensemble"])

    def get_transfer_config(self):
        return dict(self.config["transfer"])

    def get_eki_config(self):
        return dict(self.config["eki"])

    def get_eki_transfer_config(self):
        return dict(self.config["eki_transfer"])

    def get_optimization_config(self):
        return dict(self.config["optimization"])

    def get_prediction_config(self):
        return dict(self.config["prediction"])

    def get_logging_config(self):
        """
        CODEX: Get logging configuration.

        Returns:
            dict: Logging configuration
        """
        return self.config.get("system", {}).get("logging", {})

    def resolved(self):
        """
        CODEX: The fully merged configuration actually used by a run.

        Returns:
            dict: Deep copy of the resolved configuration
        """
        return copy.deepcopy(self.config)

    def save_resolved(self, path):
        """
        CODEX: Write the resolved configuration next to a command's outputs.

        Args:
            path (str): Destination JSON file
        """
        write_json(self.resolved(), path)
