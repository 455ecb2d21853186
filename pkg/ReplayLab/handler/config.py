"""
Run-config validation. Fields are addressed by slash path (``rsd/T_exp``); the
first invalid one raises a ``ConfigError`` naming it.
"""

import copy
import json
import logging
import math
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

from ..utility.errors import ConfigError, BUG_TAG
from ..utility.utils import canonical_json, hash_text
from .deformation import MODES, DeformationSpec
from .graph_env import STIMULUS_COUNT, Action
from .harm_memory import FieldParams
from .policies import TrainingConfig
from .rsd_protocol import FIELD_RESETS, REPLAY_DEFORMATIONS, RNG_MODES, RsdConfig

SEED_ENV_VAR = "REPLAYLAB_SEED"

METHOD_IDS = (
    "GE", "SS", "DR", "Shield", "Shield-UM", "PM-ST", "PM-WIN",
    "RAPO", "RAPO-off@rep", "RAPO-topk", "RAPO-local", "RAPO-slow",
)

Check = Callable[[Any], Optional[str]]


def _integer(low: Optional[int] = None, high: Optional[int] = None) -> Check:
    def check(value):
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected an integer, got {value!r}"
        if low is not None and value < low:
            return f"must be >= {low}, got {value}"
        if high is not None and value > high:
            return f"must be <= {high}, got {value}"
        return None
    return check


def _real(low: Optional[float] = None, high: Optional[float] = None,
          open_low: bool = False, open_high: bool = False) -> Check:
    def check(value):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            return f"expected a finite number, got {value!r}"
        if low is not None and (value <= low if open_low else value < low):
            return f"must be {'>' if open_low else '>='} {low}, got {value}"
        if high is not None and (value >= high if open_high else value > high):
            return f"must be {'<' if open_high else '<='} {high}, got {value}"
        return None
    return check


def _choice(options) -> Check:
    def check(value):
        return None if value in options else f"expected one of {list(options)}, got {value!r}"
    return check


def _boolean(value) -> Optional[str]:
    return None if isinstance(value, bool) else f"expected true or false, got {value!r}"


def _optional(inner: Check) -> Check:
    def check(value):
        return None if value is None else inner(value)
    return check


def _int_list(low: int = 0) -> Check:
    item = _integer(low)

    def check(value):
        if not isinstance(value, list) or not value:
            return "expected a nonempty list"
        for entry in value:
            problem = item(entry)
            if problem:
                return problem
        return None
    return check


def _real_list(low: float = 0.0) -> Check:
    item = _real(low, open_low=True)

    def check(value):
        if not isinstance(value, list) or not value:
            return "expected a nonempty list"
        for entry in value:
            problem = item(entry)
            if problem:
                return problem
        return None
    return check


# section -> key -> (default, check)
SCHEMA: Dict[str, Dict[str, Tuple[Any, Check]]] = {
    "graph": {
        "nodes": (50, _integer(10, 1000)),
        "branching": (0.24, _real(0.0, open_low=True)),
        "sens_fraction": (0.20, _real(0.15, 0.25)),
        "seeds": ([0, 1, 2, 3, 4], _int_list(0)),
        "k_seed": (3, _integer(1)),
        "injection_window": (10, _integer(1)),
        "firing_window": (20, _integer(1)),
    },
    "rsd": {
        "T_exp": (500, _integer(1)),
        "T_decay": (200, _integer(1)),
        "T_rep": (500, _integer(1)),
        "z": (1, _integer(1, STIMULUS_COUNT)),
        "rng_mode": ("independent", _choice(RNG_MODES)),
        "replay_deformation": ("inherit", _choice(REPLAY_DEFORMATIONS)),
        "field_reset": ("persist", _choice(FIELD_RESETS)),
        "truncate_buffer": (False, _boolean),
        "snapshot_every": (10, _integer(1)),
    },
    "fields": {
        "decay": (0.1, _real(0.0, 1.0, open_low=True, open_high=True)),
        "gain": (0.5, _real(0.0, open_low=True)),
        "scar_rate": (0.05, _real(0.0, open_low=True)),
        "scar_threshold": (0.3, _real(0.0, open_low=True)),
        "retention": (1.0, _real(0.95, 1.0)),
        "delay": (50, _integer(1)),
    },
    "deformation": {
        "w_G": (1.0, _real(0.0)),
        "w_H": (2.0, _real(0.0)),
        "psi_min": (0.01, _real(0.0, 1.0, open_low=True)),
        "mode": ("full", _choice(MODES)),
        "k": (2, _integer(1)),
    },
    "training": {
        "steps": (200_000, _integer(1)),
        "batch_steps": (2048, _integer(1)),
        "episode_steps": (200, _integer(1)),
        "gamma": (0.95, _real(0.0, 1.0)),
        "gae_lambda": (0.95, _real(0.0, 1.0)),
        "clip": (0.2, _real(0.0, open_low=True)),
        "epochs": (4, _integer(1)),
        "policy_lr": (0.05, _real(0.0, open_low=True)),
        "dual_lr": (0.01, _real(0.0, open_low=True)),
        "max_grad_norm": (1.0, _real(0.0, open_low=True)),
        "value_ridge": (1e-6, _real(0.0)),
        "hidden_units": (0, _integer(0, 256)),
        "window": (50, _integer(1)),
        "entropy_coef": (0.01, _real(0.0)),
        "penalty_decay": (0.5, _real(0.0)),
        "penalty_min": (0.0, _real(0.0)),
        "trace_decay": (0.98, _real(0.0, 1.0, open_low=True)),
        "budget_G": (0.0, _real(0.0)),
        "budget_H": (0.0, _real(0.0)),
        "scripted_fallback": (None, _optional(_choice([a.name for a in Action]))),
    },
    "shield": {
        "n_mc": (20, _integer(1)),
        "horizon": (100, _integer(1)),
        "threshold": (40.0, _real()),
        "um_tolerance": (0.05, _real(0.0, open_low=True)),
        "um_iterations": (12, _integer(1)),
        "um_episodes": (4, _integer(1)),
    },
    "seeds": {
        "master": (0, _integer(0)),
        "episodes": (10, _integer(1)),
    },
    "sweep": {
        "w_H": ([0.5, 1.0, 2.0, 4.0], _real_list()),
        "eta": ([0.05], _real_list()),
    },
}

DEFAULT_METHODS = list(METHOD_IDS)


def default_config() -> Dict[str, Any]:
    """A complete config with every default filled."""
    config = {section: {key: copy.deepcopy(spec[0]) for key, spec in keys.items()}
              for section, keys in SCHEMA.items()}
    config["methods"] = list(DEFAULT_METHODS)
    return config


def validate_config(data: Any) -> Dict[str, Any]:
    """
    Validate a raw config and fill defaults.

    Args:
        data (Any): Parsed JSON.

    Returns:
        Dict[str, Any]: A new, complete config.

    Raises:
        ConfigError: On the first unknown key, wrong type or out-of-range value.
    """
    if not isinstance(data, dict):
        raise ConfigError("/", "the config must be a JSON object")
    allowed = set(SCHEMA) | {"methods"}
    for key in data:
        if key not in allowed:
            raise ConfigError(str(key), "unknown section")
    config = default_config()
    for section, keys in SCHEMA.items():
        given = data.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(section, "expected an object")
        for key, value in given.items():
            if key not in keys:
                raise ConfigError(f"{section}/{key}", "unknown key")
            problem = keys[key][1](value)
            if problem:
                raise ConfigError(f"{section}/{key}", problem)
            config[section][key] = value
    methods = data.get("methods", DEFAULT_METHODS)
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods", "expected a nonempty list of method ids")
    for index, method in enumerate(methods):
        if method not in METHOD_IDS:
            raise ConfigError(f"methods/{index}", f"unknown method id '{method}'")
    if len(set(methods)) != len(methods):
        raise ConfigError("methods", "method ids must be unique")
    config["methods"] = list(methods)
    if config["deformation"]["mode"] == "local":
        raise ConfigError("deformation/mode", "'local' is only available through the RAPO-local method")
    return config


class RunConfig:
    """
    A validated run config with slash-path access and typed views.

    Args:
        data (Dict[str, Any]): Raw config; validated on construction.
        seed_override (Optional[int]): Replaces ``seeds/master`` when given.
    """

    def __init__(self, data: Optional[Dict[str, Any]] = None, seed_override: Optional[int] = None):
        self.data = validate_config({} if data is None else data)
        if seed_override is not None:
            problem = _integer(0)(seed_override)
            if problem:
                raise ConfigError("seeds/master", problem)
            self.data["seeds"]["master"] = seed_override

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        """Read a config file; ``REPLAYLAB_SEED`` overrides the master seed."""
        try:
            with open(path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            print(f"{BUG_TAG} Unable to read config file: {e}")
            raise
        override = os.environ.get(SEED_ENV_VAR)
        if override is not None:
            try:
                override = int(override)
            except ValueError:
                raise ConfigError("seeds/master", f"{SEED_ENV_VAR} must be an integer, got {override!r}")
            logging.info(f"Master seed overridden by {SEED_ENV_VAR}={override}")
        return cls(raw, seed_override=override)

    def get(self, path: str) -> Any:
        """Value at a slash path, e.g. ``rsd/T_exp``."""
        data: Any = self.data
        for key in path.split("/"):
            if not isinstance(data, dict) or key not in data:
                raise ConfigError(path, "no such field")
            data = data[key]
        return data

    def canonical(self) -> str:
        return canonical_json(self.data)

    @property
    def config_hash(self) -> str:
        return hash_text(self.canonical())

    @property
    def methods(self) -> List[str]:
        return list(self.data["methods"])

    @property
    def graph_seeds(self) -> List[int]:
        return list(self.data["graph"]["seeds"])

    @property
    def master_seed(self) -> int:
        return int(self.data["seeds"]["master"])

    def episode_seeds(self) -> List[int]:
        """Episode seeds derived from the master seed: master * 1000 + i."""
        return [self.master_seed * 1000 + i for i in range(self.data["seeds"]["episodes"])]

    def rsd_config(self) -> RsdConfig:
        rsd = self.data["rsd"]
        return RsdConfig(
            T_exp=rsd["T_exp"], T_decay=rsd["T_decay"], T_rep=rsd["T_rep"], z=rsd["z"],
            rng_mode=rsd["rng_mode"], replay_deformation=rsd["replay_deformation"],
            field_reset=rsd["field_reset"], truncate_buffer=rsd["truncate_buffer"],
            injection_window=self.data["graph"]["injection_window"], k_seed=self.data["graph"]["k_seed"],
            firing_window=self.data["graph"]["firing_window"],
            snapshot_every=rsd["snapshot_every"],
        )

    def field_params(self) -> FieldParams:
        return FieldParams(**self.data["fields"])

    def deformation_spec(self) -> DeformationSpec:
        return DeformationSpec(**self.data["deformation"])

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(**self.data["training"])

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """A new validated config with slash-path overrides applied."""
        data = copy.deepcopy(self.data)
        for path, value in overrides.items():
            keys = path.split("/")
            parent = data
            for key in keys[:-1]:
                parent = parent.setdefault(key, {})
            parent[keys[-1]] = value
        return RunConfig(data)
