"""Configuration Service - environment settings and experiment configs.

Environment variables (a .env file is honoured through python-dotenv):
- PWLAB_THREADS: cap on concurrent worker threads (default: CPU count)
- PWLAB_LOG_LEVEL: console log level (default: INFO)
- PWLAB_OUTPUT_DIR: default output directory (default: results)
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from dotenv import load_dotenv
from loguru import logger

from services.error_handler import ConfigInvalid, error_handler

ARTIFACT_VERSION = "1.0.0"

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")

EXPERIMENTS = ("convergence", "divergence", "walsh", "lti", "phase", "frame-check", "oversampling")


@dataclass(frozen=True)
class Settings:
    threads: int
    log_level: str
    output_dir: Path


def load_settings(env_file: Optional[str] = None) -> Settings:
    load_dotenv(env_file)
    raw_threads = os.getenv("PWLAB_THREADS")
    threads = os.cpu_count() or 1
    if raw_threads:
        try:
            threads = int(raw_threads)
        except ValueError:
            error_handler.handle_validation_error("PWLAB_THREADS must be an integer", "PWLAB_THREADS", raw_threads)
            raise ConfigInvalid(f"PWLAB_THREADS must be an integer, got {raw_threads!r}")
        if threads < 1:
            raise ConfigInvalid(f"PWLAB_THREADS must be positive, got {threads}")
    log_level = os.getenv("PWLAB_LOG_LEVEL", "INFO").upper()
    if log_level not in LOG_LEVELS:
        raise ConfigInvalid(f"PWLAB_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {log_level!r}")
    return Settings(
        threads=threads,
        log_level=log_level,
        output_dir=Path(os.getenv("PWLAB_OUTPUT_DIR", "results")),
    )


# Parameter schema per experiment: name -> (expected type, default)
_SCHEMA: Dict[str, Dict[str, Any]] = {
    "convergence": {
        "ns": (list, [16, 32, 64]),
        "T": (float, 5.0),
        "band": (float, 0.8),
        "degree": (int, 4),
        "trials": (int, 5),
        "interpolation_N": (int, 32),
        "interpolation_trials": (int, 20),
    },
    "divergence": {
        "ns": (list, [8, 16, 32, 64, 128, 256, 512]),
        "t_step": (float, 0.0625),
        "alpha": (float, 0.5),
        "profile_ns": (list, [16, 32, 64]),
        "T": (float, 2.0),
    },
    "walsh": {
        "ks": (list, [1, 2, 3, 4, 5, 6, 7, 8]),
        "max_n": (int, 256),
    },
    "lti": {
        "ns": (list, [8, 16, 32, 64]),
        "bins": (list, [128, 256, 512, 1024, 2048]),
        "alpha": (float, 0.5),
        "t": (float, 0.5),
        "identity_pairs": (int, 1000),
        "identity_N": (int, 16),
    },
    "phase": {
        "K": (int, 2),
        "N": (int, 64),
        "trials": (int, 50),
        "band": (float, 0.8),
        "T": (float, 5.0),
        "anchor_floor": (float, 0.05),
    },
    "frame-check": {
        "K": (int, 2),
    },
    "oversampling": {
        "ns": (list, [16, 32, 64]),
        "band": (float, 0.8),
        "alpha": (float, 0.5),
        "window_margin": (float, 2.0),
        "T": (float, 2.0),
        "amplitude": (float, 2.0),
        "g_scale": (float, 0.3),
    },
}


def experiment_defaults(name: str) -> Dict[str, Any]:
    return {key: default for key, (_, default) in _SCHEMA[name].items()}


def _coerce(name: str, key: str, value: Any, expected: type) -> Any:
    if expected is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if expected is list and isinstance(value, (list, tuple)):
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigInvalid(f"{name}.{key} must be a list of numbers", context={"field": key})
        return list(value)
    raise ConfigInvalid(
        f"{name}.{key} must be of type {expected.__name__}, got {type(value).__name__}",
        context={"field": key, "value": str(value)},
    )


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 42
    output_dir: str = "results"
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigInvalid("config must be a JSON object")
        if "experiment" not in data:
            raise ConfigInvalid("config is missing 'experiment'", context={"field": "experiment"})
        unknown = set(data) - {"experiment", "seed", "output_dir", "params"}
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}", context={"fields": sorted(unknown)})
        return cls(
            experiment=data["experiment"],
            seed=data.get("seed", 42),
            output_dir=data.get("output_dir", "results"),
            params=dict(data.get("params", {})),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "params": dict(self.params),
        }

    def validate(self) -> "ExperimentConfig":
        """Check every parameter and merge defaults; returns the resolved config."""
        if self.experiment not in _SCHEMA:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}",
                                context={"field": "experiment", "known": list(EXPERIMENTS)})
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid("seed must be an unsigned 64-bit integer", context={"field": "seed"})
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigInvalid("output_dir must be a non-empty string", context={"field": "output_dir"})

        schema = _SCHEMA[self.experiment]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ConfigInvalid(f"unknown parameters for {self.experiment}: {sorted(unknown)}",
                                context={"fields": sorted(unknown)})
        resolved = experiment_defaults(self.experiment)
        for key, value in self.params.items():
            resolved[key] = _coerce(self.experiment, key, value, schema[key][0])
        _check_ranges(self.experiment, resolved)
        return ExperimentConfig(self.experiment, self.seed, self.output_dir, resolved)


def _require(condition: bool, message: str, key: str) -> None:
    if not condition:
        raise ConfigInvalid(message, context={"field": key})


def _check_ranges(name: str, params: Dict[str, Any]) -> None:
    for key in ("ns", "profile_ns", "bins", "ks"):
        if key in params:
            values: List[Any] = params[key]
            _require(len(values) > 0 and all(float(v).is_integer() for v in values),
                     f"{name}.{key} must be a non-empty list of integers", key)
            params[key] = [int(v) for v in values]
            _require(all(b > a for a, b in zip(params[key], params[key][1:])),
                     f"{name}.{key} must be strictly increasing", key)
            _require(params[key][0] >= (1 if key != "ns" else 0), f"{name}.{key} values out of range", key)
    if "band" in params:
        _require(0 < params["band"] < 1, f"{name}.band must lie in (0, 1)", "band")
    if "alpha" in params:
        _require(0 < params["alpha"] < 1, f"{name}.alpha must lie in (0, 1)", "alpha")
    if "anchor_floor" in params:
        _require(0 < params["anchor_floor"] < 1, f"{name}.anchor_floor must lie in (0, 1)", "anchor_floor")
    if "K" in params:
        _require(params["K"] in (2, 3), f"{name}.K must be 2 or 3", "K")
    if "bins" in params:
        _require(params["bins"][0] >= 2, f"{name}.bins must be >= 2", "bins")
    for key in ("T", "t_step", "amplitude", "trials", "N", "max_n", "identity_pairs", "identity_N", "degree",
                "interpolation_N", "interpolation_trials"):
        if key in params:
            _require(params[key] > 0, f"{name}.{key} must be positive", key)
    if name == "oversampling":
        _require(params["window_margin"] >= 0, "oversampling.window_margin must be >= 0", "window_margin")
        _require(params["T"] <= params["ns"][0] + params["window_margin"],
                 "oversampling.T must not exceed the smallest window ns[0] + window_margin", "T")
        # the Fejér perturbation of band π/2 has PW¹ norm 2·g_scale
        _require(params["g_scale"] >= 0 and params["amplitude"] > 2 * params["g_scale"],
                 "oversampling needs amplitude > 2·g_scale and g_scale >= 0", "amplitude")


def load_config(path: str, default_output_dir: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigInvalid(f"config file not found: {path}", context={"path": path}) from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config file is not valid JSON: {e}", context={"path": path}) from e
    config = ExperimentConfig.from_dict(data)
    if default_output_dir and isinstance(data, dict) and "output_dir" not in data:
        config.output_dir = str(default_output_dir)
    logger.info(f"Loaded {config.experiment} config from {path}")
    return config


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config.to_dict()).encode("utf-8")).hexdigest()
