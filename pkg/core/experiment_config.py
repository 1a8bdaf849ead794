"""
ExperimentConfig - Loads and manages YAML-based experiment configurations
"""

import copy
import hashlib
import json
import os
from typing import Any, Dict, List, Optional

import yaml

from config import Config
from core.errors import ConfigError
from core.landscape_analysis import METRICS, AnalysisSettings
from core.lmc_sampler import INIT_TAGS, LmcConfig
from core.quantum_core import ModelParams

# Every key with its default; the defaults are the full-scale values
DEFAULTS: Dict[str, Dict[str, Any]] = {
    "model": {
        "J": 2.0,
        "h_z": 1.0,
        "h_x": 5.0 ** 0.5,
        "h_init": -2.0,
        "h_target": 2.0,
    },
    "sampler": {
        "L": 64,
        "beta": 1e6,
        "sigma": 1e-2,
        "burn_in_iters": 2 ** 14,
        "delta_n": 2 ** 14,
        "M": 2 ** 12,
        "R": 64,
        "anneal": True,
        "beta_start": 1e2,
        "anneal_iters": None,
        "seed": 0,
        "init": "uniform01",
        "init_values": None,
    },
    "sweep": {
        "t_grid": [round(0.2 * k, 10) for k in range(1, 21)],
        "betas": [1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
        "beta_scan_T": 3.4,
    },
    "analysis": {
        "metrics": list(METRICS),
        "bins": "fd",
        "subsample": 2 ** 8,
        "epsilon": None,
        "min_gap": 0.1,
        "cluster_metric": "prt",
        "tol_qsl": 1e-4,
        "optimality_abs_tol": 1e-3,
        "optimality_rel_tol": 0.25,
        "m_threshold": 0.05,
        "m_zero_tol": 1e-2,
    },
    "output": {
        "dir": None,
        "workers": None,
    },
}

# Sections that do not change results (left out of the fingerprint)
NON_RESULT_SECTIONS = ("output",)


class ExperimentConfig:
    """Experiment parameters merged over the defaults"""

    def __init__(self, data: Optional[Dict[str, Any]] = None, source: str = "<defaults>"):
        """
        Args:
            data: Nested sections (model, sampler, sweep, analysis, output); missing keys take defaults
            source: Where the data came from, for messages
        """
        self.source = source
        data = data or {}
        default_name = "default" if source == "<defaults>" else os.path.splitext(os.path.basename(source))[0]
        self.name = data.get("name", default_name)
        self.description = data.get("description", "")
        self.data = self._merge(data)
        self._validate()

    @staticmethod
    def from_name(config_name: str) -> "ExperimentConfig":
        """
        Load a preset by name (looks in the experiment config directory)

        Args:
            config_name: Name of preset (e.g., "desk", "paper")
        """
        directory = Config.EXPERIMENT_CONFIG_DIR
        for candidate in (f"{config_name}.yaml", f"{config_name}.yml", f"{config_name}.json", config_name):
            path = os.path.join(directory, candidate)
            if os.path.isfile(path):
                return ExperimentConfig.from_path(path)

        raise ConfigError(
            f"Config not found: {config_name}\n"
            f"Looking in: {directory}/{config_name}.yaml"
        )

    @staticmethod
    def from_path(config_path: str) -> "ExperimentConfig":
        """Load a YAML (.yaml/.yml) or JSON (.json) configuration file"""
        if not os.path.exists(config_path):
            raise ConfigError(f"Config file not found: {config_path}")

        with open(config_path, "r") as f:
            try:
                if config_path.endswith(".json"):
                    data = json.load(f)
                else:
                    data = yaml.safe_load(f)
            except (yaml.YAMLError, json.JSONDecodeError) as e:
                raise ConfigError(f"Cannot parse {config_path}: {e}") from e

        if not data or not isinstance(data, dict):
            raise ConfigError(f"Empty or invalid config: {config_path}")

        return ExperimentConfig(data, source=config_path)

    def _merge(self, data: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
        merged = copy.deepcopy(DEFAULTS)
        for section, values in data.items():
            if section in ("name", "description", "schema_version"):
                continue
            if section not in DEFAULTS:
                raise ConfigError(f"Unknown section '{section}' in {self.source}")
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"Section '{section}' must be a mapping in {self.source}")
            for key, value in values.items():
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"Unknown key '{section}.{key}' in {self.source}")
                merged[section][key] = value
        return merged

    def _validate(self):
        """Raise ConfigError naming the first offending key"""
        try:
            self._check_sections()
        except TypeError as e:
            raise ConfigError(f"Wrong value type in {self.source}: {e}") from e

    def _check_sections(self):
        try:
            self.get_model_params()
        except ValueError as e:
            raise ConfigError(f"model: {e}") from e

        sampler = self.data["sampler"]
        for key in ("L", "burn_in_iters", "delta_n", "M", "R", "seed"):
            if not isinstance(sampler[key], int) or isinstance(sampler[key], bool):
                raise ConfigError(f"sampler.{key} must be an integer, got {sampler[key]!r}")
        if sampler["init"] not in INIT_TAGS:
            raise ConfigError(f"sampler.init must be one of {INIT_TAGS}, got {sampler['init']!r}")
        self.get_lmc_config(1.0).validate()

        grid = self.data["sweep"]["t_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("sweep.t_grid must be a nonempty list of durations")
        if any(not isinstance(t, (int, float)) or t <= 0 for t in grid):
            raise ConfigError(f"sweep.t_grid entries must be positive numbers: {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"sweep.t_grid must be strictly increasing: {grid}")

        betas = self.data["sweep"]["betas"]
        if not isinstance(betas, list) or not betas or any(float(b) <= 0 for b in betas):
            raise ConfigError(f"sweep.betas must be a nonempty list of positive values: {betas}")
        if not self.data["sweep"]["beta_scan_T"] > 0:
            raise ConfigError("sweep.beta_scan_T must be positive")

        analysis = self.data["analysis"]
        metrics = analysis["metrics"]
        if not metrics or any(m not in METRICS for m in metrics):
            raise ConfigError(f"analysis.metrics must be a nonempty subset of {list(METRICS)}, got {metrics}")
        if analysis["cluster_metric"] not in METRICS:
            raise ConfigError(f"analysis.cluster_metric must be one of {list(METRICS)}")
        bins = analysis["bins"]
        if bins != "fd" and not (isinstance(bins, int) and bins >= 1):
            raise ConfigError(f"analysis.bins must be 'fd' or a positive integer, got {bins!r}")
        if analysis["epsilon"] is not None and not analysis["epsilon"] > 0:
            raise ConfigError("analysis.epsilon must be positive or null")
        if analysis["subsample"] is not None and analysis["subsample"] < 1:
            raise ConfigError("analysis.subsample must be >= 1 or null")

        workers = self.data["output"]["workers"]
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            raise ConfigError(f"output.workers must be >= 1, got {workers!r}")

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        """
        New config with "section.key" overrides applied (None values are skipped)

        Example:
            config.with_overrides({"sampler.R": 8, "sweep.t_grid": [3.4]})
        """
        data = copy.deepcopy(self.data)
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in DEFAULTS or key not in DEFAULTS[section]:
                raise ConfigError(f"Unknown config key '{dotted}'")
            data[section][key] = value
        data["name"] = self.name
        data["description"] = self.description
        return ExperimentConfig(data, source=self.source)

    # === Typed getters ===

    def get_model_params(self) -> ModelParams:
        return ModelParams(**{k: float(v) for k, v in self.data["model"].items()})

    def get_lmc_config(self, T: float, beta: Optional[float] = None) -> LmcConfig:
        """Sampler configuration at duration T (and optionally another beta)"""
        sampler = dict(self.data["sampler"])
        if beta is not None:
            sampler["beta"] = beta
        for key in ("beta", "sigma", "beta_start"):
            sampler[key] = float(sampler[key])
        return LmcConfig(T=float(T), **sampler)

    def get_t_grid(self) -> List[float]:
        return [float(t) for t in self.data["sweep"]["t_grid"]]

    def get_betas(self) -> List[float]:
        return sorted(float(b) for b in self.data["sweep"]["betas"])

    def get_beta_scan_T(self) -> float:
        return float(self.data["sweep"]["beta_scan_T"])

    def get_metrics(self) -> List[str]:
        return list(self.data["analysis"]["metrics"])

    def get_analysis_settings(self) -> AnalysisSettings:
        analysis = dict(self.data["analysis"])
        analysis["metrics"] = tuple(analysis["metrics"])
        for key in ("min_gap", "tol_qsl", "optimality_abs_tol", "optimality_rel_tol", "m_threshold", "m_zero_tol"):
            analysis[key] = float(analysis[key])
        if analysis["epsilon"] is not None:
            analysis["epsilon"] = float(analysis["epsilon"])
        return AnalysisSettings(**analysis)

    def get_output_dir(self) -> str:
        return self.data["output"]["dir"] or os.path.join(Config.OUTPUT_DIR, self.name)

    def get_workers(self) -> int:
        return self.data["output"]["workers"] or Config.WORKERS

    # === General ===

    def to_dict(self) -> Dict[str, Any]:
        data = copy.deepcopy(self.data)
        data["name"] = self.name
        return data

    def fingerprint(self) -> str:
        """SHA-256 of the result-relevant configuration (canonical JSON)"""
        relevant = {k: v for k, v in self.data.items() if k not in NON_RESULT_SECTIONS}
        canonical = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def __str__(self) -> str:
        sampler = self.data["sampler"]
        return (f"ExperimentConfig(name='{self.name}', L={sampler['L']}, R={sampler['R']}, "
                f"M={sampler['M']}, T points={len(self.data['sweep']['t_grid'])})")

    def __repr__(self) -> str:
        return self.__str__()
