"""JSON tool configuration with field-precise validation.

Every section is optional; missing keys take the defaults below. Unknown keys
are rejected so that typos do not silently fall back to defaults.

    {
      "seed": 0,                      # split, searcher and training seed (TWIN_SEED overrides)
      "simulator": {"n_rows": 100011, "seed": 42, "dt": 0.001, "noise_std": 0.01,
                    "mixture": [0.70, 0.05, 0.10, 0.10, 0.05],
                    "a_matrix": null, "b_matrix": null},
      "split": {"ratios": [8, 1, 1]},
      "gbdt": {...GbdtParams fields...},
      "search_space": null,           # {name: {"type": ..., ...}}; null = default space
      "scheduler": {"min_resource": 8, "max_resource": 512, "reduction_factor": 4,
                    "budget": 64, "parallelism": 1, "searcher": "bayes"},
      "pipeline": {"ranking": "mean_abs_shap", "patience": 1, "metric": "macro_f1",
                   "max_iterations": null, "shap_instances": 256, "shap_background": 256},
      "stepwise": {"rounds": 100, "metric": "macro_f1", "groups": [...]},
      "paths": {"runs": "runs"}
    }
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .bayesopt import SearchSpace
from .errors import ConfigError
from .gbdt import GbdtParams
from .scheduler import AshaConfig, ParamGroup
from .sim import DEFAULT_DT, DEFAULT_MIXTURE, DEFAULT_NOISE_STD, StateSpaceModel, default_model

SEED_ENV = "TWIN_SEED"

DEFAULT_STEPWISE_GROUPS = [
    {"name": "learning_rate", "candidates": [{"learning_rate": v} for v in (0.05, 0.1, 0.2)]},
    {"name": "num_leaves", "candidates": [{"num_leaves": v} for v in (15, 31, 63)]},
    {"name": "min_data_in_leaf", "candidates": [{"min_data_in_leaf": v} for v in (10, 20, 50)]},
    {"name": "focal_gamma", "candidates": [{"focal_gamma": v} for v in (0.0, 1.0, 2.0)]},
]

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "simulator": {
        "n_rows": 100011, "seed": 42, "dt": DEFAULT_DT, "noise_std": DEFAULT_NOISE_STD,
        "mixture": list(DEFAULT_MIXTURE), "a_matrix": None, "b_matrix": None,
    },
    "split": {"ratios": [8, 1, 1]},
    "gbdt": {},
    "search_space": None,
    "scheduler": {
        "min_resource": 8, "max_resource": 512, "reduction_factor": 4,
        "budget": 64, "parallelism": 1, "searcher": "bayes",
    },
    "pipeline": {
        "ranking": "mean_abs_shap", "patience": 1, "metric": "macro_f1",
        "max_iterations": None, "shap_instances": 256, "shap_background": 256,
    },
    "stepwise": {"rounds": 100, "metric": "macro_f1", "groups": DEFAULT_STEPWISE_GROUPS},
    "paths": {"runs": "runs"},
}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ConfigError(path, "unknown key")
        if isinstance(defaults[key], dict) and key != "gbdt":
            if not isinstance(value, dict):
                raise ConfigError(path, "expected an object")
            out[key] = _merge(defaults[key], value, path)
        else:
            out[key] = value
    return out


def _int(value, path, lo=None, hi=None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    value = int(value)
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(path, f"must be <= {hi}, got {value}")
    return value


def _float(value, path, lo=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")
    return float(value)


def _choice(value, path, options) -> str:
    if value not in options:
        raise ConfigError(path, f"expected one of {list(options)}, got {value!r}")
    return value


@dataclass
class ToolConfig:
    raw: dict[str, Any] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.validate()

    # -- access ---------------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def simulator(self) -> dict:
        return self.raw["simulator"]

    @property
    def ratios(self) -> tuple[int, ...]:
        return tuple(self.raw["split"]["ratios"])

    @property
    def scheduler_section(self) -> dict:
        return self.raw["scheduler"]

    @property
    def pipeline(self) -> dict:
        return self.raw["pipeline"]

    @property
    def stepwise(self) -> dict:
        return self.raw["stepwise"]

    @property
    def runs_dir(self) -> Path:
        return Path(self.raw["paths"]["runs"])

    def gbdt_params(self) -> GbdtParams:
        return self._gbdt

    def asha(self) -> AshaConfig:
        s = self.scheduler_section
        return AshaConfig(s["min_resource"], s["max_resource"], s["reduction_factor"], "minimize")

    def search_space(self) -> SearchSpace | None:
        return self._space

    def model(self) -> StateSpaceModel:
        return self._model

    def stepwise_groups(self) -> list[ParamGroup]:
        return [ParamGroup(g["name"], [dict(c) for c in g["candidates"]]) for g in self.stepwise["groups"]]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def set(self, dotted: str, value) -> "ToolConfig":
        """Copy with one key replaced (command-line overrides), revalidated."""
        raw = copy.deepcopy(self.raw)
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
        return ToolConfig(raw)

    # -- validation -----------------------------------------------------------

    def validate(self) -> None:
        r = self.raw
        r["seed"] = _int(r["seed"], "seed", 0)

        sim = r["simulator"]
        sim["n_rows"] = _int(sim["n_rows"], "simulator.n_rows", 1)
        sim["seed"] = _int(sim["seed"], "simulator.seed", 0)
        sim["dt"] = _float(sim["dt"], "simulator.dt")
        if sim["dt"] <= 0:
            raise ConfigError("simulator.dt", "must be > 0")
        sim["noise_std"] = _float(sim["noise_std"], "simulator.noise_std", 0.0)
        mix = sim["mixture"]
        if not isinstance(mix, list) or len(mix) != 5:
            raise ConfigError("simulator.mixture", "expected a list of 5 class weights")
        sim["mixture"] = [_float(w, f"simulator.mixture[{i}]", 0.0) for i, w in enumerate(mix)]
        if sum(sim["mixture"]) <= 0:
            raise ConfigError("simulator.mixture", "weights must not all be zero")
        try:
            if sim["a_matrix"] is None and sim["b_matrix"] is None:
                self._model = default_model(dt=sim["dt"], noise_std=sim["noise_std"])
            elif sim["a_matrix"] is None or sim["b_matrix"] is None:
                raise ConfigError("simulator.a_matrix", "a_matrix and b_matrix must be given together")
            else:
                self._model = StateSpaceModel(np.array(sim["a_matrix"], dtype=float),
                                              np.array(sim["b_matrix"], dtype=float),
                                              sim["dt"], sim["noise_std"])
        except (ValueError, TypeError) as exc:
            raise ConfigError("simulator.a_matrix", str(exc)) from None

        ratios = r["split"]["ratios"]
        if not isinstance(ratios, list) or len(ratios) != 3:
            raise ConfigError("split.ratios", "expected three positive integers")
        r["split"]["ratios"] = [_int(v, f"split.ratios[{i}]", 1) for i, v in enumerate(ratios)]

        if not isinstance(r["gbdt"], dict):
            raise ConfigError("gbdt", "expected an object")
        try:
            self._gbdt = GbdtParams.from_dict(r["gbdt"])
        except (ValueError, TypeError) as exc:
            raise ConfigError("gbdt", str(exc)) from None

        if r["search_space"] is None:
            self._space = None
        else:
            if not isinstance(r["search_space"], dict):
                raise ConfigError("search_space", "expected an object of domains")
            for name, dom in r["search_space"].items():
                if name not in GbdtParams.__dataclass_fields__ or name == "num_boost_rounds":
                    raise ConfigError(f"search_space.{name}", "not a tunable GBDT parameter")
                if not isinstance(dom, dict):
                    raise ConfigError(f"search_space.{name}", "expected a domain object")
            try:
                self._space = SearchSpace.from_dict(r["search_space"])
            except KeyError as exc:
                raise ConfigError("search_space", f"domain is missing key {exc}") from None
            except (ValueError, TypeError) as exc:
                raise ConfigError("search_space", str(exc)) from None

        s = r["scheduler"]
        s["min_resource"] = _int(s["min_resource"], "scheduler.min_resource", 1)
        s["max_resource"] = _int(s["max_resource"], "scheduler.max_resource", 2)
        s["reduction_factor"] = _int(s["reduction_factor"], "scheduler.reduction_factor", 2)
        if s["min_resource"] >= s["max_resource"]:
            raise ConfigError("scheduler.min_resource", "must be < scheduler.max_resource")
        s["budget"] = _int(s["budget"], "scheduler.budget", 1)
        s["parallelism"] = _int(s["parallelism"], "scheduler.parallelism", 1)
        _choice(s["searcher"], "scheduler.searcher", ("bayes", "random"))

        p = r["pipeline"]
        _choice(p["ranking"], "pipeline.ranking", ("mean_abs_shap", "importance_gain", "importance_split"))
        p["patience"] = _int(p["patience"], "pipeline.patience", 1)
        _choice(p["metric"], "pipeline.metric", ("macro_f1",))
        if p["max_iterations"] is not None:
            p["max_iterations"] = _int(p["max_iterations"], "pipeline.max_iterations", 1)
        p["shap_instances"] = _int(p["shap_instances"], "pipeline.shap_instances", 1)
        p["shap_background"] = _int(p["shap_background"], "pipeline.shap_background", 1)

        st = r["stepwise"]
        st["rounds"] = _int(st["rounds"], "stepwise.rounds", 1)
        _choice(st["metric"], "stepwise.metric", ("macro_f1", "focal_loss"))
        if not isinstance(st["groups"], list) or not st["groups"]:
            raise ConfigError("stepwise.groups", "expected a non-empty list")
        for i, g in enumerate(st["groups"]):
            where = f"stepwise.groups[{i}]"
            if not isinstance(g, dict) or set(g) != {"name", "candidates"}:
                raise ConfigError(where, "expected an object with 'name' and 'candidates'")
            if not isinstance(g["candidates"], list) or not g["candidates"]:
                raise ConfigError(f"{where}.candidates", "expected a non-empty list")
            for j, c in enumerate(g["candidates"]):
                if not isinstance(c, dict):
                    raise ConfigError(f"{where}.candidates[{j}]", "expected an object of overrides")
                try:
                    self._gbdt.updated(**c)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"{where}.candidates[{j}]", str(exc)) from None

        if not isinstance(r["paths"]["runs"], str):
            raise ConfigError("paths.runs", "expected a path string")


def parse_config(text: str, source: str = "<config>") -> ToolConfig:
    try:
        given = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None
    if not isinstance(given, dict):
        raise ConfigError(source, "top level must be a JSON object")
    return ToolConfig(_merge(DEFAULTS, given, ""))


def load_config(path=None, env=None) -> ToolConfig:
    """Defaults, then the file at ``path``, then ``TWIN_SEED`` from ``env``."""
    if path is None:
        cfg = ToolConfig()
    else:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(str(p), f"cannot read config: {exc.strerror}") from None
        cfg = parse_config(text, str(p))
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env[SEED_ENV]!r}") from None
        cfg = cfg.set("seed", seed)
    return cfg
