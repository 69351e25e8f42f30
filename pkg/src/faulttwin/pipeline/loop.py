"""Tune, measure, drop the weakest feature, repeat."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..dataset import CLASS_NAMES, Dataset, concat, split
from ..errors import CannotDrop
from ..explain import mean_abs_shap, sample_background
from ..gbdt import GbdtModel, GbdtParams
from ..scheduler import AshaConfig
from .metrics import ClassificationReport, classification_report
from .tuning import tune

logger = logging.getLogger(__name__)

RANKINGS = ("importance_gain", "importance_split", "mean_abs_shap")
SCHEMA_VERSION = 1


def feature_scores(model: GbdtModel, ranking: str, dataset: Dataset | None = None, *,
                   n_instances: int = 256, n_background: int = 256, seed: int = 0) -> np.ndarray:
    if ranking == "importance_gain":
        return model.feature_importance("gain")
    if ranking == "importance_split":
        return model.feature_importance("split_count").astype(np.float64)
    if ranking == "mean_abs_shap":
        if dataset is None:
            raise ValueError("mean_abs_shap ranking needs a dataset to explain")
        rows = sample_background(dataset, n_instances, seed)
        bg = sample_background(dataset, n_background, seed + 1)
        return mean_abs_shap(model, rows, bg)
    raise ValueError(f"unknown ranking {ranking!r}; expected one of {RANKINGS}")


def rank_and_drop(dataset: Dataset, model: GbdtModel, ranking: str = "mean_abs_shap",
                  **score_options) -> tuple[Dataset, str]:
    """Remove the lowest-scoring feature (lowest column index on ties)."""
    if dataset.n_features < 2:
        raise CannotDrop("only one feature left")
    if list(model.feature_names) != list(dataset.feature_names):
        raise ValueError("model and dataset features differ")
    scores = feature_scores(model, ranking, dataset, **score_options)
    worst = int(np.argmin(scores))  # argmin returns the first minimum
    name = dataset.feature_names[worst]
    return dataset.drop_feature(name), name


@dataclass
class Iteration:
    index: int
    dropped_feature: str | None
    features: list[str]
    best_params: GbdtParams
    metric: float  # validation macro F1
    report: ClassificationReport  # validation + test
    model: GbdtModel
    study_log: str
    feature_scores: list[float] | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "dropped_feature": self.dropped_feature,
            "features": self.features,
            "best_params": self.best_params.to_dict(),
            "validation_macro_f1": self.metric,
            "report": self.report.to_dict(),
            "feature_scores": self.feature_scores,
        }


@dataclass
class PipelineHistory:
    iterations: list[Iteration] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def champion_index(self) -> int:
        # first best on ties, so fewer dropped features never loses to more
        metrics = [it.metric for it in self.iterations]
        return int(np.argmax(metrics))

    @property
    def champion(self) -> Iteration:
        return self.iterations[self.champion_index]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "champion_index": self.champion_index,
            "iterations": [it.to_dict() for it in self.iterations],
        }

    def write(self, directory) -> Path:
        """history.json plus one study log and model per iteration."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for it in self.iterations:
            (out / f"study_{it.index:02d}.jsonl").write_text(it.study_log, encoding="utf-8")
            (out / f"model_{it.index:02d}.json").write_text(it.model.to_json(), encoding="utf-8")
        (out / "history.json").write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        return out


def should_stop(metrics: list[float], patience: int) -> bool:
    """True once the last ``patience`` iterations failed to beat the running best."""
    best, since = -np.inf, 0
    for m in metrics:
        if m > best:
            best, since = m, 0
        else:
            since += 1
    return since >= patience


def feature_drop_loop(
    dataset: Dataset,
    *,
    space=None,
    scheduler: AshaConfig | None = None,
    searcher: str = "bayes",
    searcher_options: dict | None = None,
    budget: int = 64,
    parallelism: int = 1,
    patience: int = 1,
    ranking: str = "mean_abs_shap",
    ratios=(8, 1, 1),
    seed: int = 0,
    base: GbdtParams | None = None,
    max_iterations: int | None = None,
    shap_instances: int = 256,
    shap_background: int = 256,
) -> PipelineHistory:
    """Iterate tune -> report -> drop until validation macro F1 stops improving.

    The split is drawn once; every iteration re-tunes from scratch on the
    remaining columns. Tuning and the stopping rule see validation only, the
    reported numbers are on validation and test combined.
    """
    if dataset.n_features < 2:
        raise CannotDrop("feature_drop_loop needs at least two features")
    if patience < 1:
        raise ValueError("patience must be >= 1")
    train, valid, test = split(dataset, ratios, seed)
    history = PipelineHistory(config={
        "budget": budget, "patience": patience, "ranking": ranking, "seed": seed,
        "ratios": list(ratios), "scheduler": (scheduler or AshaConfig()).to_dict(),
        "searcher": searcher,
    })
    dropped = None
    while True:
        k = len(history.iterations)
        result = tune(train, valid, space=space, scheduler=scheduler, budget=budget,
                      parallelism=parallelism, seed=seed + k, searcher=searcher, base=base,
                      searcher_options=searcher_options)
        model = result.model
        metric = classification_report(valid.labels, model.predict(valid.rows), CLASS_NAMES).macro_f1
        held_out = concat([valid, test])
        report = classification_report(held_out.labels, model.predict(held_out.rows), CLASS_NAMES)
        it = Iteration(k, dropped, list(train.feature_names), result.best_params, metric, report,
                       model, result.study.state.log.dumps())
        history.iterations.append(it)
        logger.info("iteration %d: %d features, validation macro F1 %.4f", k, train.n_features, metric)
        if should_stop([i.metric for i in history.iterations], patience):
            break
        if train.n_features < 2 or (max_iterations is not None and k + 1 >= max_iterations):
            break
        scores = feature_scores(model, ranking, valid, n_instances=shap_instances,
                                n_background=shap_background, seed=seed)
        it.feature_scores = [float(s) for s in scores]
        dropped = train.feature_names[int(np.argmin(scores))]
        train, valid, test = (d.drop_feature(dropped) for d in (train, valid, test))
    return history
