"""GBDT hyperparameter tuning: search space, rung-reporting objective, champion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..bayesopt import BayesSearcher, Integer, LogUniform, RandomSearcher, SearchSpace, Uniform
from ..dataset import N_CLASSES, Dataset
from ..gbdt import GbdtModel, GbdtParams, fit, focal_loss, softmax
from ..scheduler import AshaConfig, StudyResult, run_study

logger = logging.getLogger(__name__)

# Trials tune focal_gamma, so each trial's own training loss is on a different
# scale. Rungs compare validation focal loss at this fixed gamma instead.
SCHEDULING_GAMMA = 2.0


def default_search_space() -> SearchSpace:
    return SearchSpace([
        ("learning_rate", LogUniform(0.01, 0.3)),
        ("num_leaves", Integer(4, 64)),
        ("min_data_in_leaf", Integer(5, 100)),
        ("lambda_l2", LogUniform(1e-3, 10.0)),
        ("feature_fraction", Uniform(0.5, 1.0)),
        ("bagging_fraction", Uniform(0.5, 1.0)),
        ("focal_gamma", Uniform(0.0, 3.0)),
    ])


def trial_params(assignment: dict[str, Any], base: GbdtParams | None = None, rounds: int | None = None) -> GbdtParams:
    base = base or GbdtParams()
    changes = dict(assignment)
    if rounds is not None:
        changes["num_boost_rounds"] = int(rounds)
    return base.updated(**changes)


def validation_metrics(margin: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(focal loss at the scheduling gamma, accuracy) from raw validation margins."""
    loss = float(np.mean(focal_loss(softmax(margin), labels, SCHEDULING_GAMMA)))
    acc = float(np.mean(np.argmax(margin, axis=1) == labels))
    return loss, acc


def make_objective(train: Dataset, valid: Dataset, base: GbdtParams | None = None, seed: int = 0):
    """Evaluator for ``run_study``: one boosting run reporting at every checkpoint."""
    base = base or GbdtParams()

    def objective(assignment, checkpoints, report):
        params = trial_params(assignment, base, rounds=checkpoints[-1])
        marks = set(checkpoints)
        last = [None]

        def on_round(state):
            if state.round not in marks:
                return True
            loss, acc = validation_metrics(state.valid_margin, valid.labels)
            last[0] = loss
            return report(state.round, loss, accuracy=acc)

        fit(train, valid, params, seed=seed, n_classes=N_CLASSES, callback=on_round)
        return last[0]

    return objective


def make_searcher(kind: str, space: SearchSpace, seed: int, direction: str = "minimize", **kw):
    if kind == "bayes":
        return BayesSearcher(space, direction=direction, seed=seed, **kw)
    if kind == "random":
        return RandomSearcher(space, direction=direction, seed=seed, **kw)
    raise ValueError(f"unknown searcher {kind!r}; expected 'bayes' or 'random'")


@dataclass
class TuneResult:
    study: StudyResult
    best_params: GbdtParams
    model: GbdtModel
    champion_trial: int


def champion_entry(study: StudyResult):
    """Best leaderboard entry among trials that went furthest (usually the full resource)."""
    ok = [e for e in study.leaderboard if e.status != "failed" and e.final_metric is not None]
    if not ok:
        raise RuntimeError("every trial failed; no champion")
    top = max(e.resource for e in ok)
    return next(e for e in ok if e.resource == top)


def tune(
    train: Dataset,
    valid: Dataset,
    *,
    space: SearchSpace | None = None,
    scheduler: AshaConfig | None = None,
    budget: int = 64,
    parallelism: int = 1,
    seed: int = 0,
    searcher: str = "bayes",
    base: GbdtParams | None = None,
    log_path=None,
    searcher_options: dict | None = None,
) -> TuneResult:
    """Run a study, then retrain the champion's parameters at the full resource."""
    space = space or default_search_space()
    scheduler = scheduler or AshaConfig()
    base = base or GbdtParams()
    srch = make_searcher(searcher, space, seed, scheduler.direction, **(searcher_options or {}))
    study = run_study(space, make_objective(train, valid, base, seed), budget, scheduler, srch,
                      parallelism, seed, log_path)
    entry = champion_entry(study)
    params = trial_params(entry.params, base, rounds=scheduler.max_resource)
    logger.info("champion trial %d (metric %.6g)", entry.trial_id, entry.final_metric)
    model = fit(train, valid, params, seed=seed, n_classes=N_CLASSES)
    return TuneResult(study, params, model, entry.trial_id)
