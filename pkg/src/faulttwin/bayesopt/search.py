"""Suggestion engine: random warm-up, then argmax expected improvement."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.stats import qmc

from .gp import GpSurrogate, expected_improvement, gp_fit, gp_predict
from .space import SearchSpace

N_WARMUP = 10
N_CANDIDATES = 1024
MAX_RESAMPLE = 16

History = Sequence[tuple[dict[str, Any], float]]


def fit_history(history: History, space: SearchSpace, **policy) -> GpSurrogate:
    x = np.array([space.encode(p) for p, _ in history])
    y = np.array([v for _, v in history], dtype=np.float64)
    return gp_fit(x, y, **policy)


def _key(params: dict) -> tuple:
    return tuple(sorted((k, repr(v)) for k, v in params.items()))


def candidate_points(space: SearchSpace, rng, n: int) -> np.ndarray:
    """Scrambled Halton points snapped onto the space (one-hot, integer cells)."""
    seed = int(rng.integers(2**63 - 1))
    raw = qmc.Halton(d=space.dim, scramble=True, seed=seed).random(n)
    return np.array([space.encode(space.decode(u)) for u in raw])


def suggest(
    surrogate: GpSurrogate | None,
    space: SearchSpace,
    history: History,
    rng,
    n_candidates: int = N_CANDIDATES,
    *,
    n_warmup: int = N_WARMUP,
    direction: str = "minimize",
) -> dict[str, Any]:
    """Next assignment to evaluate.

    The first ``n_warmup`` calls (by history length) sample the space uniformly.
    Afterwards the candidate with the largest expected improvement over the
    incumbent wins; an exact repeat of a completed trial triggers a fresh
    candidate set, at most ``MAX_RESAMPLE`` times.
    """
    if len(history) < n_warmup:
        return space.sample(rng)
    if surrogate is None:
        surrogate = fit_history(history, space)
    values = np.array([v for _, v in history])
    best = values.min() if direction == "minimize" else values.max()
    seen = {_key(p) for p, _ in history}
    choice = None
    for _ in range(MAX_RESAMPLE):
        cands = candidate_points(space, rng, n_candidates)
        mu, sd = gp_predict(surrogate, cands)
        ei = expected_improvement(mu, sd, best, direction)
        choice = space.decode(cands[int(np.argmax(ei))])
        if _key(choice) not in seen:
            return choice
    return choice


class BayesSearcher:
    """Stateful wrapper: call ``suggest()``, evaluate, then ``observe()``."""

    def __init__(self, space: SearchSpace, *, direction: str = "minimize", seed: int = 0,
                 n_warmup: int = N_WARMUP, n_candidates: int = N_CANDIDATES):
        self.space = space
        self.direction = direction
        self.n_warmup = n_warmup
        self.n_candidates = n_candidates
        self.rng = np.random.default_rng(seed)
        self.history: list[tuple[dict[str, Any], float]] = []

    def suggest(self) -> dict[str, Any]:
        return suggest(None, self.space, self.history, self.rng, self.n_candidates,
                       n_warmup=self.n_warmup, direction=self.direction)

    def observe(self, params: dict[str, Any], value: float) -> None:
        if np.isfinite(value):
            self.history.append((dict(params), float(value)))

    def best(self) -> tuple[dict[str, Any], float] | None:
        if not self.history:
            return None
        pick = min if self.direction == "minimize" else max
        return pick(self.history, key=lambda pv: pv[1])

    def history_csv(self) -> str:
        return history_to_csv(self.space, self.history)


class RandomSearcher(BayesSearcher):
    """Uniform random search with the same interface (baseline)."""

    def suggest(self) -> dict[str, Any]:
        return self.space.sample(self.rng)


def history_to_csv(space: SearchSpace, history: History) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial_id"] + space.names + ["objective"])
    for i, (params, value) in enumerate(history):
        writer.writerow([i] + [repr(params[n]) if isinstance(params[n], float) else params[n]
                               for n in space.names] + [repr(float(value))])
    return buf.getvalue()


def export_history(searcher: BayesSearcher, path) -> Path:
    path = Path(path)
    path.write_text(searcher.history_csv(), encoding="utf-8")
    return path
