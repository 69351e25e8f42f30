"""Trial orchestration: ASHA early stopping, studies, and step-wise tuning.

ASHA here is the stopping variant: every trial trains towards the maximum
resource and, each time it reaches a rung (``r * eta**k`` boosting rounds), it
is ranked against everything already recorded at that rung. It keeps going
only while its rank is within the top ``ceil(n / eta)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import ProtocolError, StepwiseError

logger = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1
DEFAULT_BUDGET = 64


class Decision(str, Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass(frozen=True)
class AshaConfig:
    min_resource: int = 8
    max_resource: int = 512
    reduction_factor: int = 4
    direction: str = "minimize"

    def __post_init__(self):
        if not 1 <= self.min_resource < self.max_resource:
            raise ValueError("need 1 <= min_resource < max_resource")
        if self.reduction_factor < 2:
            raise ValueError("reduction_factor must be >= 2")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError("direction must be 'minimize' or 'maximize'")

    @property
    def rungs(self) -> list[int]:
        out, r = [], self.min_resource
        while r < self.max_resource:
            out.append(int(r))
            r *= self.reduction_factor
        out.append(int(self.max_resource))
        return out

    def to_dict(self) -> dict:
        return {
            "min_resource": self.min_resource,
            "max_resource": self.max_resource,
            "reduction_factor": self.reduction_factor,
            "direction": self.direction,
        }


@dataclass
class Trial:
    trial_id: int
    params: dict[str, Any]
    status: str = "pending"
    history: list[tuple[int, float]] = field(default_factory=list)
    extras: list[dict] = field(default_factory=list)
    final_metric: float | None = None
    error: str | None = None

    _TRANSITIONS = {
        "pending": {"running"},
        "running": {"stopped", "completed", "failed"},
    }

    def set_status(self, new: str) -> None:
        if new not in self._TRANSITIONS.get(self.status, set()):
            raise ProtocolError(f"trial {self.trial_id}: illegal transition {self.status} -> {new}")
        self.status = new

    @property
    def resource(self) -> int:
        return self.history[-1][0] if self.history else 0

    @property
    def rungs_reached(self) -> int:
        return len(self.history)


class StudyLog:
    """Append-only event log, optionally mirrored to a JSON-lines file."""

    def __init__(self, path=None):
        self.events: list[dict] = []
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.write_text("", encoding="utf-8")

    def emit(self, event: str, **fields) -> None:
        rec = {"event": event, **fields}
        self.events.append(rec)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def dumps(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


def read_log(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]


class StudyState:
    def __init__(self, config: AshaConfig, budget: int = DEFAULT_BUDGET, seed: int = 0, log: StudyLog | None = None):
        self.config = config
        self.rungs = config.rungs
        self.rung_records: list[list[tuple[int, float, int]]] = [[] for _ in self.rungs]
        self.trials: dict[int, Trial] = {}
        self.budget = int(budget)
        self.seed = seed
        self.log = log if log is not None else StudyLog()
        self.lock = threading.RLock()
        self._seq = 0

    @property
    def trials_launched(self) -> int:
        return len(self.trials)

    @property
    def budget_remaining(self) -> int:
        return self.budget - len(self.trials)

    @property
    def resource_consumed(self) -> int:
        return sum(t.resource for t in self.trials.values())

    def new_trial(self, params: dict) -> Trial:
        with self.lock:
            if self.budget_remaining <= 0:
                raise ProtocolError("trial budget exhausted")
            trial = Trial(len(self.trials), dict(params))
            self.trials[trial.trial_id] = trial
            return trial

    def retract(self, trial_id: int) -> list[int]:
        removed = []
        for k, recs in enumerate(self.rung_records):
            keep = [r for r in recs if r[0] != trial_id]
            if len(keep) != len(recs):
                removed.append(k)
                self.rung_records[k] = keep
        return removed


def _rank(records, metric: float, direction: str) -> int:
    """1-based rank of a new ``metric`` among earlier records; earlier reports win ties."""
    if direction == "minimize":
        better = sum(1 for _, m, _ in records if m <= metric)
    else:
        better = sum(1 for _, m, _ in records if m >= metric)
    return better + 1


def asha_decide(state: StudyState, trial: Trial, rung_index: int, metric: float) -> Decision:
    """Record ``metric`` for ``trial`` at ``rung_index`` and decide whether it goes on."""
    with state.lock:
        if not 0 <= rung_index < len(state.rungs):
            raise ProtocolError(f"invalid rung index {rung_index}")
        if not math.isfinite(metric):
            raise ProtocolError(f"trial {trial.trial_id}: non-finite metric {metric!r}")
        records = state.rung_records[rung_index]
        if any(tid == trial.trial_id for tid, _, _ in records):
            raise ProtocolError(f"trial {trial.trial_id} already reported at rung {rung_index}")
        rank = _rank(records, metric, state.config.direction)
        records.append((trial.trial_id, float(metric), state._seq))
        state._seq += 1
        n = len(records)
        cutoff = math.ceil(n / state.config.reduction_factor)
        top = rung_index == len(state.rungs) - 1
        decision = Decision.CONTINUE if (top or rank <= cutoff) else Decision.STOP
        state.log.emit(
            "decision", trial_id=trial.trial_id, rung=rung_index, decision=decision.value,
            rank=rank, cutoff=cutoff, n_at_rung=n, final_rung=top,
        )
        return decision


Evaluator = Callable[[dict, Sequence[int], Callable[..., bool]], Any]


class _Reporter:
    def __init__(self, state: StudyState, trial: Trial):
        self.state = state
        self.trial = trial
        self.next_rung = 0
        self.stopped = False

    def __call__(self, resource: int, metric: float, **extras) -> bool:
        st = self.state
        with st.lock:
            if self.stopped:
                raise ProtocolError(f"trial {self.trial.trial_id} reported after being stopped")
            if self.next_rung >= len(st.rungs) or resource != st.rungs[self.next_rung]:
                expect = st.rungs[self.next_rung] if self.next_rung < len(st.rungs) else None
                raise ProtocolError(
                    f"trial {self.trial.trial_id} reported resource {resource}, expected {expect}"
                )
            metric = float(metric)
            rung = self.next_rung
            st.log.emit(
                "metric_reported", trial_id=self.trial.trial_id, rung=rung, resource=int(resource),
                metric=metric, extras={k: float(v) for k, v in sorted(extras.items())},
            )
            decision = asha_decide(st, self.trial, rung, metric)
            self.trial.history.append((int(resource), metric))
            self.trial.extras.append(dict(extras))
            self.next_rung += 1
            if decision is Decision.STOP:
                self.stopped = True
            return decision is Decision.CONTINUE


@dataclass
class LeaderboardEntry:
    rank: int
    trial_id: int
    status: str
    final_metric: float | None
    resource: int
    rungs_reached: int
    params: dict[str, Any]


@dataclass
class StudyResult:
    leaderboard: list[LeaderboardEntry]
    state: StudyState

    @property
    def best(self) -> LeaderboardEntry:
        return self.leaderboard[0]

    @property
    def log(self) -> list[dict]:
        return self.state.log.events

    def leaderboard_csv(self, param_names: Sequence[str] | None = None) -> str:
        return leaderboard_to_csv(self.leaderboard, param_names)


def _run_trial(state: StudyState, objective: Evaluator, trial: Trial) -> None:
    reporter = _Reporter(state, trial)
    with state.lock:
        trial.set_status("running")
        state.log.emit("trial_started", trial_id=trial.trial_id, params=trial.params)
    try:
        result = objective(trial.params, list(state.rungs), reporter)
    except Exception as exc:  # evaluator failure must not kill the study
        with state.lock:
            retracted = state.retract(trial.trial_id)
            trial.error = f"{type(exc).__name__}: {exc}"
            trial.set_status("failed")
            state.log.emit("trial_failed", trial_id=trial.trial_id, error=trial.error,
                           retracted_rungs=retracted)
        logger.warning("trial %d failed: %s", trial.trial_id, trial.error)
        return
    with state.lock:
        final = float(result) if result is not None else (trial.history[-1][1] if trial.history else None)
        trial.final_metric = final
        trial.set_status("stopped" if reporter.stopped else "completed")
        state.log.emit("trial_finished", trial_id=trial.trial_id, status=trial.status,
                       final_metric=final, resource=trial.resource)


def _launch(state: StudyState, searcher) -> Trial:
    with state.lock:
        return state.new_trial(searcher.suggest())


def _finish(state: StudyState, searcher, trial: Trial) -> None:
    with state.lock:
        if trial.status != "failed" and trial.final_metric is not None:
            searcher.observe(trial.params, trial.final_metric)


def leaderboard(state: StudyState) -> list[LeaderboardEntry]:
    sign = 1.0 if state.config.direction == "minimize" else -1.0

    def key(t: Trial):
        if t.status == "failed" or t.final_metric is None:
            return (1, 0.0, t.trial_id)
        return (0, sign * t.final_metric, t.trial_id)

    ordered = sorted(state.trials.values(), key=key)
    return [
        LeaderboardEntry(i + 1, t.trial_id, t.status, t.final_metric, t.resource, t.rungs_reached, t.params)
        for i, t in enumerate(ordered)
    ]


def run_study(
    space,
    objective: Evaluator,
    budget: int = DEFAULT_BUDGET,
    scheduler: AshaConfig | None = None,
    searcher=None,
    parallelism: int = 1,
    seed: int = 0,
    log_path=None,
) -> StudyResult:
    """Run ``budget`` trials suggested by ``searcher`` under ASHA.

    ``objective(params, checkpoints, report)`` trains towards
    ``checkpoints[-1]``, calling ``report(resource, metric, **extras)`` at each
    checkpoint in order and stopping as soon as it returns ``False``. Its return
    value (or the last reported metric) is the trial's final metric.
    """
    from .bayesopt import BayesSearcher

    if budget < 1:
        raise ValueError("budget must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    scheduler = scheduler or AshaConfig()
    searcher = searcher or BayesSearcher(space, direction=scheduler.direction, seed=seed)
    state = StudyState(scheduler, budget, seed, StudyLog(log_path))
    state.log.emit("study_started", schema_version=LOG_SCHEMA_VERSION, budget=budget,
                   scheduler=scheduler.to_dict(), rungs=state.rungs, seed=seed)
    if parallelism == 1:
        for _ in range(budget):
            trial = _launch(state, searcher)
            _run_trial(state, objective, trial)
            _finish(state, searcher, trial)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            running: dict = {}
            while state.budget_remaining > 0 or running:
                while state.budget_remaining > 0 and len(running) < parallelism:
                    trial = _launch(state, searcher)
                    running[pool.submit(_run_trial, state, objective, trial)] = trial
                done, _ = wait(list(running), return_when=FIRST_COMPLETED)
                for fut in sorted(done, key=lambda f: running[f].trial_id):
                    fut.result()
                    _finish(state, searcher, running.pop(fut))
    state.log.emit("study_finished", trials=state.trials_launched,
                   resource_consumed=state.resource_consumed)
    return StudyResult(leaderboard(state), state)


def leaderboard_to_csv(entries: Sequence[LeaderboardEntry], param_names: Sequence[str] | None = None) -> str:
    names = list(param_names) if param_names is not None else sorted(
        {k for e in entries for k in e.params}
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "trial_id", "status", "final_metric", "resource", "rungs_reached"] + names)
    for e in entries:
        metric = "" if e.final_metric is None else repr(float(e.final_metric))
        writer.writerow(
            [e.rank, e.trial_id, e.status, metric, e.resource, e.rungs_reached]
            + [repr(e.params[n]) if isinstance(e.params.get(n), float) else e.params.get(n, "") for n in names]
        )
    return buf.getvalue()


def verify_log(events: Sequence[dict]) -> None:
    """Replay a study log and check the scheduler invariants; raises ``ProtocolError``.

    Checks the rank rule at every decision, that rungs are visited in order,
    that resources strictly increase per trial, that failed trials leave no
    metric behind, and that the trial budget is respected.
    """
    head = next((e for e in events if e["event"] == "study_started"), None)
    if head is None:
        raise ProtocolError("log has no study_started event")
    cfg = AshaConfig(**head["scheduler"])
    rungs = head["rungs"]
    records: list[list[tuple[int, float]]] = [[] for _ in rungs]
    pending_metric: dict[int, tuple[int, float]] = {}
    last_rung: dict[int, int] = {}
    last_resource: dict[int, int] = {}
    started = set()
    for e in events:
        kind = e["event"]
        if kind == "trial_started":
            started.add(e["trial_id"])
            if len(started) > head["budget"]:
                raise ProtocolError("more trials started than the budget allows")
        elif kind == "metric_reported":
            tid, rung = e["trial_id"], e["rung"]
            if rung != last_rung.get(tid, -1) + 1:
                raise ProtocolError(f"trial {tid} skipped to rung {rung}")
            if e["resource"] != rungs[rung] or e["resource"] <= last_resource.get(tid, 0):
                raise ProtocolError(f"trial {tid} reported bad resource {e['resource']}")
            pending_metric[tid] = (rung, e["metric"])
            last_rung[tid] = rung
            last_resource[tid] = e["resource"]
        elif kind == "decision":
            tid, rung = e["trial_id"], e["rung"]
            if pending_metric.get(tid, (None,))[0] != rung:
                raise ProtocolError(f"decision for trial {tid} without a matching report")
            metric = pending_metric.pop(tid)[1]
            rank = _rank([(None, m, None) for _, m in records[rung]], metric, cfg.direction)
            records[rung].append((tid, metric))
            n = len(records[rung])
            cutoff = math.ceil(n / cfg.reduction_factor)
            if (rank, cutoff, n) != (e["rank"], e["cutoff"], e["n_at_rung"]):
                raise ProtocolError(f"trial {tid} rung {rung}: logged rank/cutoff disagree with replay")
            top = rung == len(rungs) - 1
            expect = "continue" if (top or rank <= cutoff) else "stop"
            if e["decision"] != expect:
                raise ProtocolError(f"trial {tid} rung {rung}: decision {e['decision']} violates rank rule")
        elif kind == "trial_failed":
            tid = e["trial_id"]
            for k in range(len(records)):
                records[k] = [r for r in records[k] if r[0] != tid]
    for k in range(len(records)):
        ids = {tid for tid, _ in records[k]}
        if k > 0 and not ids <= {tid for tid, _ in records[k - 1]}:
            raise ProtocolError(f"a trial appears at rung {k} without appearing at rung {k - 1}")


def rung_members(events: Sequence[dict]) -> list[set[int]]:
    """Trial ids with a surviving metric at each rung, replayed from a log."""
    head = next(e for e in events if e["event"] == "study_started")
    members: list[set[int]] = [set() for _ in head["rungs"]]
    for e in events:
        if e["event"] == "decision":
            members[e["rung"]].add(e["trial_id"])
        elif e["event"] == "trial_failed":
            for m in members:
                m.discard(e["trial_id"])
    return members


# -- step-wise tuning -----------------------------------------------------------


@dataclass
class ParamGroup:
    """One tuning step: candidate dicts of parameter overrides for this group."""

    name: str
    candidates: list[dict[str, Any]]


@dataclass
class StepwiseResult:
    best_params: dict[str, Any]
    trace: list[dict]

    def trace_csv(self) -> str:
        keys = sorted({k for row in self.trace for k in row["params"]})
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "group", "candidate", "status", "metric", "selected"] + keys)
        for row in self.trace:
            metric = "" if row["metric"] is None else repr(float(row["metric"]))
            writer.writerow(
                [row["step"], row["group"], row["candidate"], row["status"], metric,
                 int(row["selected"])]
                + [row["params"].get(k, "") for k in keys]
            )
        return buf.getvalue()


def stepwise_tune(
    groups: Sequence[ParamGroup],
    evaluate: Callable[[dict], float],
    base_params: dict[str, Any],
    direction: str = "minimize",
) -> StepwiseResult:
    """Tune groups one after another, holding every other parameter fixed.

    Already tuned groups keep their chosen values, untuned ones stay at
    ``base_params``. The outcome depends on the group order.
    """
    if not groups:
        raise StepwiseError("need at least one parameter group")
    current = dict(base_params)
    trace: list[dict] = []
    for step_i, group in enumerate(groups):
        if not group.candidates:
            raise StepwiseError(f"group {group.name!r} has no candidates")
        best_i, best_m = None, None
        rows = []
        for ci, cand in enumerate(group.candidates):
            params = {**current, **cand}
            try:
                m = float(evaluate(params))
                if not math.isfinite(m):
                    raise ValueError(f"non-finite metric {m}")
                status = "ok"
            except Exception as exc:
                logger.warning("step %s candidate %d failed: %s", group.name, ci, exc)
                m, status = None, "failed"
            rows.append({"step": step_i, "group": group.name, "candidate": ci,
                         "params": params, "metric": m, "status": status, "selected": False})
            if m is not None and (
                best_m is None or (m < best_m if direction == "minimize" else m > best_m)
            ):
                best_i, best_m = ci, m
        if best_i is None:
            raise StepwiseError(f"every candidate of group {group.name!r} failed")
        rows[best_i]["selected"] = True
        trace += rows
        current.update(group.candidates[best_i])
    return StepwiseResult(current, trace)
