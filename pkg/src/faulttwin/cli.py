"""Command-line front end: ``faulttwin <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import explain as shap
from .dataset import CLASS_NAMES, Dataset, concat, split
from .errors import ConfigError, FaultTwinError
from .gbdt import fit
from .pipeline import (
    RunRecord,
    classification_report,
    default_search_space,
    feature_drop_loop,
    load_run_dir,
    run_dir,
    save_run,
    trial_params,
    tune,
    validation_metrics,
)
from .config import ToolConfig, load_config
from .scheduler import stepwise_tune
from .sim import default_scenarios, generate_dataset

log = logging.getLogger("faulttwin")


class UsageError(Exception):
    pass


def _out(text: str = "") -> None:
    sys.stdout.write(text + "\n")


def _read_data(path) -> Dataset:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"--data: no such file {p}")
    return Dataset.from_csv(p)


def _resolve_run(ref: str, cfg: ToolConfig) -> Path:
    p = Path(ref)
    if (p / "record.json").exists():
        return p
    q = run_dir(cfg.runs_dir, ref)
    if (q / "record.json").exists():
        return q
    raise UsageError(f"--run: {ref} is neither a run directory nor a run id under {cfg.runs_dir}")


def _scenarios(cfg: ToolConfig):
    return [(s, w) for (s, _), w in zip(default_scenarios(), cfg.simulator["mixture"])]


def _write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _curves(study) -> list[list]:
    """Per-trial training curves at every rung (loss and accuracy vs rounds)."""
    rows = [["trial_id", "resource", "focal_loss", "accuracy", "status"]]
    for tid in sorted(study.state.trials):
        t = study.state.trials[tid]
        for (res, metric), extra in zip(t.history, t.extras):
            rows.append([tid, res, repr(metric), repr(float(extra.get("accuracy", float("nan")))), t.status])
    return rows


def _report_dict(model, ds: Dataset) -> dict:
    return classification_report(ds.labels, model.predict(ds.rows), CLASS_NAMES).to_dict()


# -- commands -------------------------------------------------------------------


def cmd_simulate(args, cfg: ToolConfig) -> int:
    if args.rows is not None:
        cfg = cfg.set("simulator.n_rows", args.rows)
    if args.seed is not None:
        cfg = cfg.set("simulator.seed", args.seed)
    ds = generate_dataset(cfg.model(), _scenarios(cfg), cfg.simulator["n_rows"], cfg.simulator["seed"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out)
    _out(f"wrote {ds.n_rows} rows to {out}")
    for name, n in zip(CLASS_NAMES, ds.class_counts()):
        _out(f"  {name:<26} {int(n):>7}  ({n / ds.n_rows:.3f})")
    return 0


def _study_overrides(args, cfg: ToolConfig) -> ToolConfig:
    for flag, key in (("budget", "scheduler.budget"), ("parallelism", "scheduler.parallelism"),
                      ("seed", "seed")):
        if getattr(args, flag, None) is not None:
            cfg = cfg.set(key, getattr(args, flag))
    return cfg


def cmd_tune(args, cfg: ToolConfig) -> int:
    cfg = _study_overrides(args, cfg)
    ds = _read_data(args.data)
    train, valid, test = split(ds, cfg.ratios, cfg.seed)
    sch = cfg.scheduler_section
    result = tune(train, valid, space=cfg.search_space(), scheduler=cfg.asha(), budget=sch["budget"],
                  parallelism=sch["parallelism"], seed=cfg.seed, searcher=sch["searcher"],
                  base=cfg.gbdt_params())
    held_out = concat([valid, test])
    report = _report_dict(result.model, held_out)
    record = RunRecord(
        config=cfg.to_dict(), dataset_fingerprint=ds.fingerprint(),
        metrics={"accuracy": report["accuracy"], "macro_f1": report["macro_average"]["f1"],
                 "champion_trial": result.champion_trial, "best_params": result.best_params.to_dict()},
    )
    root = Path(args.out_run) if args.out_run else cfg.runs_dir
    run_id = save_run(record, result.model, root, report=report, study_log=result.study.state.log.dumps())
    space = cfg.search_space() or default_search_space()
    (root / "leaderboard.csv").write_text(result.study.leaderboard_csv(space.names), encoding="utf-8")
    _write_csv(root / "curves.csv", _curves(result.study))
    _out(f"run {run_id} -> {run_dir(root, run_id)}")
    _out(f"{'rank':>4} {'trial':>5} {'status':<9} {'resource':>8} {'metric':>12}")
    for e in result.study.leaderboard[:5]:
        metric = "-" if e.final_metric is None else f"{e.final_metric:.6g}"
        _out(f"{e.rank:>4} {e.trial_id:>5} {e.status:<9} {e.resource:>8} {metric:>12}")
    _out(f"held-out accuracy {report['accuracy']:.4f}, macro F1 {report['macro_average']['f1']:.4f}")
    return 0


def cmd_train(args, cfg: ToolConfig) -> int:
    if args.seed is not None:
        cfg = cfg.set("seed", args.seed)
    ds = _read_data(args.data)
    params = cfg.gbdt_params()
    if args.params:
        try:
            params = trial_params(json.loads(Path(args.params).read_text(encoding="utf-8")), params)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"--params: {exc}") from None
    train, valid, test = split(ds, cfg.ratios, cfg.seed)
    model = fit(train, valid, params, seed=cfg.seed, n_classes=len(CLASS_NAMES))
    report = _report_dict(model, concat([valid, test]))
    record = RunRecord(config=cfg.to_dict(), dataset_fingerprint=ds.fingerprint(),
                       metrics={"accuracy": report["accuracy"], "macro_f1": report["macro_average"]["f1"],
                                "params": params.to_dict()})
    root = Path(args.out_run) if args.out_run else cfg.runs_dir
    run_id = save_run(record, model, root, report=report)
    loss, _ = validation_metrics(model.raw_margin(valid.rows), valid.labels)
    _out(f"run {run_id} -> {run_dir(root, run_id)}")
    _out(f"validation focal loss {loss:.6g}; held-out accuracy {report['accuracy']:.4f}, "
         f"macro F1 {report['macro_average']['f1']:.4f}")
    return 0


def cmd_report(args, cfg: ToolConfig) -> int:
    _, model = load_run_dir(_resolve_run(args.run, cfg))
    ds = _read_data(args.data)
    if args.subset == "holdout":
        _, valid, test = split(ds, cfg.ratios, cfg.seed)
        ds = concat([valid, test])
    if ds.feature_names != model.feature_names:
        missing = [f for f in model.feature_names if f not in ds.feature_names]
        if missing:
            raise UsageError(f"--data lacks model features {missing}")
        ds = Dataset(model.feature_names, ds.rows[:, [ds.feature_names.index(f) for f in model.feature_names]],
                     ds.labels)
    report = classification_report(ds.labels, model.predict(ds.rows), CLASS_NAMES)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    return 0


def cmd_explain(args, cfg: ToolConfig) -> int:
    _, model = load_run_dir(_resolve_run(args.run, cfg))
    ds = _read_data(args.data)
    if ds.feature_names != model.feature_names:
        raise UsageError("--data columns differ from the model's features")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    idx = np.sort(rng.choice(ds.n_rows, size=min(args.n, ds.n_rows), replace=False))
    background = shap.sample_background(ds, args.background, cfg.seed)
    expl = shap.tree_shap_batch(model, ds.rows[idx], background)
    gaps = [e.efficiency_gap(model, ds.rows[i]) for e, i in zip(expl, idx)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shap.export_explanations_json(expl, out / "explanations.json", model.feature_names)
    for k in range(model.n_classes):
        shap.export_decision_plot(expl, k, out / f"decision_plot_class{k}.csv", model.feature_names)
    _out(f"{len(expl)} explanations -> {out}; max efficiency gap {max(gaps):.3g}")
    if max(gaps) > 1e-9:
        raise FaultTwinError(f"efficiency check failed: gap {max(gaps):.3g}")
    return 0


def cmd_pipeline(args, cfg: ToolConfig) -> int:
    cfg = _study_overrides(args, cfg)
    ds = _read_data(args.data)
    sch, p = cfg.scheduler_section, cfg.pipeline
    history = feature_drop_loop(
        ds, space=cfg.search_space(), scheduler=cfg.asha(), searcher=sch["searcher"],
        budget=sch["budget"], parallelism=sch["parallelism"], patience=p["patience"],
        ranking=p["ranking"], ratios=cfg.ratios, seed=cfg.seed, base=cfg.gbdt_params(),
        max_iterations=p["max_iterations"], shap_instances=p["shap_instances"],
        shap_background=p["shap_background"],
    )
    out = history.write(args.out)
    champ = history.champion
    record = RunRecord(config=cfg.to_dict(), dataset_fingerprint=ds.fingerprint(),
                       metrics={"accuracy": champ.report.accuracy, "macro_f1": champ.report.macro_f1,
                                "iteration": champ.index, "features": champ.features})
    run_id = save_run(record, champ.model, cfg.runs_dir, report=champ.report.to_dict(),
                      study_log=champ.study_log)
    for it in history.iterations:
        mark = "*" if it.index == champ.index else " "
        _out(f"{mark}{it.index:>3} drop={it.dropped_feature or '-':<8} features={len(it.features):>2} "
             f"valid macro F1={it.metric:.4f}")
    _out(f"history -> {out}; champion run {run_id}")
    return 0


def cmd_stepwise(args, cfg: ToolConfig) -> int:
    if args.seed is not None:
        cfg = cfg.set("seed", args.seed)
    ds = _read_data(args.data)
    train, valid, _ = split(ds, cfg.ratios, cfg.seed)
    st = cfg.stepwise
    base = cfg.gbdt_params().updated(num_boost_rounds=st["rounds"]).to_dict()

    def evaluate(assignment):
        model = fit(train, valid, trial_params(assignment), seed=cfg.seed, n_classes=len(CLASS_NAMES))
        if st["metric"] == "focal_loss":
            return validation_metrics(model.raw_margin(valid.rows), valid.labels)[0]
        return classification_report(valid.labels, model.predict(valid.rows), CLASS_NAMES).macro_f1

    direction = "minimize" if st["metric"] == "focal_loss" else "maximize"
    result = stepwise_tune(cfg.stepwise_groups(), evaluate, base, direction)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(result.trace_csv(), encoding="utf-8")
    tuned = {k: v for k, v in result.best_params.items() if base.get(k) != v}
    _out(f"{len(result.trace)} evaluations -> {out}; changed from base: {json.dumps(tuned, sort_keys=True)}")
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faulttwin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text, config=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.set_defaults(fn=fn)
        return p

    p = command("simulate", cmd_simulate, "generate a labeled synthetic dataset")
    p.add_argument("--rows", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    for name, fn, text in (("tune", cmd_tune, "tune hyperparameters and save the champion run"),
                           ("pipeline", cmd_pipeline, "iterative tuning and feature dropping")):
        p = command(name, fn, text)
        p.add_argument("--data", required=True)
        p.add_argument("--budget", type=int)
        p.add_argument("--parallelism", type=int)
        p.add_argument("--seed", type=int)
        if name == "tune":
            p.add_argument("--out-run", help="root directory holding runs/ (default: paths.runs)")
        else:
            p.add_argument("--out", required=True, help="directory for the history")

    p = command("train", cmd_train, "train one model with fixed parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--params", help="JSON file of GBDT parameter overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-run")

    p = command("report", cmd_report, "classification report of a saved run")
    p.add_argument("--run", required=True, help="run directory or run id")
    p.add_argument("--data", required=True)
    p.add_argument("--subset", choices=("all", "holdout"), default="all")
    p.add_argument("--out", help="also write the report as JSON")

    p = command("explain", cmd_explain, "SHAP explanations of a saved run")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--background", type=int, default=shap.DEFAULT_BACKGROUND)
    p.add_argument("--out", default="explanations")

    p = command("stepwise", cmd_stepwise, "step-wise tuning trace")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.fn(args, cfg)
    except (ConfigError, UsageError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (FaultTwinError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
