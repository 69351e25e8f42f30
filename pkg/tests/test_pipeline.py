import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faulttwin.dataset import CLASS_NAMES, Dataset
from faulttwin.errors import CannotDrop, EmptyInput, IntegrityError, InvalidData, TamperError
from faulttwin.gbdt import GbdtParams, fit
from faulttwin.pipeline import (
    ClassificationReport,
    PipelineHistory,
    RunRecord,
    classification_report,
    confusion_matrix,
    default_search_space,
    feature_drop_loop,
    load_run,
    rank_and_drop,
    run_dir,
    save_run,
    should_stop,
    trial_params,
    tune,
    validation_metrics,
)
from faulttwin.pipeline.loop import Iteration
from faulttwin.pipeline.tracking import read_artifact
from faulttwin.scheduler import AshaConfig, read_log, verify_log

from oracles import report_by_loops

labels = st.integers(0, 4)


def test_report_hand_example():
    r = classification_report([0, 0, 1, 1], [0, 1, 1, 1], ["a", "b"])
    np.testing.assert_allclose(r.precision, [1.0, 2 / 3], rtol=1e-15)
    np.testing.assert_allclose(r.recall, [0.5, 1.0], rtol=1e-15)
    np.testing.assert_allclose(r.f1, [2 / 3, 0.8], rtol=1e-15)
    assert r.accuracy == 0.75
    assert r.macro_f1 == pytest.approx((2 / 3 + 0.8) / 2, rel=1e-15)


def test_perfect_predictions():
    y = np.array([0, 1, 2, 3, 4, 0, 0])
    r = classification_report(y, y, CLASS_NAMES)
    assert r.accuracy == 1.0 and r.macro_f1 == 1.0
    assert all(v == 1.0 for v in r.weighted.values())


def test_absent_class_scores_zero():
    r = classification_report([0, 0, 1], [0, 0, 0], ["a", "b", "c"])
    assert r.support.tolist() == [2, 1, 0]
    assert r.precision[2] == 0 and r.recall[2] == 0 and r.f1[2] == 0
    assert r.recall[1] == 0 and r.precision[1] == 0


@given(st.lists(st.tuples(labels, labels), min_size=1, max_size=200))
def test_report_matches_loop_oracle(pairs):
    y, p = map(np.array, zip(*pairs))
    r = classification_report(y, p, CLASS_NAMES)
    rows, acc = report_by_loops(y.tolist(), p.tolist(), 5)
    ref = np.array(rows)
    np.testing.assert_allclose(r.precision, ref[:, 0], atol=1e-15)
    np.testing.assert_allclose(r.recall, ref[:, 1], atol=1e-15)
    np.testing.assert_allclose(r.f1, ref[:, 2], atol=1e-15)
    assert r.support.tolist() == ref[:, 3].tolist()
    assert r.accuracy == pytest.approx(acc, abs=1e-15)
    # invariants
    assert r.confusion.sum() == len(y)
    assert r.weighted["recall"] == pytest.approx(r.accuracy, abs=1e-12)
    assert r.f1.min() - 1e-12 <= r.macro_f1 <= r.f1.max() + 1e-12
    assert np.all((r.precision >= 0) & (r.precision <= 1))


def test_report_errors():
    with pytest.raises(EmptyInput):
        classification_report([], [])
    with pytest.raises(InvalidData):
        classification_report([0, 1], [0])
    with pytest.raises(InvalidData):
        classification_report([0, 7], [0, 1], ["a", "b"])


def test_report_round_trip_and_text():
    r = classification_report([0, 1, 2, 3, 4, 4], [0, 1, 2, 3, 4, 3], CLASS_NAMES)
    back = ClassificationReport.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back.to_dict() == r.to_dict()
    text = r.to_text()
    lines = text.splitlines()
    assert lines[0].split() == ["Precision", "Recall", "F1-score", "Support"]
    assert lines[1].startswith("Normal behavior")
    for name in ("Macro average", "Weighted average", "Accuracy"):
        assert any(l.startswith(name) for l in lines)


def test_confusion_matrix_orientation():
    c = confusion_matrix([0, 0, 1], [1, 1, 1], 2)
    assert c.tolist() == [[0, 2], [0, 1]]  # rows are true labels


# -- feature dropping ----------------------------------------------------------


def signal_noise_dataset(n=600, seed=0):
    rng = np.random.default_rng(seed)
    signal = rng.uniform(-1, 1, n)
    noise = rng.normal(size=n)
    y = (signal > 0).astype(int)
    return Dataset(["noise", "signal"], np.column_stack([noise, signal]), y)


@pytest.mark.parametrize("ranking", ["importance_gain", "importance_split", "mean_abs_shap"])
def test_rank_and_drop_removes_noise(ranking):
    ds = signal_noise_dataset()
    model = fit(ds, None, GbdtParams(num_boost_rounds=5, num_leaves=2), n_classes=2)
    # a two-leaf booster never needs the noise column
    reduced, dropped = rank_and_drop(ds, model, ranking, **({"n_instances": 32, "n_background": 16}
                                                           if ranking == "mean_abs_shap" else {}))
    assert dropped == "noise"
    assert reduced.feature_names == ["signal"]
    assert ds.feature_names == ["noise", "signal"]  # input untouched


def test_rank_and_drop_errors():
    ds = signal_noise_dataset()
    model = fit(ds, None, GbdtParams(num_boost_rounds=2, num_leaves=2), n_classes=2)
    with pytest.raises(CannotDrop):
        rank_and_drop(ds.drop_feature("noise"), model)
    with pytest.raises(ValueError):
        rank_and_drop(ds, model, "coin_flip")


def test_should_stop_rule():
    assert not should_stop([0.90], 1)
    assert not should_stop([0.90, 0.92], 1)
    assert should_stop([0.90, 0.92, 0.91], 1)
    assert not should_stop([0.90, 0.92, 0.91], 2)
    assert should_stop([0.90, 0.92, 0.91, 0.92], 2)  # a tie is not an improvement


def fake_iteration(i, metric):
    r = classification_report([0, 1], [0, 1], ["a", "b"])
    return Iteration(i, None, [], GbdtParams(), metric, r, None, "")


def test_champion_is_best_not_last():
    h = PipelineHistory([fake_iteration(i, m) for i, m in enumerate((0.90, 0.92, 0.91))])
    assert h.champion_index == 1  # second iteration
    h = PipelineHistory([fake_iteration(i, m) for i, m in enumerate((0.9, 0.9))])
    assert h.champion_index == 0


@settings(max_examples=40)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_champion_dominates(metrics):
    h = PipelineHistory([fake_iteration(i, m) for i, m in enumerate(metrics)])
    assert all(h.champion.metric >= it.metric for it in h.iterations)


# -- tuning glue --------------------------------------------------------------------


def test_default_search_space_and_trial_params():
    space = default_search_space()
    assert set(space.names) == {"learning_rate", "num_leaves", "min_data_in_leaf", "lambda_l2",
                                "feature_fraction", "bagging_fraction", "focal_gamma"}
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = trial_params(space.sample(rng), rounds=64)
        assert p.num_boost_rounds == 64 and isinstance(p.num_leaves, int)


def test_validation_metrics():
    margin = np.log(np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]))
    loss, acc = validation_metrics(margin, np.array([0, 1, 1]))
    expect = np.mean([-(1 - p) ** 2 * np.log(p) for p in (0.9, 0.8, 0.4)])
    assert loss == pytest.approx(expect, rel=1e-12)
    assert acc == pytest.approx(2 / 3)


def test_small_tune_is_deterministic(small_split, tmp_path):
    tr, va, _ = small_split
    cfg = AshaConfig(2, 8, 2)
    runs = [tune(tr, va, scheduler=cfg, budget=5, seed=4, log_path=tmp_path / f"{k}.jsonl") for k in range(2)]
    assert (tmp_path / "0.jsonl").read_bytes() == (tmp_path / "1.jsonl").read_bytes()
    assert runs[0].model.to_json() == runs[1].model.to_json()
    verify_log(read_log(tmp_path / "0.jsonl"))
    assert runs[0].best_params.num_boost_rounds == 8
    reported = [e for e in read_log(tmp_path / "0.jsonl") if e["event"] == "metric_reported"]
    assert all(0 <= e["extras"]["accuracy"] <= 1 for e in reported)


# -- tracking -------------------------------------------------------------------------


def test_tracking_round_trip(small_model, tmp_path):
    rec = RunRecord({"a": 1}, "abc", {"macro_f1": 0.5})
    rid = save_run(rec, small_model, tmp_path, report={"x": 1}, study_log="{}\n")
    assert len(rid) == 16
    rec2, model = load_run(rid, tmp_path)
    assert rec2.config == {"a": 1} and model.to_json() == small_model.to_json()
    assert read_artifact(rid, tmp_path, "study.jsonl") == b"{}\n"
    # same content, same id, and the existing directory is kept
    stamp = (run_dir(tmp_path, rid) / "record.json").read_bytes()
    assert save_run(RunRecord({"a": 1}, "abc", {"macro_f1": 0.5}), small_model, tmp_path,
                    report={"x": 1}, study_log="{}\n") == rid
    assert (run_dir(tmp_path, rid) / "record.json").read_bytes() == stamp
    other = save_run(RunRecord({"a": 2}, "abc", {"macro_f1": 0.5}), small_model, tmp_path)
    assert other != rid


def test_tracking_detects_damage(small_model, tmp_path):
    rid = save_run(RunRecord({}, "fp"), small_model, tmp_path, report={"m": 1})
    path = run_dir(tmp_path, rid)
    (path / "report.json").write_text('{"m": 2}\n')
    with pytest.raises(TamperError):
        load_run(rid, tmp_path)
    (path / "report.json").unlink()
    with pytest.raises(IntegrityError):
        load_run(rid, tmp_path)
    rid2 = save_run(RunRecord({"k": 1}, "fp"), small_model, tmp_path)
    (run_dir(tmp_path, rid2) / "record.json").write_text("{not json")
    with pytest.raises(IntegrityError):
        load_run(rid2, tmp_path)
    rid3 = save_run(RunRecord({"k": 3}, "fp"), small_model, tmp_path)
    d = json.loads((run_dir(tmp_path, rid3) / "record.json").read_text())
    d["metrics"] = {"macro_f1": 1.0}
    (run_dir(tmp_path, rid3) / "record.json").write_text(json.dumps(d))
    with pytest.raises(TamperError):
        load_run(rid3, tmp_path)
    with pytest.raises(IntegrityError):
        load_run("0" * 16, tmp_path)


# -- loop -----------------------------------------------------------------------------


def test_tiny_feature_drop_loop(small_dataset, tmp_path):
    rng = np.random.default_rng(0)
    ds = small_dataset.with_feature("noise", rng.normal(size=small_dataset.n_rows))
    h = feature_drop_loop(ds, scheduler=AshaConfig(4, 16, 4), budget=3, patience=1, max_iterations=3,
                          shap_instances=64, shap_background=32, seed=1)
    assert 1 <= len(h.iterations) <= 3
    assert h.iterations[0].features == ds.feature_names
    for prev, it in zip(h.iterations, h.iterations[1:]):
        assert it.dropped_feature in prev.features and it.dropped_feature not in it.features
        assert len(it.features) == len(prev.features) - 1
        assert prev.feature_scores is not None
    assert all(h.champion.metric >= it.metric for it in h.iterations)
    out = h.write(tmp_path)
    doc = json.loads((out / "history.json").read_text())
    assert doc["schema_version"] == 1 and doc["champion_index"] == h.champion_index
    assert (out / "study_00.jsonl").exists() and (out / "model_00.json").exists()
    with pytest.raises(CannotDrop):
        feature_drop_loop(Dataset(["only"], ds.rows[:, :1], ds.labels))
