"""
Bayesian search with ASHA early stopping
========================================

A small study: the GP proposes parameters, each trial boosts up to 128
rounds and reports validation focal loss at every rung; ASHA stops the trials
that rank in the bottom of their rung.
"""
from faulttwin.dataset import CLASS_NAMES, concat, split
from faulttwin.pipeline import classification_report, tune
from faulttwin.scheduler import AshaConfig, rung_members, verify_log
from faulttwin.sim import generate_dataset

ds = generate_dataset(n_rows=20_000, seed=42)
train, valid, test = split(ds, (8, 1, 1), seed=0)

cfg = AshaConfig(min_resource=8, max_resource=128, reduction_factor=4)
result = tune(train, valid, scheduler=cfg, budget=16, seed=0)
study = result.study

print(study.leaderboard_csv().splitlines()[0])
for line in study.leaderboard_csv().splitlines()[1:6]:
    print(line)

verify_log(study.log)  # replays every decision
for rung, members in zip(cfg.rungs, rung_members(study.log)):
    print(f"rung {rung:>4}: {len(members)} trials")
used = study.state.resource_consumed
print(f"rounds used {used} of {16 * cfg.max_resource} without early stopping")

held_out = concat([valid, test])
report = classification_report(held_out.labels, result.model.predict(held_out.rows), CLASS_NAMES)
print(report.to_text())
