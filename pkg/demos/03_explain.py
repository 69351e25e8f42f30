"""
Exact Shapley attributions
==========================

Interventional TreeSHAP against a background sample. The attributions of a row
plus the background mean margin add up to the model's margin for that row.
"""
import numpy as np

from faulttwin.dataset import CLASS_NAMES, split
from faulttwin.explain import brute_force_shap, decision_plot_table, mean_abs_shap, sample_background, tree_shap_batch
from faulttwin.gbdt import GbdtParams, fit
from faulttwin.sim import generate_dataset

ds = generate_dataset(n_rows=10_000, seed=42)
train, valid, _ = split(ds, (8, 1, 1), seed=0)
model = fit(train, valid, GbdtParams(num_boost_rounds=30, num_leaves=15), n_classes=5)

background = sample_background(train, 128, seed=0)
rows = valid.rows[:8]
expl = tree_shap_batch(model, rows, background)
print("largest efficiency gap:", max(e.efficiency_gap(model, x) for e, x in zip(expl, rows)))

e = expl[0]
k = int(valid.labels[0])
print(f"row 0 is {CLASS_NAMES[k]!r}; contributions to that class:")
for name, v in sorted(zip(ds.feature_names, e.contributions[k]), key=lambda t: -abs(t[1])):
    print(f"  {name:>6} {v:+.4f}")

# decision plot data: running margin as features are added by importance
for line in decision_plot_table(expl[:1], k, ds.feature_names)[:4]:
    print(line)

# on a tiny model the closed form matches the 2^F enumeration
pick = np.random.default_rng(0).choice(train.n_rows, 500, replace=False)
small = fit(train.subset(np.sort(pick)), None, GbdtParams(num_boost_rounds=3, num_leaves=4), n_classes=5)
fast = tree_shap_batch(small, rows[:1], background[:16])[0]
slow = brute_force_shap(small, rows[0], background[:16])
print("TreeSHAP vs brute force:", float(np.max(np.abs(fast.contributions - slow.contributions))))

print("mean |SHAP| per feature:")
print(np.round(mean_abs_shap(model, valid.rows[:128], background), 4))
