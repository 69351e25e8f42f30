"""
Dropping features until the score saturates
===========================================

Append a pure-noise channel and let the loop tune, rank by mean |SHAP| and
drop. The noise column should be the first to go.
"""
import numpy as np

from faulttwin.pipeline import feature_drop_loop
from faulttwin.scheduler import AshaConfig
from faulttwin.sim import generate_dataset

ds = generate_dataset(n_rows=20_000, seed=42)
rng = np.random.default_rng(1)
ds = ds.with_feature("noise", rng.normal(size=ds.n_rows))

history = feature_drop_loop(ds, scheduler=AshaConfig(8, 128, 4), budget=8, patience=1,
                            shap_instances=128, shap_background=64, seed=0)
for it in history.iterations:
    mark = "*" if it.index == history.champion_index else " "
    print(f"{mark} iteration {it.index}: dropped {it.dropped_feature or '-':<6} "
          f"{len(it.features):>2} features, valid macro F1 {it.metric:.4f}, "
          f"held-out macro F1 {it.report.macro_f1:.4f}")
