"""
Boosting under the focal loss
=============================

Train the same booster with gamma=0 (plain cross-entropy) and gamma=2, and
print the held-out classification report for each.
"""
from faulttwin.dataset import CLASS_NAMES, concat, split
from faulttwin.gbdt import GbdtParams, fit
from faulttwin.pipeline import classification_report
from faulttwin.sim import generate_dataset

ds = generate_dataset(n_rows=30_000, seed=42)
train, valid, test = split(ds, (8, 1, 1), seed=0)
held_out = concat([valid, test])

for gamma in (0.0, 2.0):
    params = GbdtParams(num_boost_rounds=60, focal_gamma=gamma)
    model = fit(train, valid, params, seed=0, n_classes=len(CLASS_NAMES))
    report = classification_report(held_out.labels, model.predict(held_out.rows), CLASS_NAMES)
    print(f"\nfocal_gamma={gamma}")
    print(report.to_text(digits=3))

# which channels carry the splits
gain = model.feature_importance("gain")
for name, g in sorted(zip(ds.feature_names, gain), key=lambda t: -t[1])[:5]:
    print(f"{name:>6} {g:10.1f}")
