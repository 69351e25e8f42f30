"""
Synthetic fault data from the VSG state-space stand-in
======================================================

Each episode settles at one setpoint, jumps to another at t=0 and is sampled
after the jump; faulty scenarios overwrite the measurements with their
signature.
"""
import numpy as np

from faulttwin.dataset import CLASS_NAMES, split
from faulttwin.sim import default_model, generate_dataset

model = default_model()
print("spectral radius of I + dt*A:", round(model.spectral_radius(), 6))

ds = generate_dataset(n_rows=20_000, seed=42)
print(ds.n_rows, "rows,", ds.n_features, "features:", ", ".join(ds.feature_names))
for name, n in zip(CLASS_NAMES, ds.class_counts()):
    print(f"  {name:<26} {n:>6}")

# one row per class: the signatures are visible in the raw channels
for k, name in enumerate(CLASS_NAMES):
    row = ds.rows[np.flatnonzero(ds.labels == k)[0]]
    print(f"{name:<26}", np.array2string(row[:6], precision=3, suppress_small=True))

train, valid, test = split(ds, (8, 1, 1), seed=0)
print("split sizes:", train.n_rows, valid.n_rows, test.n_rows)
