"""Tabular dataset container, CSV I/O and the 8:1:1 split."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidData

N_CLASSES = 5

CLASS_NAMES = (
    "Normal behavior",
    "Line-to-line fault",
    "Three-phase sensor fault",
    "Single-phase sag",
    "Three-phase grid fault",
)


@dataclass
class Dataset:
    """Row-major feature matrix with named columns and integer class labels."""

    feature_names: list[str]
    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.feature_names = list(self.feature_names)
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2:
            raise InvalidData(f"rows must be 2-D, got shape {self.rows.shape}")
        if self.rows.shape[1] != len(self.feature_names):
            raise InvalidData(
                f"{self.rows.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if self.labels.shape != (self.rows.shape[0],):
            raise InvalidData("labels must have one entry per row")
        if self.rows.shape[0] == 0:
            raise InvalidData("dataset has no rows")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise InvalidData("feature names must be unique")
        if self.labels.min() < 0 or self.labels.max() >= N_CLASSES:
            raise InvalidData(f"labels must lie in 0..{N_CLASSES - 1}")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.feature_names, self.rows[index], self.labels[index])

    def drop_feature(self, name: str) -> "Dataset":
        keep = [i for i, n in enumerate(self.feature_names) if n != name]
        if len(keep) == self.n_features:
            raise KeyError(name)
        return Dataset([self.feature_names[i] for i in keep], self.rows[:, keep], self.labels)

    def with_feature(self, name: str, values) -> "Dataset":
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        return Dataset(self.feature_names + [name], np.hstack([self.rows, values]), self.labels)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.feature_names).encode())
        h.update(np.ascontiguousarray(self.rows).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.feature_names + ["label"])
        for row, label in zip(self.rows.tolist(), self.labels.tolist()):
            writer.writerow([repr(v) for v in row] + [label])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidData(f"{path}: empty file") from None
            if not header or header[-1] != "label":
                raise InvalidData(f"{path}: last header column must be 'label'")
            body = list(reader)
        if not body:
            raise InvalidData(f"{path}: no data rows")
        try:
            table = np.array(body, dtype=np.float64)
        except ValueError as exc:
            raise InvalidData(f"{path}: {exc}") from None
        return cls(header[:-1], table[:, :-1], table[:, -1].astype(np.int64))


def concat(parts: Sequence[Dataset]) -> Dataset:
    names = parts[0].feature_names
    for p in parts[1:]:
        if p.feature_names != names:
            raise InvalidData("cannot concatenate datasets with different features")
    return Dataset(
        names,
        np.vstack([p.rows for p in parts]),
        np.concatenate([p.labels for p in parts]),
    )


def split(dataset: Dataset, ratios=(8, 1, 1), seed: int = 0) -> tuple[Dataset, ...]:
    """Shuffle with ``seed`` and cut into parts sized by floor(ratio share * N).

    The last part takes the remainder, so the parts always partition the rows.
    """
    if len(ratios) < 1 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    n = dataset.n_rows
    if n < len(ratios):
        raise InsufficientData(f"{n} rows cannot be split into {len(ratios)} parts")
    fr = [Fraction(r).limit_denominator(10**9) for r in ratios]
    total = sum(fr)
    sizes = [int(n * r / total) for r in fr[:-1]]
    sizes.append(n - sum(sizes))
    if min(sizes) == 0:
        raise InsufficientData(f"{n} rows leave an empty part for ratios {tuple(ratios)}")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    return tuple(dataset.subset(np.sort(perm[a:b])) for a, b in zip(bounds[:-1], bounds[1:]))
