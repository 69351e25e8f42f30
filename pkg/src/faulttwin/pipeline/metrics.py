"""Per-class precision/recall/F1 with macro and weighted averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import CLASS_NAMES
from ..errors import EmptyInput, InvalidData

SCHEMA_VERSION = 1


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class ClassificationReport:
    class_names: list[str]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.support.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.n_samples)

    @property
    def macro(self) -> dict[str, float]:
        return {"precision": float(self.precision.mean()), "recall": float(self.recall.mean()),
                "f1": float(self.f1.mean())}

    @property
    def weighted(self) -> dict[str, float]:
        n = self.n_samples
        # weight before dividing so that all-ones scores average to exactly 1
        return {"precision": float(self.support @ self.precision / n),
                "recall": float(self.support @ self.recall / n),
                "f1": float(self.support @ self.f1 / n)}

    @property
    def macro_f1(self) -> float:
        return self.macro["f1"]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "classes": [
                {"name": n, "precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
                for n, p, r, f, s in zip(self.class_names, self.precision, self.recall, self.f1, self.support)
            ],
            "macro_average": self.macro,
            "weighted_average": self.weighted,
            "accuracy": self.accuracy,
            "confusion_matrix": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassificationReport":
        rows = d["classes"]
        return cls(
            [r["name"] for r in rows],
            np.array([r["precision"] for r in rows]),
            np.array([r["recall"] for r in rows]),
            np.array([r["f1"] for r in rows]),
            np.array([r["support"] for r in rows], dtype=np.int64),
            np.array(d["confusion_matrix"], dtype=np.int64),
        )

    def to_text(self, digits: int = 2) -> str:
        """Plain-text table: one row per class, then macro, weighted and accuracy."""
        width = max(len("Weighted average"), *(len(n) for n in self.class_names))
        fmt = f"{{:.{digits}f}}"
        cols = ["Precision", "Recall", "F1-score", "Support"]
        cw = max(len(c) for c in cols)
        lines = [" " * width + "  " + "  ".join(c.rjust(cw) for c in cols)]

        def row(name, p, r, f, s):
            vals = [fmt.format(p), fmt.format(r), fmt.format(f), str(int(s))]
            return name.ljust(width) + "  " + "  ".join(v.rjust(cw) for v in vals)

        for i, name in enumerate(self.class_names):
            lines.append(row(name, self.precision[i], self.recall[i], self.f1[i], self.support[i]))
        lines.append("")
        m, w = self.macro, self.weighted
        lines.append(row("Macro average", m["precision"], m["recall"], m["f1"], self.n_samples))
        lines.append(row("Weighted average", w["precision"], w["recall"], w["f1"], self.n_samples))
        lines.append("Accuracy".ljust(width) + "  " + fmt.format(self.accuracy).rjust(cw * 3 + 4)
                     + "  " + str(self.n_samples).rjust(cw))
        return "\n".join(lines) + "\n"


def classification_report(y_true, y_pred, class_names: Sequence[str] | None = None) -> ClassificationReport:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise InvalidData("y_true and y_pred must be 1-D arrays of equal length")
    if len(y_true) == 0:
        raise EmptyInput("cannot build a report from zero samples")
    names = list(class_names) if class_names is not None else list(CLASS_NAMES)
    k = len(names)
    for what, y in (("y_true", y_true), ("y_pred", y_pred)):
        if not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= k:
            raise InvalidData(f"{what} labels must be integers in [0, {k})")
    cm = confusion_matrix(y_true, y_pred, k)
    tp = np.diag(cm)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return ClassificationReport(names, precision, recall, f1, cm.sum(axis=1), cm)
