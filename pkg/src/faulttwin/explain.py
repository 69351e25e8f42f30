"""Exact interventional Shapley attributions for the boosted-tree ensemble.

For one instance ``x`` and one background row ``z`` a tree is walked along
every path that some coalition can reach: where ``x`` and ``z`` agree the walk
follows them, where they disagree it forks into an "x-side" and a "z-side"
branch and pins that feature to the side taken. A leaf with value ``v`` that
is reached with ``a`` features pinned to ``x`` and ``b`` pinned to ``z`` adds
``v * (a-1)! b! / (a+b)!`` to each x-pinned feature and subtracts
``v * a! (b-1)! / (a+b)!`` from each z-pinned one. Averaging over the
background gives the interventional Shapley value, and
``base + sum(contributions) == margin`` holds per class.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from numba import njit

from .dataset import Dataset
from .errors import OracleTooLarge, ShapeMismatch
from .gbdt.booster import GbdtModel
from .gbdt.objective import softmax

SCHEMA_VERSION = 1
MAX_ORACLE_FEATURES = 15
DEFAULT_BACKGROUND = 1024


@dataclass
class ShapExplanation:
    base_value: np.ndarray  # (K,)
    contributions: np.ndarray  # (K, F)
    predicted_class: int
    class_probabilities: np.ndarray  # (K,)

    def margins(self) -> np.ndarray:
        return self.base_value + self.contributions.sum(axis=1)

    def efficiency_gap(self, model: GbdtModel, instance) -> float:
        """max |base + sum(phi) - raw margin| over classes."""
        raw = model.raw_margin(np.asarray(instance, dtype=np.float64)[None, :])[0]
        return float(np.max(np.abs(self.margins() - raw)))

    def to_dict(self) -> dict:
        return {
            "base_value": self.base_value.tolist(),
            "contributions": self.contributions.tolist(),
            "predicted_class": int(self.predicted_class),
            "probabilities": self.class_probabilities.tolist(),
        }


# -- kernel -------------------------------------------------------------------


def _weight_table(max_features: int) -> np.ndarray:
    # w[a, b] = a! b! / (a + b + 1)!
    n = max_features + 1
    w = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            w[a, b] = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 1)
    return w


@njit(cache=True)
def _shap_kernel(X, Z, feature, threshold, left, right, value, roots, tree_class,
                 n_classes, weights):
    n_inst, n_feat = X.shape
    n_bg = Z.shape[0]
    phi = np.zeros((n_inst, n_classes, n_feat))
    max_nodes = 0
    for t in range(roots.shape[0]):
        end = roots[t + 1] if t + 1 < roots.shape[0] else feature.shape[0]
        if end - roots[t] > max_nodes:
            max_nodes = end - roots[t]
    cap = 3 * max_nodes + 4
    st_node = np.empty(cap, dtype=np.int64)
    st_feat = np.empty(cap, dtype=np.int64)
    st_side = np.empty(cap, dtype=np.int64)
    side = np.zeros(n_feat, dtype=np.int64)  # 0 free, 1 pinned to x, 2 pinned to z
    pinned = np.empty(n_feat, dtype=np.int64)
    acc = np.zeros(n_feat)
    for i in range(n_inst):
        for t in range(roots.shape[0]):
            k = tree_class[t]
            acc[:] = 0.0
            for j in range(n_bg):
                sp = 0
                st_node[0] = roots[t]
                st_feat[0] = -1
                st_side[0] = 0
                sp = 1
                n_pin = 0
                nx = 0
                nz = 0
                while sp > 0:
                    sp -= 1
                    node = st_node[sp]
                    f = st_feat[sp]
                    s = st_side[sp]
                    if node == -2:
                        side[f] = 0
                        n_pin -= 1
                        if s == 1:
                            nx -= 1
                        else:
                            nz -= 1
                        continue
                    if f >= 0:
                        side[f] = s
                        pinned[n_pin] = f
                        n_pin += 1
                        if s == 1:
                            nx += 1
                        else:
                            nz += 1
                        st_node[sp] = -2
                        st_feat[sp] = f
                        st_side[sp] = s
                        sp += 1
                    fn = feature[node]
                    if fn < 0:
                        v = value[node]
                        if n_pin > 0:
                            wx = v * weights[nx - 1, nz] if nx > 0 else 0.0
                            wz = v * weights[nx, nz - 1] if nz > 0 else 0.0
                            for q in range(n_pin):
                                g = pinned[q]
                                if side[g] == 1:
                                    acc[g] += wx
                                else:
                                    acc[g] -= wz
                        continue
                    thr = threshold[node]
                    x_right = X[i, fn] > thr
                    z_right = Z[j, fn] > thr
                    if side[fn] == 1:
                        st_node[sp] = right[node] if x_right else left[node]
                        st_feat[sp] = -1
                        sp += 1
                    elif side[fn] == 2:
                        st_node[sp] = right[node] if z_right else left[node]
                        st_feat[sp] = -1
                        sp += 1
                    elif x_right == z_right:
                        st_node[sp] = right[node] if x_right else left[node]
                        st_feat[sp] = -1
                        sp += 1
                    else:
                        st_node[sp] = right[node] if z_right else left[node]
                        st_feat[sp] = fn
                        st_side[sp] = 2
                        sp += 1
                        st_node[sp] = right[node] if x_right else left[node]
                        st_feat[sp] = fn
                        st_side[sp] = 1
                        sp += 1
            for f in range(n_feat):
                phi[i, k, f] += acc[f] / n_bg
    return phi


def _background_rows(background, n_features: int) -> np.ndarray:
    z = background.rows if isinstance(background, Dataset) else np.asarray(background, dtype=np.float64)
    z = np.atleast_2d(z)
    if z.shape[0] == 0:
        raise ShapeMismatch("background must contain at least one row")
    if z.shape[1] != n_features:
        raise ShapeMismatch(f"background has {z.shape[1]} features, model expects {n_features}")
    return np.ascontiguousarray(z, dtype=np.float64)


def _instance_rows(instances, n_features: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    if x.shape[1] != n_features:
        raise ShapeMismatch(f"instance has {x.shape[1]} features, model expects {n_features}")
    return np.ascontiguousarray(x)


def _assemble(model: GbdtModel, x: np.ndarray, base: np.ndarray, phi: np.ndarray):
    margins = model.raw_margin(x)
    probs = softmax(margins)
    return [
        ShapExplanation(base.copy(), phi[i], int(np.argmax(margins[i])), probs[i])
        for i in range(x.shape[0])
    ]


def tree_shap_batch(model: GbdtModel, instances, background) -> list[ShapExplanation]:
    x = _instance_rows(instances, model.n_features)
    z = _background_rows(background, model.n_features)
    base = model.raw_margin(z).mean(axis=0)
    feature, threshold, left, right, value, roots, tree_class = model._pack()
    if len(roots) == 0:
        phi = np.zeros((x.shape[0], model.n_classes, model.n_features))
    else:
        # -1 children are never followed; the kernel only indexes internal nodes.
        phi = _shap_kernel(x, z, feature, threshold, left, right, value, roots, tree_class,
                           model.n_classes, _weight_table(model.n_features))
    return _assemble(model, x, base, phi)


def tree_shap(model: GbdtModel, instance, background) -> ShapExplanation:
    x = np.asarray(instance, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("tree_shap explains a single instance; use tree_shap_batch")
    return tree_shap_batch(model, x[None, :], background)[0]


def brute_force_shap(model: GbdtModel, instance, background) -> ShapExplanation:
    """Shapley values by enumerating all 2^F coalitions (test oracle)."""
    n = model.n_features
    if n > MAX_ORACLE_FEATURES:
        raise OracleTooLarge(f"{n} features exceed the oracle limit of {MAX_ORACLE_FEATURES}")
    x = _instance_rows(instance, n)[0]
    z = _background_rows(background, n)
    value = {}
    for size in range(n + 1):
        for subset in combinations(range(n), size):
            hybrid = z.copy()
            hybrid[:, list(subset)] = x[list(subset)]
            value[frozenset(subset)] = model.raw_margin(hybrid).mean(axis=0)
    phi = np.zeros((model.n_classes, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for size in range(n):
            w = math.factorial(size) * math.factorial(n - size - 1) / math.factorial(n)
            for subset in combinations(others, size):
                s = frozenset(subset)
                phi[:, i] += w * (value[s | {i}] - value[s])
    base = value[frozenset()]
    return _assemble(model, x[None, :], base, phi[None, :, :])[0]


def sample_background(dataset: Dataset, n: int = DEFAULT_BACKGROUND, seed: int = 0) -> np.ndarray:
    if dataset.n_rows <= n:
        return dataset.rows.copy()
    idx = np.sort(np.random.default_rng(seed).choice(dataset.n_rows, size=n, replace=False))
    return dataset.rows[idx]


def mean_abs_shap(model: GbdtModel, instances, background) -> np.ndarray:
    """Mean |phi| per feature, summed over classes."""
    expl = tree_shap_batch(model, instances, background)
    return np.mean([np.abs(e.contributions).sum(axis=0) for e in expl], axis=0)


# -- exports ------------------------------------------------------------------


def decision_plot_table(explanations, class_id: int, feature_names) -> list[list]:
    """Rows of the decision-plot CSV (header first).

    Features are ordered by descending mean |contribution| for ``class_id``;
    each feature row holds the running margin after adding that feature, and
    the last row holds the predicted probability of ``class_id``.
    """
    if not explanations:
        raise ValueError("need at least one explanation")
    contrib = np.array([e.contributions[class_id] for e in explanations])  # (n, F)
    order = sorted(range(contrib.shape[1]), key=lambda f: (-np.mean(np.abs(contrib[:, f])), f))
    header = ["row", "feature"] + [f"instance_{i}" for i in range(len(explanations))]
    rows = [header, ["base", ""] + [float(e.base_value[class_id]) for e in explanations]]
    running = np.array([float(e.base_value[class_id]) for e in explanations])
    for f in order:
        running = running + contrib[:, f]
        rows.append([str(f), feature_names[f]] + running.tolist())
    rows.append(["probability", ""] + [float(softmax(e.margins())[class_id]) for e in explanations])
    return rows


def export_decision_plot(explanations, class_id: int, path, feature_names=None) -> Path:
    if not explanations:
        raise ValueError("need at least one explanation")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(explanations[0].contributions.shape[1])]
    table = decision_plot_table(explanations, class_id, list(feature_names))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in table:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def export_explanations_json(explanations, path, feature_names=None) -> Path:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(feature_names) if feature_names is not None else None,
        "explanations": [e.to_dict() for e in explanations],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return path
