"""Leaf-wise histogram gradient boosting for multi-class classification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..dataset import Dataset
from ..errors import DegenerateLabels, InvalidData, ShapeMismatch
from . import _kernels
from .objective import FocalObjective, objective_from_dict, softmax
from .params import GbdtParams

SCHEMA_VERSION = 1
# Splits must beat round-off in the gain arithmetic.
MIN_GAIN = 1e-12


@dataclass
class Tree:
    """Flattened binary tree; ``feature == -1`` marks a leaf.

    Node 0 is the root. Internal nodes send ``x <= threshold`` (and NaN, since
    ``default_left`` is always true) to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.gain = np.asarray(self.gain, dtype=np.float64)
        self.count = np.asarray(self.count, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                best = max(best, d)
            else:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _kernels.predict_tree(
            np.ascontiguousarray(x, dtype=np.float64),
            self.feature, self.threshold, self.left, self.right, self.value,
        )

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "count": self.count.tolist(),
            "default_left": [True] * self.n_nodes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"],
                   d["gain"], d["count"])

    @classmethod
    def leaf(cls, value: float, count: int = 0) -> "Tree":
        return cls([-1], [0.0], [-1], [-1], [value], [0.0], [count])

    @classmethod
    def stump(cls, feature: int, threshold: float, left: float, right: float, gain=0.0) -> "Tree":
        """Depth-1 tree; handy for tests and hand-built models."""
        return cls([feature, -1, -1], [threshold, 0.0, 0.0], [1, -1, -1], [2, -1, -1],
                   [0.0, left, right], [gain, 0.0, 0.0], [0, 0, 0])


@dataclass
class GbdtModel:
    n_classes: int
    trees: list[list[Tree]]
    learning_rate: float
    base_score: np.ndarray
    feature_names: list[str]
    params: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    best_iteration: int | None = None

    def __post_init__(self):
        self.base_score = np.asarray(self.base_score, dtype=np.float64)
        self.feature_names = list(self.feature_names)
        for i, rnd in enumerate(self.trees):
            if len(rnd) != self.n_classes:
                raise ValueError(f"round {i} holds {len(rnd)} trees, expected {self.n_classes}")
        if self.best_iteration is None:
            self.best_iteration = len(self.trees)
        self._packed = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def active_trees(self) -> list[list[Tree]]:
        """Rounds that contribute to predictions (up to ``best_iteration``)."""
        return self.trees[: self.best_iteration]

    def _pack(self):
        if self._packed is None:
            feats, thr, lefts, rights, vals, roots, cls = [], [], [], [], [], [], []
            offset = 0
            for rnd in self.active_trees():
                for k, t in enumerate(rnd):
                    internal = t.feature >= 0
                    feats.append(t.feature)
                    thr.append(t.threshold)
                    lefts.append(np.where(internal, t.left + offset, -1))
                    rights.append(np.where(internal, t.right + offset, -1))
                    vals.append(t.value)
                    roots.append(offset)
                    cls.append(k)
                    offset += t.n_nodes
            cat = (lambda a, dt: np.concatenate(a).astype(dt) if a else np.zeros(0, dt))
            self._packed = (
                cat(feats, np.int64), cat(thr, np.float64), cat(lefts, np.int64),
                cat(rights, np.int64), cat(vals, np.float64),
                np.asarray(roots, dtype=np.int64), np.asarray(cls, dtype=np.int64),
            )
        return self._packed

    def _check_rows(self, rows) -> np.ndarray:
        x = np.asarray(rows, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeMismatch(
                f"expected rows with {self.n_features} features, got shape {np.shape(rows)}"
            )
        return np.ascontiguousarray(x)

    def raw_margin(self, rows) -> np.ndarray:
        x = self._check_rows(rows)
        packed = self._pack()
        out = _kernels.predict_forest(x, *packed, self.n_classes)
        return out + self.base_score

    def predict_proba(self, rows) -> np.ndarray:
        return softmax(self.raw_margin(rows))

    def predict(self, rows) -> np.ndarray:
        return np.argmax(self.raw_margin(rows), axis=1)

    def feature_importance(self, kind: str = "gain") -> np.ndarray:
        out = np.zeros(self.n_features)
        for rnd in self.active_trees():
            for t in rnd:
                internal = t.feature >= 0
                if kind == "gain":
                    np.add.at(out, t.feature[internal], t.gain[internal])
                elif kind == "split_count":
                    np.add.at(out, t.feature[internal], 1.0)
                else:
                    raise ValueError(f"unknown importance kind {kind!r}")
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score.tolist(),
            "feature_names": self.feature_names,
            "params": self.params,
            "objective": self.objective,
            "best_iteration": self.best_iteration,
            "trees": [[t.to_dict() for t in rnd] for rnd in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {d.get('schema_version')!r}")
        return cls(
            n_classes=d["n_classes"],
            trees=[[Tree.from_dict(t) for t in rnd] for rnd in d["trees"]],
            learning_rate=d["learning_rate"],
            base_score=d["base_score"],
            feature_names=d["feature_names"],
            params=d["params"],
            objective=d["objective"],
            best_iteration=d["best_iteration"],
        )

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        return cls.from_dict(json.loads(text))


# -- training -----------------------------------------------------------------


class _BinMapper:
    def __init__(self, x: np.ndarray, max_bins: int):
        self.edges = []
        for f in range(x.shape[1]):
            col = x[:, f]
            uniq = np.unique(col)
            if len(uniq) <= max_bins:
                e = (uniq[:-1] + uniq[1:]) / 2
            else:
                qs = np.quantile(col, np.arange(1, max_bins) / max_bins)
                e = np.unique(qs)
                e = e[e < uniq[-1]]
            self.edges.append(np.asarray(e, dtype=np.float64))
        self.n_bins = np.array([len(e) + 1 for e in self.edges], dtype=np.int64)
        dtype = np.uint8 if self.n_bins.max() <= 256 else np.uint16
        self.dtype = dtype

    def transform(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape, dtype=self.dtype)
        for f, e in enumerate(self.edges):
            # bin b holds (edges[b-1], edges[b]], so bin <= b  <=>  x <= edges[b]
            out[:, f] = np.searchsorted(e, x[:, f], side="left")
        return out


@dataclass
class TrainingState:
    """What a training callback sees after each completed round."""

    round: int
    model: GbdtModel
    train_margin: np.ndarray
    valid_margin: np.ndarray | None
    valid_loss: float | None


def _grow_tree(bins, mapper, rows, grad, hess, feature_mask, params: GbdtParams):
    n_bins_max = int(mapper.n_bins.max())
    lam = params.lambda_l2
    min_data = params.min_data_in_leaf
    min_hess = params.min_sum_hessian_in_leaf
    mds = params.max_delta_step or 0.0
    max_depth = params.max_depth if params.max_depth is not None else 1 << 30

    feature, threshold, left, right, value, gain, count = [], [], [], [], [], [], []
    bin_threshold = []

    def new_node(n_rows):
        feature.append(-1)
        threshold.append(0.0)
        bin_threshold.append(0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        gain.append(0.0)
        count.append(n_rows)
        return len(feature) - 1

    def evaluate(node, node_rows, hist, depth):
        g, f, b, gt, ht = _kernels.find_best_split(
            hist, mapper.n_bins, feature_mask, lam, min_data, min_hess, mds, MIN_GAIN
        )
        if depth >= max_depth:
            f = -1
        return {"node": node, "rows": node_rows, "hist": hist, "depth": depth,
                "gain": g, "f": f, "b": b, "G": gt, "H": ht}

    root = new_node(len(rows))
    open_leaves = [evaluate(root, rows, _kernels.build_histogram(bins, rows, grad, hess, n_bins_max), 0)]
    n_leaves = 1
    while n_leaves < params.num_leaves:
        best_i = -1
        for i, leaf in enumerate(open_leaves):
            if leaf["f"] < 0:
                continue
            if best_i < 0 or leaf["gain"] > open_leaves[best_i]["gain"]:
                best_i = i
        if best_i < 0:
            break
        leaf = open_leaves.pop(best_i)
        f, b = leaf["f"], leaf["b"]
        lrows, rrows = _kernels.partition(bins, leaf["rows"], f, b)
        if len(lrows) <= len(rrows):
            lhist = _kernels.build_histogram(bins, lrows, grad, hess, n_bins_max)
            rhist = leaf["hist"] - lhist
        else:
            rhist = _kernels.build_histogram(bins, rrows, grad, hess, n_bins_max)
            lhist = leaf["hist"] - rhist
        node = leaf["node"]
        ln, rn = new_node(len(lrows)), new_node(len(rrows))
        feature[node] = f
        threshold[node] = float(mapper.edges[f][b])
        bin_threshold[node] = int(b)
        left[node], right[node] = ln, rn
        gain[node] = float(leaf["gain"])
        d = leaf["depth"] + 1
        open_leaves.append(evaluate(ln, lrows, lhist, d))
        open_leaves.append(evaluate(rn, rrows, rhist, d))
        n_leaves += 1
    for leaf in open_leaves:
        w = _kernels.leaf_output(leaf["G"], leaf["H"], lam, mds)
        value[leaf["node"]] = w * params.learning_rate
    tree = Tree(feature, threshold, left, right, value, gain, count)
    leaves = [(leaf["rows"], value[leaf["node"]]) for leaf in open_leaves]
    return tree, leaves, np.asarray(bin_threshold, dtype=np.int64)


def _validate(ds: Dataset, what: str):
    if not np.isfinite(ds.rows).all():
        raise InvalidData(f"{what} features contain non-finite values")


def fit(
    train: Dataset,
    valid: Dataset | None = None,
    params: GbdtParams | None = None,
    objective=None,
    seed: int = 0,
    *,
    n_classes: int | None = None,
    callback: Callable[[TrainingState], bool] | None = None,
) -> GbdtModel:
    """Train a multi-class booster, one tree per class per round.

    ``callback`` is invoked after every round and may return ``False`` to stop
    training early (used by the trial scheduler).
    """
    params = params or GbdtParams()
    objective = objective or FocalObjective(params.focal_gamma)
    _validate(train, "train")
    if valid is not None:
        _validate(valid, "valid")
        if valid.feature_names != train.feature_names:
            raise ShapeMismatch("valid features differ from train features")
    y = train.labels
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("training labels contain a single class")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if y.max() >= k or (valid is not None and valid.labels.max() >= k):
        raise InvalidData(f"labels exceed n_classes={k}")

    x = np.ascontiguousarray(train.rows)
    n, n_feat = x.shape
    mapper = _BinMapper(x, params.n_histogram_bins)
    bins = mapper.transform(x)
    rng = np.random.default_rng(seed)

    prior = np.bincount(y, minlength=k) / n
    base = np.log(np.maximum(prior, 1e-12))
    base = base - base.mean()

    model = GbdtModel(
        n_classes=k,
        trees=[],
        learning_rate=params.learning_rate,
        base_score=base,
        feature_names=train.feature_names,
        params=params.to_dict(),
        objective=objective.to_dict(),
    )
    train_margin = np.tile(base, (n, 1))
    valid_margin = np.tile(base, (valid.n_rows, 1)) if valid is not None else None
    # validation rows share the training bins, so trees can route them by bin
    vbins = mapper.transform(np.ascontiguousarray(valid.rows)) if valid is not None else None
    valid_rows = np.arange(valid.n_rows, dtype=np.int64) if valid is not None else None

    all_rows = np.arange(n, dtype=np.int64)
    n_bag = max(1, int(math.ceil(params.bagging_fraction * n)))
    n_sub = max(1, int(round(params.feature_fraction * n_feat)))
    best_loss, best_iter, since_best = math.inf, 0, 0

    for rnd in range(params.num_boost_rounds):
        grad, hess = objective.grad_hess(train_margin, y)
        round_trees = []
        for c in range(k):
            rows = all_rows
            if n_bag < n:
                rows = np.sort(rng.choice(n, size=n_bag, replace=False)).astype(np.int64)
            mask = np.ones(n_feat, dtype=np.bool_)
            if n_sub < n_feat:
                mask[:] = False
                mask[rng.choice(n_feat, size=n_sub, replace=False)] = True
            tree, leaf_rows, bin_thr = _grow_tree(
                bins, mapper, rows, np.ascontiguousarray(grad[:, c]),
                np.ascontiguousarray(hess[:, c]), mask, params,
            )
            round_trees.append((tree, bin_thr))
            col = np.zeros(n)
            for leaf_idx, v in leaf_rows:
                _kernels.scatter_add(col, leaf_idx, v)
            if n_bag < n:
                # out-of-bag rows were never routed during growth
                oob = np.ones(n, dtype=np.bool_)
                oob[rows] = False
                _kernels.add_tree_binned(col[:, None], 0, bins, np.flatnonzero(oob), tree.feature,
                                         bin_thr, tree.left, tree.right, tree.value)
            train_margin[:, c] += col
        if valid_margin is not None:
            for c, (tree, bin_thr) in enumerate(round_trees):
                _kernels.add_tree_binned(valid_margin, c, vbins, valid_rows, tree.feature, bin_thr,
                                         tree.left, tree.right, tree.value)
        model.trees.append([tree for tree, _ in round_trees])
        model.best_iteration = len(model.trees)
        model._packed = None

        valid_loss = None
        if valid is not None:
            valid_loss = float(np.mean(objective.loss(valid_margin, valid.labels)))
            if valid_loss < best_loss:
                best_loss, best_iter, since_best = valid_loss, rnd + 1, 0
            else:
                since_best += 1
        if callback is not None:
            state = TrainingState(rnd + 1, model, train_margin, valid_margin, valid_loss)
            if callback(state) is False:
                break
        if (
            params.early_stopping_rounds is not None
            and valid is not None
            and since_best >= params.early_stopping_rounds
        ):
            break

    if params.early_stopping_rounds is not None and valid is not None:
        model.best_iteration = best_iter
    model._packed = None
    return model


def predict_proba(model: GbdtModel, rows) -> np.ndarray:
    return model.predict_proba(rows)


def feature_importance(model: GbdtModel, kind: str = "gain") -> np.ndarray:
    return model.feature_importance(kind)
