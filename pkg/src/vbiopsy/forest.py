"""Gini CART trees and a bagged random forest, written from scratch.

Splits send ``x[feature] <= threshold`` left. Thresholds sit at midpoints
between consecutive distinct values. Equal impurity decreases resolve to
the lowest feature index, then the lowest threshold; equal votes resolve
to the lowest class index.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ingest import make_rng
from .radiomics import FEATURE_NAMES

FOREST_STREAM = 13


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0


@dataclass
class DecisionTree:
    feature: list[int] = field(default_factory=list)  # -1 marks a leaf
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    counts: list[list[int]] = field(default_factory=list)
    importance: np.ndarray | None = None  # weighted impurity decrease per feature

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def _add(self, counts) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append([int(c) for c in counts])
        return len(self.feature) - 1

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left = np.array(self.left)
        right = np.array(self.right)
        node = np.zeros(len(X), dtype=np.intp)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, feature[cur]] <= threshold[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        counts = np.array(self.counts)
        return np.argmax(counts[self.apply(X)], axis=1)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "counts": self.counts}

    @classmethod
    def from_dict(cls, d) -> "DecisionTree":
        return cls([int(v) for v in d["feature"]], [float(v) for v in d["threshold"]],
                   [int(v) for v in d["left"]], [int(v) for v in d["right"]],
                   [[int(c) for c in row] for row in d["counts"]])


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(np.dot(p, p))


def best_split(X, y, n_classes, features):
    """Best (decrease, feature, threshold) over ``features``, or None.

    The decrease is ``gini(node) - n_l/n * gini(left) - n_r/n * gini(right)``.
    """
    n = len(y)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    parent = gini(total)
    best = None
    for f in sorted(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[valid]
        right = total - left
        n_l = (valid + 1).astype(np.float64)
        n_r = n - n_l
        g_l = 1.0 - np.sum((left / n_l[:, None]) ** 2, axis=1)
        g_r = 1.0 - np.sum((right / n_r[:, None]) ** 2, axis=1)
        dec = parent - (n_l / n) * g_l - (n_r / n) * g_r
        k = int(np.argmax(dec))  # first max = lowest threshold
        if best is None or dec[k] > best[0]:
            lo, hi = xs[valid[k]], xs[valid[k] + 1]
            thr = (lo + hi) / 2.0
            if thr >= hi:  # adjacent floats
                thr = lo
            best = (float(dec[k]), int(f), float(thr))
    return best


def fit_tree(X, y, n_classes: int | None = None, max_depth: int | None = None,
             min_samples_split: int = 2, max_features: int | None = None,
             rng: np.random.Generator | None = None) -> DecisionTree:
    """Greedy CART with Gini impurity.

    At each node ``max_features`` candidate features (all when None) are
    drawn without replacement from ``rng``. Importances accumulate
    ``n_node / n_root * decrease`` for each split.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("need a non-empty 2D feature matrix with one label per row")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    d = X.shape[1]
    k = d if max_features is None else max(1, min(int(max_features), d))
    rng = rng if rng is not None else make_rng(0)
    tree = DecisionTree()
    importance = np.zeros(d)
    n_root = len(y)

    stack = [(np.arange(len(y)), 0, None, None)]  # (rows, depth, parent, is_left)
    while stack:
        rows, depth, parent, is_left = stack.pop()
        counts = np.bincount(y[rows], minlength=n_classes)
        node = tree._add(counts)
        if parent is not None:
            if is_left:
                tree.left[parent] = node
            else:
                tree.right[parent] = node
        if (np.count_nonzero(counts) <= 1 or len(rows) < min_samples_split
                or (max_depth is not None and depth >= max_depth)):
            continue
        features = np.arange(d) if k == d else rng.choice(d, size=k, replace=False)
        split = best_split(X[rows], y[rows], n_classes, features)
        if split is None:
            continue
        dec, f, thr = split
        tree.feature[node] = f
        tree.threshold[node] = thr
        importance[f] += len(rows) / n_root * dec
        mask = X[rows, f] <= thr
        # right pushed first so the left subtree is numbered first
        stack.append((rows[~mask], depth + 1, node, False))
        stack.append((rows[mask], depth + 1, node, True))
    tree.importance = importance
    return tree


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_features: int
    n_classes: int
    config: ForestConfig
    feature_importances: np.ndarray
    feature_names: list[str] | None = None

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.zeros((len(X), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            out[np.arange(len(X)), tree.predict(X)] += 1
        return out

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def predict_proba(self, X) -> np.ndarray:
        """Vote fractions."""
        return self.votes(X) / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "feature_names": self.feature_names,
            "importances": [float(v) for v in self.feature_importances],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "ForestModel":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            n_features=int(d["n_features"]),
            n_classes=int(d["n_classes"]),
            config=ForestConfig(**d["config"]),
            feature_importances=np.array(d["importances"], dtype=np.float64),
            feature_names=d.get("feature_names"),
        )


def predict(model: ForestModel, x) -> tuple[int, np.ndarray]:
    """Class and per-class vote counts for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes one feature vector")
    votes = model.votes(x)[0]
    return int(np.argmax(votes)), votes


def fit_forest(X, y, config: ForestConfig | None = None, n_classes: int | None = None,
               feature_names=None) -> ForestModel:
    """Bagged CART ensemble.

    Tree ``i`` draws its bootstrap sample and its candidate features from
    ``make_rng(config.seed, FOREST_STREAM, i)``, so trees are independent of fitting order.
    """
    config = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if len(y) == 0:
        raise ValueError("cannot fit a forest on zero samples")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    d = X.shape[1]
    max_features = config.max_features or math.ceil(math.sqrt(d))
    trees = []
    total = np.zeros(d)
    for i in range(config.n_trees):
        rng = make_rng(config.seed, FOREST_STREAM, i)
        rows = rng.integers(0, len(y), size=len(y)) if config.bootstrap else np.arange(len(y))
        tree = fit_tree(X[rows], y[rows], n_classes, config.max_depth,
                        config.min_samples_split, max_features, rng)
        trees.append(tree)
        total += tree.importance
    s = total.sum()
    importances = total / s if s > 0 else total
    return ForestModel(trees, d, n_classes, config, importances,
                       list(feature_names) if feature_names is not None else None)


def fuse(embedding, radiomics) -> np.ndarray:
    """Concatenate a CNN embedding with a radiomics vector (embedding first)."""
    r = radiomics.as_array() if hasattr(radiomics, "as_array") else np.asarray(radiomics)
    r = np.asarray(r, dtype=np.float64).ravel()
    if r.size != len(FEATURE_NAMES):
        raise ValueError(f"radiomics vector must have {len(FEATURE_NAMES)} entries")
    return np.concatenate([np.asarray(embedding, dtype=np.float64).ravel(), r])


def fused_feature_names(embedding_dim: int) -> list[str]:
    return [f"emb_{i}" for i in range(embedding_dim)] + list(FEATURE_NAMES)


def forest_json(model: ForestModel) -> str:
    return json.dumps(model.to_dict()) + "\n"


def save_forest(model: ForestModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(forest_json(model))


def load_forest(path) -> ForestModel:
    with open(path) as fh:
        return ForestModel.from_dict(json.load(fh))


def importances_csv(model: ForestModel) -> str:
    names = model.feature_names or [f"f{i}" for i in range(model.n_features)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature_name", "importance"])
    for name, value in zip(names, model.feature_importances):
        writer.writerow([name, repr(float(value))])
    return buf.getvalue()


def write_importances(model: ForestModel, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(importances_csv(model))
