"""Random forest classifier (Gini CART trees, bootstrap, majority vote).

Everything is deterministic given ``ForestParams.seed``: tree ``t`` draws its
bootstrap sample and its per-node candidate features from a generator seeded
with ``(seed, t)``, so serial and threaded training give the same model.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyCounts, MalformedFile, MissingFile

FORMAT_VERSION = "rf-v1"
# gains within this distance count as tied
TIE_EPS = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    n_candidate_features: int | str = "sqrt"
    bootstrap: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if isinstance(self.n_candidate_features, str):
            if self.n_candidate_features not in ("sqrt", "all"):
                raise ValueError(f"unknown n_candidate_features {self.n_candidate_features!r}")
        elif self.n_candidate_features < 1:
            raise ValueError("n_candidate_features must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")

    def candidates_for(self, n_features: int) -> int:
        k = self.n_candidate_features
        if k == "sqrt":
            return max(1, int(math.isqrt(n_features)))
        if k == "all":
            return n_features
        return min(int(k), n_features)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("features must be a non-empty 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch(f"{X.shape[0]} rows but {y.shape} labels")
        if self.n_classes < 2 or y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError("labels must lie in [0, n_classes) with n_classes >= 2")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Leaf:
    counts: tuple[int, ...]

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.counts))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Leaf | Split"
    right: "Leaf | Split"


@dataclass(eq=False)
class ForestModel:
    trees: list
    params: ForestParams
    n_classes: int
    n_features: int
    metadata: dict = field(default_factory=dict)
    # bootstrap sample of each tree; only available on freshly trained models
    in_bag: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")


def gini_impurity(class_counts) -> float:
    c = np.asarray(class_counts, dtype=np.float64)
    total = c.sum()
    if c.size == 0 or total <= 0:
        raise EmptyCounts("class counts sum to zero")
    p = c / total
    return float(1.0 - np.dot(p, p))


def best_split(data: Dataset, sample_idx, feature_idx):
    """Exhaustive CART split search over midpoints of distinct sorted values.

    Returns ``(feature, threshold, gain)`` maximising the impurity decrease,
    or ``None`` when no split has positive gain. Ties go to the lowest feature
    index, then the lowest threshold.
    """
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    feats = np.sort(np.asarray(feature_idx, dtype=np.int64))
    n = sample_idx.size
    if n < 2 or feats.size == 0:
        return None
    y = data.labels[sample_idx]
    total = np.bincount(y, minlength=data.n_classes).astype(np.float64)
    parent = 1.0 - np.dot(total, total) / (n * n)
    if parent <= 0.0:
        return None

    X = data.features[np.ix_(sample_idx, feats)]
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    onehot = ys[:, :, None] == np.arange(data.n_classes)
    left = np.cumsum(onehot, axis=0)[:-1].astype(np.float64)  # (n-1, k, C)
    right = total - left
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    gini_left = 1.0 - np.sum(left * left, axis=2) / (n_left * n_left)
    gini_right = 1.0 - np.sum(right * right, axis=2) / (n_right * n_right)
    gain = parent - (n_left * gini_left + n_right * gini_right) / n
    gain[xs[:-1] >= xs[1:]] = -np.inf

    best = gain.max()
    if not best > TIE_EPS:
        return None
    hit = gain >= best - TIE_EPS
    col = int(np.argmax(hit.any(axis=0)))
    row = int(np.argmax(hit[:, col]))
    lo, hi = xs[row, col], xs[row + 1, col]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # adjacent floats
        threshold = lo
    return int(feats[col]), float(threshold), float(gain[row, col])


def fit_tree(data: Dataset, sample_idx, params: ForestParams, rng: np.random.Generator, depth: int = 0):
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    counts = np.bincount(data.labels[sample_idx], minlength=data.n_classes)
    leaf = Leaf(tuple(int(c) for c in counts))
    if (
        (params.max_depth is not None and depth >= params.max_depth)
        or sample_idx.size < params.min_samples_split
        or np.count_nonzero(counts) <= 1
    ):
        return leaf
    k = params.candidates_for(data.n_features)
    feats = rng.choice(data.n_features, size=k, replace=False)
    split = best_split(data, sample_idx, feats)
    if split is None:
        return leaf
    feature, threshold, _ = split
    goes_left = data.features[sample_idx, feature] <= threshold
    return Split(
        feature,
        threshold,
        fit_tree(data, sample_idx[goes_left], params, rng, depth + 1),
        fit_tree(data, sample_idx[~goes_left], params, rng, depth + 1),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index])


def _fit_one(data: Dataset, params: ForestParams, t: int):
    rng = tree_rng(params.seed, t)
    if params.bootstrap:
        idx = rng.integers(0, data.n_samples, size=data.n_samples)
    else:
        idx = np.arange(data.n_samples)
    return fit_tree(data, idx, params, rng), idx


def fit_forest(data: Dataset, params: ForestParams = ForestParams(), n_jobs: int = 1, metadata: dict | None = None) -> ForestModel:
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda t: _fit_one(data, params, t), range(params.n_trees)))
    else:
        results = [_fit_one(data, params, t) for t in range(params.n_trees)]
    trees = [r[0] for r in results]
    return ForestModel(trees, params, data.n_classes, data.n_features, dict(metadata or {}), [r[1] for r in results])


def tree_predict(node, row) -> int:
    while isinstance(node, Split):
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.prediction


def predict(model: ForestModel, row) -> tuple[int, tuple[float, ...]]:
    """Majority vote; returns ``(class, vote_fractions)``, ties to the lower class."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (model.n_features,):
        raise DimensionMismatch(f"expected {model.n_features} features, got shape {row.shape}")
    votes = np.zeros(model.n_classes, dtype=np.int64)
    for tree in model.trees:
        votes[tree_predict(tree, row)] += 1
    fractions = votes / votes.sum()
    return int(np.argmax(votes)), tuple(float(f) for f in fractions)


def flatten_grid(grid) -> np.ndarray:
    """Sweep-major, then position, then class code: 6 * 100 * 5 = 3000 values."""
    return np.asarray(grid.grid, dtype=np.float64).reshape(-1)


# -- serialization -----------------------------------------------------------

def _node_to_json(node) -> dict:
    if isinstance(node, Leaf):
        return {"type": "leaf", "counts": list(node.counts)}
    return {
        "type": "split",
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }


def _node_from_json(obj: dict):
    if obj["type"] == "leaf":
        return Leaf(tuple(int(c) for c in obj["counts"]))
    if obj["type"] == "split":
        return Split(int(obj["feature"]), float(obj["threshold"]), _node_from_json(obj["left"]), _node_from_json(obj["right"]))
    raise ValueError(f"unknown node type {obj['type']!r}")


def model_to_json(model: ForestModel) -> dict:
    return {
        "format": FORMAT_VERSION,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "params": asdict(model.params),
        "metadata": model.metadata,
        "trees": [_node_to_json(t) for t in model.trees],
    }


def model_from_json(obj: dict) -> ForestModel:
    if obj.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {obj.get('format')!r}")
    return ForestModel(
        [_node_from_json(t) for t in obj["trees"]],
        ForestParams(**obj["params"]),
        int(obj["n_classes"]),
        int(obj["n_features"]),
        dict(obj.get("metadata", {})),
    )


def save_model(model: ForestModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), separators=(",", ":")) + "\n", encoding="utf-8")


def load_model(path) -> ForestModel:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        return model_from_json(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from None
