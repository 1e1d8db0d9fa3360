"""Random-forest classification of function feature vectors.

Trees are grown with Gini-impurity splits over a random feature subset per
node. All randomness derives from one seed; each tree draws from its own
stream (hash of seed and tree index), so training is bit-identical
regardless of how many worker threads build the trees.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import FEATURE_NAMES, FeatureSchema

MODEL_FORMAT_VERSION = 1

LABEL_TO_INT = {"non_tracking": 0, "tracking": 1}
INT_TO_LABEL = {0: "non_tracking", 1: "tracking"}


class EmptyDataset(Exception):
    pass


class TooFewRows(Exception):
    pass


class SchemaMismatch(Exception):
    pass


@dataclass
class Dataset:
    keys: list[str]
    X: np.ndarray  # (n, F) float64
    y: np.ndarray  # (n,) int, 1 = tracking
    schema: FeatureSchema = field(default_factory=FeatureSchema)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or len(self.keys) != self.X.shape[0] or self.y.shape[0] != self.X.shape[0]:
            raise ValueError("inconsistent dataset shapes")

    def __len__(self) -> int:
        return self.X.shape[0]

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            [self.keys[i] for i in idx], self.X[idx], self.y[idx], self.schema
        )


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 1000
    max_depth: int = 20
    features_per_split: Optional[int] = None  # default floor(sqrt(F))
    bootstrap: bool = True
    seed: int = 0
    class_weight: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.num_trees < 1 or self.max_depth < 1:
            raise ValueError("num_trees and max_depth must be >= 1")


@dataclass
class Forest:
    trees: list[dict]
    params: ForestParams
    schema: FeatureSchema

    @property
    def num_trees(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


def deduplicate(dataset: Dataset) -> Dataset:
    """Keep the first row per key (script URL + function name), order preserved."""
    seen: set[str] = set()
    idx = []
    for i, key in enumerate(dataset.keys):
        if key not in seen:
            seen.add(key)
            idx.append(i)
    return dataset.take(np.asarray(idx, dtype=np.int64))


def split(
    dataset: Dataset,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic shuffle then partition at rounded fraction boundaries."""
    if len(dataset) == 0:
        raise EmptyDataset()
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(dataset)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return (
        dataset.take(order[:n_train]),
        dataset.take(order[n_train : n_train + n_val]),
        dataset.take(order[n_train + n_val :]),
    )


def _tree_seed(seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.square(p).sum())


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    feats: np.ndarray,
    weights: np.ndarray,
) -> Optional[tuple[int, float]]:
    """Best (feature, threshold) by weighted Gini, or None if unsplittable."""
    best = None
    best_cost = math.inf
    yw = weights[y[idx]]
    total_w = yw.sum()
    for f in feats:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = y[idx][order]
        ws = yw[order]
        # cumulative weighted class-1 and total weight up to position i (exclusive)
        w1 = np.cumsum(ws * ys)
        wt = np.cumsum(ws)
        # candidate boundaries where value changes
        change = np.nonzero(vs[1:] != vs[:-1])[0]
        if change.size == 0:
            continue
        left_w = wt[change]
        left_1 = w1[change]
        right_w = total_w - left_w
        right_1 = w1[-1] - left_1
        left_0 = left_w - left_1
        right_0 = right_w - right_1
        gini_l = 1.0 - ((left_0 / left_w) ** 2 + (left_1 / left_w) ** 2)
        gini_r = 1.0 - ((right_0 / right_w) ** 2 + (right_1 / right_w) ** 2)
        cost = (left_w * gini_l + right_w * gini_r) / total_w
        j = int(np.argmin(cost))
        if cost[j] < best_cost - 1e-15:
            best_cost = cost[j]
            thr = (vs[change[j]] + vs[change[j] + 1]) / 2.0
            best = (int(f), float(thr))
    return best


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    rng: np.random.Generator,
    params: ForestParams,
    fps: int,
    weights: np.ndarray,
    depth: int,
) -> dict:
    counts = np.bincount(y[idx], minlength=2)
    if (
        depth >= params.max_depth
        or idx.size < 2
        or counts[0] == 0
        or counts[1] == 0
    ):
        return {"counts": [int(counts[0]), int(counts[1])]}
    feats = rng.choice(X.shape[1], size=min(fps, X.shape[1]), replace=False)
    found = _best_split(X, y, idx, feats, weights)
    if found is None:
        return {"counts": [int(counts[0]), int(counts[1])]}
    f, thr = found
    mask = X[idx, f] <= thr
    left = idx[mask]
    right = idx[~mask]
    if left.size == 0 or right.size == 0:
        return {"counts": [int(counts[0]), int(counts[1])]}
    return {
        "f": f,
        "t": thr,
        "l": _grow(X, y, left, rng, params, fps, weights, depth + 1),
        "r": _grow(X, y, right, rng, params, fps, weights, depth + 1),
    }


def _build_tree(args) -> dict:
    X, y, params, fps, weights, tree_index = args
    rng = np.random.default_rng(_tree_seed(params.seed, tree_index))
    n = X.shape[0]
    if params.bootstrap:
        idx = rng.integers(0, n, size=n)
    else:
        idx = np.arange(n)
    return _grow(X, y, idx, rng, params, fps, weights, 0)


def train(train_set: Dataset, params: ForestParams, n_jobs: int = 1) -> Forest:
    if len(train_set) == 0 or train_set.X.shape[1] == 0:
        raise EmptyDataset()
    fps = params.features_per_split or max(1, int(math.isqrt(train_set.X.shape[1])))
    weights = np.asarray(params.class_weight or (1.0, 1.0), dtype=np.float64)
    jobs = [
        (train_set.X, train_set.y, params, fps, weights, t)
        for t in range(params.num_trees)
    ]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(_build_tree, jobs))
    else:
        trees = [_build_tree(job) for job in jobs]
    return Forest(trees=trees, params=params, schema=train_set.schema)


def _tree_vote(tree: dict, row: Sequence[float]) -> int:
    node = tree
    while "f" in node:
        node = node["l"] if row[node["f"]] <= node["t"] else node["r"]
    c0, c1 = node["counts"]
    return 1 if c1 >= c0 else 0


def predict(forest: Forest, fv: Sequence[float] | dict) -> tuple[str, float]:
    """Label and the fraction of trees voting tracking; ties go to tracking."""
    if isinstance(fv, dict):
        try:
            row = [float(fv[name]) for name in forest.schema.names]
        except KeyError as exc:
            raise SchemaMismatch(str(exc)) from exc
    else:
        row = list(map(float, fv))
        if len(row) != len(forest.schema.names):
            raise SchemaMismatch(
                f"expected {len(forest.schema.names)} features, got {len(row)}"
            )
    votes = sum(_tree_vote(tree, row) for tree in forest.trees)
    score = votes / len(forest.trees)
    return (INT_TO_LABEL[1] if score >= 0.5 else INT_TO_LABEL[0]), score


def evaluate(forest: Forest, test_set: Dataset) -> Metrics:
    if len(test_set) == 0:
        raise EmptyDataset()
    tp = fp = tn = fn = 0
    for row, truth in zip(test_set.X, test_set.y):
        label, _score = predict(forest, row)
        pred = LABEL_TO_INT[label]
        if pred == 1 and truth == 1:
            tp += 1
        elif pred == 1 and truth == 0:
            fp += 1
        elif pred == 0 and truth == 0:
            tn += 1
        else:
            fn += 1
    return Metrics(tp=tp, fp=fp, tn=tn, fn=fn)


def _entropy(labels: np.ndarray) -> float:
    counts = np.bincount(labels)
    p = counts[counts > 0] / labels.size
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class InfoGain:
    absolute: float
    percent: float  # of the label entropy


def information_gain(dataset: Dataset, feature: int | str, bins: int = 10) -> InfoGain:
    """Entropy reduction of the label given the equal-frequency-binned feature.

    Binning uses empirical-CDF ranks, so the result is invariant under any
    strictly monotone transformation of the feature.
    """
    if len(dataset) == 0:
        raise EmptyDataset()
    if isinstance(feature, str):
        feature = dataset.schema.names.index(feature)
    v = dataset.X[:, feature]
    n = v.size
    sorted_v = np.sort(v)
    less = np.searchsorted(sorted_v, v, side="left")
    upto = np.searchsorted(sorted_v, v, side="right")
    cdf = (less + 0.5 * (upto - less)) / n
    bin_ids = np.minimum((cdf * bins).astype(np.int64), bins - 1)
    h_label = _entropy(dataset.y)
    cond = 0.0
    for b in np.unique(bin_ids):
        mask = bin_ids == b
        cond += (mask.sum() / n) * _entropy(dataset.y[mask])
    ig = h_label - cond
    percent = (ig / h_label * 100.0) if h_label > 0 else 0.0
    return InfoGain(absolute=ig, percent=percent)


@dataclass
class CrossValidation:
    folds: list[Metrics]
    mean_f1: float
    std_f1: float
    mean_precision: float
    mean_recall: float


def cross_validate(
    dataset: Dataset, k: int = 5, params: ForestParams | None = None, seed: int = 0, n_jobs: int = 1
) -> CrossValidation:
    if k < 2 or len(dataset) < k:
        raise TooFewRows(f"need at least k={k} rows and k >= 2")
    params = params or ForestParams()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    folds = np.array_split(order, k)
    results: list[Metrics] = []
    for i, fold in enumerate(folds):
        test = dataset.take(fold)
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        fold_params = ForestParams(
            num_trees=params.num_trees,
            max_depth=params.max_depth,
            features_per_split=params.features_per_split,
            bootstrap=params.bootstrap,
            seed=_tree_seed(seed, 10_000 + i) % (2**31),
            class_weight=params.class_weight,
        )
        forest = train(dataset.take(train_idx), fold_params, n_jobs=n_jobs)
        results.append(evaluate(forest, test))
    f1s = np.array([m.f1 for m in results])
    return CrossValidation(
        folds=results,
        mean_f1=float(f1s.mean()),
        std_f1=float(f1s.std()),
        mean_precision=float(np.mean([m.precision for m in results])),
        mean_recall=float(np.mean([m.recall for m in results])),
    )


def forest_to_json(forest: Forest) -> str:
    return json.dumps(
        {
            "format_version": MODEL_FORMAT_VERSION,
            "schema": {"names": list(forest.schema.names), "version": forest.schema.version},
            "params": {
                "num_trees": forest.params.num_trees,
                "max_depth": forest.params.max_depth,
                "features_per_split": forest.params.features_per_split,
                "bootstrap": forest.params.bootstrap,
                "seed": forest.params.seed,
                "class_weight": list(forest.params.class_weight)
                if forest.params.class_weight
                else None,
            },
            "trees": forest.trees,
        },
        sort_keys=True,
    )


def forest_from_json(text: str, expect_schema: FeatureSchema | None = None) -> Forest:
    obj = json.loads(text)
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise SchemaMismatch(f"unsupported model format {obj.get('format_version')!r}")
    schema = FeatureSchema(
        names=tuple(obj["schema"]["names"]), version=obj["schema"]["version"]
    )
    if expect_schema is None:
        expect_schema = FeatureSchema()
    if schema.version != expect_schema.version or schema.names != expect_schema.names:
        raise SchemaMismatch("model feature schema does not match this build")
    p = obj["params"]
    params = ForestParams(
        num_trees=p["num_trees"],
        max_depth=p["max_depth"],
        features_per_split=p["features_per_split"],
        bootstrap=p["bootstrap"],
        seed=p["seed"],
        class_weight=tuple(p["class_weight"]) if p["class_weight"] else None,
    )
    return Forest(trees=obj["trees"], params=params, schema=schema)


def dataset_from_rows(
    rows: list[tuple[str, dict, str]], schema: FeatureSchema | None = None
) -> Dataset:
    """Build a Dataset from (key, feature dict, label) rows; excluded rows rejected."""
    schema = schema or FeatureSchema()
    keys, xs, ys = [], [], []
    for key, fv, label in rows:
        if label not in LABEL_TO_INT:
            raise ValueError(f"label {label!r} cannot enter a dataset")
        keys.append(key)
        xs.append([float(fv[name]) for name in schema.names])
        ys.append(LABEL_TO_INT[label])
    X = np.asarray(xs, dtype=np.float64) if xs else np.empty((0, len(schema.names)))
    return Dataset(keys=keys, X=X, y=np.asarray(ys, dtype=np.int64), schema=schema)
