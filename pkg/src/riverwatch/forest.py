"""From-scratch random forest: training, prediction, cross-validation, model I/O.

Determinism is the organizing principle. Every tree owns an RNG stream derived
from the forest seed and its tree index, so results do not depend on how many
worker threads ran or in what order they finished. Split ties resolve to the
lowest feature index, then the lowest threshold; vote and leaf-majority ties
resolve to the lowest class index.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _treekernels
from .indices import FeatureStack
from .raster import NODATA_CLASS, ClassRaster

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixing function (well-distributed 64-bit hash)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _tree_seed(seed: int, tree_index: int) -> int:
    return (seed ^ splitmix64(tree_index)) & _MASK64


def gini(histogram: Sequence[float] | np.ndarray) -> float:
    """Gini impurity 1 - sum(p_i^2) of a per-class count histogram."""
    counts = np.asarray(histogram, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("histogram must be a non-empty 1-D sequence of counts")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("histogram counts must be finite and non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("histogram total must be positive")
    p = counts / total
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class TrainingSet:
    """Labeled sample matrix (N x F) with class and feature naming."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int32)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("features must be a non-empty N x F matrix")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must be one id per sample row")
        if feats.shape[1] != len(self.feature_names):
            raise ValueError("feature count does not match feature_names")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values; filter invalid pixels first")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise ValueError("labels must lie in [0, n_classes)")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    mtry: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive when set")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive when set")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def resolve_mtry(self, n_features: int) -> int:
        mtry = self.mtry if self.mtry is not None else max(1, int(math.isqrt(n_features)))
        if mtry > n_features:
            raise ValueError(f"mtry {mtry} exceeds feature count {n_features}")
        return mtry


@dataclass(frozen=True)
class Tree:
    """One decision tree in flat-array form.

    Node i is a split when feature[i] >= 0 (children at left[i]/right[i],
    rule x[feature] <= threshold goes left) and a leaf otherwise. hist holds
    the per-class training counts that reached each leaf; internal rows are
    zero. leaf_class caches each leaf's majority vote.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hist: np.ndarray
    leaf_class: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "leaf_class", np.argmax(self.hist, axis=1).astype(np.int16))

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...]
    hyperparams: Hyperparams
    format_version: int = FORMAT_VERSION

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _grow_tree(
    Xb: np.ndarray,
    yb: np.ndarray,
    n_classes: int,
    n_features: int,
    mtry: int,
    min_samples_leaf: int,
    max_depth: int | None,
    rng: np.random.Generator,
) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    hist: list[np.ndarray] = []

    def alloc() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(np.zeros(n_classes, dtype=np.int64))
        return len(feature) - 1

    all_features = np.arange(n_features, dtype=np.int64)
    root = alloc()
    # Depth-first, left child first; pushing right before left keeps the RNG
    # draw order independent of anything but the data and seed.
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(Xb.shape[0], dtype=np.int64), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = np.bincount(yb[idx], minlength=n_classes).astype(np.int64)
        hist[node] = counts
        if int(np.count_nonzero(counts)) <= 1:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if idx.shape[0] < 2 * min_samples_leaf:
            continue

        candidates = np.sort(rng.choice(n_features, size=mtry, replace=False)).astype(np.int64)
        f, t = _treekernels.best_split(Xb, yb, idx, candidates, n_classes, min_samples_leaf)
        if f < 0 and mtry < n_features:
            # All sampled features were constant on this node; fall back to the
            # rest so separable data always finishes pure.
            rest = np.setdiff1d(all_features, candidates, assume_unique=True)
            f, t = _treekernels.best_split(Xb, yb, idx, rest, n_classes, min_samples_leaf)
        if f < 0:
            continue

        go_left = Xb[idx, f] <= t
        feature[node] = int(f)
        threshold[node] = float(t)
        lnode = alloc()
        rnode = alloc()
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        hist=np.stack(hist).astype(np.int64),
    )


def train_forest(data: TrainingSet, hp: Hyperparams, threads: int | None = None) -> Forest:
    """Grow hp.n_trees bootstrap trees over the training set.

    threads counts worker threads for tree growth (None picks the CPU count).
    The result is byte-identical for a fixed (data, hp) no matter the value.
    """
    n = data.n_samples
    n_features = data.n_features
    mtry = hp.resolve_mtry(n_features)
    if hp.min_samples_leaf > n:
        raise ValueError("min_samples_leaf exceeds the sample count")
    resolved = replace(hp, mtry=mtry)

    def build(tree_index: int) -> Tree:
        rng = np.random.Generator(np.random.PCG64(_tree_seed(hp.seed, tree_index)))
        bag = rng.integers(0, n, size=n)
        Xb = np.ascontiguousarray(data.features[bag])
        yb = np.ascontiguousarray(data.labels[bag])
        return _grow_tree(Xb, yb, data.n_classes, n_features, mtry, hp.min_samples_leaf, hp.max_depth, rng)

    worker_count = threads if threads is not None else (os.cpu_count() or 1)
    if worker_count <= 1:
        trees = tuple(build(i) for i in range(hp.n_trees))
    else:
        with ThreadPoolExecutor(max_workers=worker_count) as pool:
            trees = tuple(pool.map(build, range(hp.n_trees)))
    log.debug("trained %d trees on %d samples x %d features", hp.n_trees, n, n_features)
    return Forest(
        trees=trees,
        class_names=data.class_names,
        feature_names=data.feature_names,
        hyperparams=resolved,
    )


def _flatten(forest: Forest) -> tuple[np.ndarray, ...]:
    """Concatenate all trees into the flat arrays the batch kernel walks."""
    sizes = [t.n_nodes for t in forest.trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    feat = np.concatenate([t.feature for t in forest.trees])
    thresh = np.concatenate([t.threshold for t in forest.trees])
    left = np.concatenate([t.left + off for t, off in zip(forest.trees, offsets)]).astype(np.int32)
    right = np.concatenate([t.right + off for t, off in zip(forest.trees, offsets)]).astype(np.int32)
    leaf_class = np.concatenate([t.leaf_class for t in forest.trees])
    return feat, thresh, left, right, leaf_class, offsets


def _predict_matrix(forest: Forest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class ids and vote-fraction confidences for a (P, F) float64 matrix."""
    feat, thresh, left, right, leaf_class, roots = _flatten(forest)
    out_cls = np.empty(X.shape[0], dtype=np.int16)
    out_conf = np.empty(X.shape[0], dtype=np.float32)
    _treekernels.predict_batch(
        feat, thresh, left, right, leaf_class, roots,
        np.ascontiguousarray(X, dtype=np.float64), forest.n_classes, out_cls, out_conf,
    )
    return out_cls, out_conf


def predict_proba(forest: Forest, feature_vector: Sequence[float] | np.ndarray) -> np.ndarray:
    """Per-class probability vector: (trees voting class c) / n_trees."""
    vec = np.asarray(feature_vector, dtype=np.float64)
    if vec.shape != (forest.n_features,):
        raise ValueError(f"expected {forest.n_features} features, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("feature vector contains non-finite values")
    votes = np.zeros(forest.n_classes, dtype=np.int64)
    for tree in forest.trees:
        node = 0
        while tree.feature[node] >= 0:
            node = tree.left[node] if vec[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
        votes[tree.leaf_class[node]] += 1
    return votes / len(forest.trees)


def predict_raster(forest: Forest, stack: FeatureStack) -> ClassRaster:
    """Per-pixel argmax vote over the stack; invalid pixels become nodata."""
    if stack.feature_names != forest.feature_names:
        raise ValueError(
            f"feature names differ: stack {list(stack.feature_names)} vs forest {list(forest.feature_names)}"
        )
    h, w = stack.valid.shape
    class_ids = np.full((h, w), NODATA_CLASS, dtype=np.uint8)
    confidence = np.zeros((h, w), dtype=np.float32)
    X = stack.matrix()
    if X.shape[0]:
        cls, conf = _predict_matrix(forest, X)
        class_ids[stack.valid] = cls.astype(np.uint8)
        confidence[stack.valid] = conf
    return ClassRaster(class_ids=class_ids, confidence=confidence, class_names=forest.class_names)


@dataclass(frozen=True)
class CVResult:
    accuracy: float
    confusion: np.ndarray
    fold_accuracies: tuple[float, ...]


def cross_validate(data: TrainingSet, hp: Hyperparams, k: int, threads: int | None = None) -> CVResult:
    """Stratified k-fold cross-validation.

    Folds come from a per-class round-robin over a seeded shuffle, so every
    fold sees near-identical class balance. accuracy is the mean of the fold
    accuracies; confusion sums all fold confusion matrices (rows = truth,
    columns = prediction).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if data.n_samples < k:
        raise ValueError("fewer samples than folds")
    counts = np.bincount(data.labels, minlength=data.n_classes)
    for cid, cnt in enumerate(counts):
        if cnt < k:
            raise ValueError(
                f"class {data.class_names[cid]!r} has {int(cnt)} samples, fewer than k={k}"
            )

    rng = np.random.Generator(np.random.PCG64(_tree_seed(hp.seed, 0x5F0BD)))
    fold_of = np.empty(data.n_samples, dtype=np.int64)
    for cid in range(data.n_classes):
        members = np.flatnonzero(data.labels == cid)
        members = members[rng.permutation(members.shape[0])]
        fold_of[members] = np.arange(members.shape[0]) % k

    confusion = np.zeros((data.n_classes, data.n_classes), dtype=np.int64)
    fold_accs = []
    for fold in range(k):
        test = fold_of == fold
        train = TrainingSet(
            features=data.features[~test],
            labels=data.labels[~test],
            class_names=data.class_names,
            feature_names=data.feature_names,
        )
        model = train_forest(train, hp, threads=threads)
        pred, _ = _predict_matrix(model, data.features[test])
        truth = data.labels[test]
        fold_accs.append(float(np.mean(pred == truth)))
        np.add.at(confusion, (truth.astype(np.int64), pred.astype(np.int64)), 1)
    return CVResult(
        accuracy=float(np.mean(fold_accs)),
        confusion=confusion,
        fold_accuracies=tuple(fold_accs),
    )


def _node_doc(tree: Tree) -> dict:
    """Nested node document for one tree, built leaf-up without recursion."""
    docs: list[dict | None] = [None] * tree.n_nodes
    for i in range(tree.n_nodes - 1, -1, -1):
        if tree.feature[i] < 0:
            docs[i] = {"leaf": {"hist": [int(c) for c in tree.hist[i]]}}
        else:
            docs[i] = {
                "split": {
                    "f": int(tree.feature[i]),
                    "t": float(tree.threshold[i]),
                    "l": docs[tree.left[i]],
                    "r": docs[tree.right[i]],
                }
            }
    assert docs[0] is not None
    return docs[0]


def serialize_forest(forest: Forest) -> dict:
    hp = forest.hyperparams
    return {
        "format_version": forest.format_version,
        "class_names": list(forest.class_names),
        "feature_names": list(forest.feature_names),
        "hyperparams": {
            "n_trees": hp.n_trees,
            "max_depth": hp.max_depth,
            "min_samples_leaf": hp.min_samples_leaf,
            "mtry": hp.mtry,
            "seed": hp.seed,
        },
        "trees": [_node_doc(t) for t in forest.trees],
    }


def _parse_tree(doc: dict, n_classes: int, n_features: int) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    hist: list[np.ndarray] = []

    def alloc() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(np.zeros(n_classes, dtype=np.int64))
        return len(feature) - 1

    stack: list[tuple[dict, int]] = [(doc, alloc())]
    while stack:
        node_doc, node = stack.pop()
        if not isinstance(node_doc, dict) or len(node_doc) != 1:
            raise ValueError("malformed tree node")
        if "leaf" in node_doc:
            counts = node_doc["leaf"].get("hist")
            if not isinstance(counts, list) or len(counts) != n_classes:
                raise ValueError("leaf histogram must list one count per class")
            if any(not isinstance(c, int) or c < 0 for c in counts):
                raise ValueError("leaf histogram counts must be non-negative integers")
            hist[node] = np.asarray(counts, dtype=np.int64)
        elif "split" in node_doc:
            split = node_doc["split"]
            f = split.get("f")
            t = split.get("t")
            if not isinstance(f, int) or not 0 <= f < n_features:
                raise ValueError(f"split feature index {f!r} out of range")
            if not isinstance(t, (int, float)):
                raise ValueError("split threshold must be a number")
            feature[node] = f
            threshold[node] = float(t)
            lnode = alloc()
            rnode = alloc()
            left[node] = lnode
            right[node] = rnode
            stack.append((split["r"], rnode))
            stack.append((split["l"], lnode))
        else:
            raise ValueError("tree node must be a split or a leaf")

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        hist=np.stack(hist).astype(np.int64),
    )


def deserialize_forest(doc: dict) -> Forest:
    if not isinstance(doc, dict):
        raise ValueError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    class_names = doc.get("class_names")
    feature_names = doc.get("feature_names")
    if not isinstance(class_names, list) or not class_names:
        raise ValueError("class_names must be a non-empty list")
    if not isinstance(feature_names, list) or not feature_names:
        raise ValueError("feature_names must be a non-empty list")
    hp_doc = doc.get("hyperparams")
    if not isinstance(hp_doc, dict):
        raise ValueError("hyperparams must be an object")
    try:
        hp = Hyperparams(
            n_trees=hp_doc["n_trees"],
            max_depth=hp_doc.get("max_depth"),
            min_samples_leaf=hp_doc["min_samples_leaf"],
            mtry=hp_doc.get("mtry"),
            seed=hp_doc["seed"],
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid hyperparams: {exc}") from exc
    tree_docs = doc.get("trees")
    if not isinstance(tree_docs, list) or len(tree_docs) != hp.n_trees:
        raise ValueError("trees must list exactly n_trees roots")
    trees = tuple(_parse_tree(t, len(class_names), len(feature_names)) for t in tree_docs)
    return Forest(
        trees=trees,
        class_names=tuple(class_names),
        feature_names=tuple(feature_names),
        hyperparams=hp,
        format_version=version,
    )


def save_forest(forest: Forest, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        tmp.write_text(json.dumps(serialize_forest(forest)), encoding="utf-8")
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def load_forest(path: str | Path) -> Forest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file is not valid JSON: {exc}") from exc
    return deserialize_forest(doc)


def extract_training_set(
    stack: FeatureStack,
    label_plane: np.ndarray,
    class_names: Sequence[str],
) -> TrainingSet:
    """Collect labeled valid pixels into a TrainingSet.

    label_plane uses 0 for unlabeled and 1..n_classes for class id + 1, which
    keeps 0 free as the natural fill value in label rasters.
    """
    labels = np.asarray(label_plane)
    if labels.shape != stack.valid.shape:
        raise ValueError("label plane shape does not match the stack")
    finite = np.isfinite(labels)
    rounded = np.where(finite, np.round(labels), -1)
    if not np.all(np.where(finite, labels == rounded, True)):
        raise ValueError("label plane must hold integral values")
    if rounded.max(initial=0) > len(class_names):
        raise ValueError("label value exceeds the class count")
    take = stack.valid & finite & (rounded > 0)
    if not np.any(take):
        raise ValueError("no labeled valid pixels to train on")
    features = stack.planes[:, take].T.astype(np.float64)
    return TrainingSet(
        features=features,
        labels=(rounded[take] - 1).astype(np.int32),
        class_names=tuple(class_names),
        feature_names=stack.feature_names,
    )


def warmup_kernels() -> None:
    """Force numba compilation of the hot kernels on trivial inputs."""
    X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.float64)
    y = np.array([0, 1], dtype=np.int32)
    idx = np.arange(2, dtype=np.int64)
    _treekernels.best_split(X, y, idx, np.arange(2, dtype=np.int64), 2, 1)
    out_cls = np.empty(2, dtype=np.int16)
    out_conf = np.empty(2, dtype=np.float32)
    _treekernels.predict_batch(
        np.array([0, -1, -1], dtype=np.int32),
        np.array([0.5, 0.0, 0.0], dtype=np.float64),
        np.array([1, -1, -1], dtype=np.int32),
        np.array([2, -1, -1], dtype=np.int32),
        np.array([0, 0, 1], dtype=np.int16),
        np.array([0], dtype=np.int64),
        X, 2, out_cls, out_conf,
    )
