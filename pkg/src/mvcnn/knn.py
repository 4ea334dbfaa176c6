"""K-nearest-neighbour baseline classifiers (spectrum and MFCC features).

Brute-force Euclidean search with deterministic tie rules: equal
distances prefer the lower training index, vote ties prefer the lowest
class id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, LengthMismatch


@dataclass(frozen=True)
class KnnModel:
    training_features: np.ndarray  # [n, L]
    training_labels: np.ndarray  # [n]
    k: int = 1

    def __post_init__(self):
        feats = np.asarray(self.training_features, dtype=np.float64)
        labels = np.asarray(self.training_labels, dtype=np.int64)
        if feats.ndim != 2 or len(feats) == 0:
            raise EmptyDataset("need a nonempty [n, L] training matrix")
        if len(labels) != len(feats):
            raise LengthMismatch("one label per training row required")
        if not 1 <= self.k <= len(feats):
            raise ValueError(f"k must be in [1, {len(feats)}], got {self.k}")
        object.__setattr__(self, "training_features", feats)
        object.__setattr__(self, "training_labels", labels)


def knn_classify(model: KnnModel, query: np.ndarray) -> int:
    """Majority vote over the k nearest training points.

    Raises:
        LengthMismatch: query length differs from training features.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (model.training_features.shape[1],):
        raise LengthMismatch(
            f"query length {query.shape} != training width "
            f"{model.training_features.shape[1]}"
        )
    dists = np.linalg.norm(model.training_features - query, axis=1)
    # stable sort keeps lower training indices first on distance ties
    nearest = np.argsort(dists, kind="stable")[: model.k]
    votes = np.bincount(model.training_labels[nearest])
    return int(np.argmax(votes))  # first max = lowest class id


def knn_classify_batch(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """Classify a [m, L] batch of queries."""
    queries = np.asarray(queries, dtype=np.float64)
    return np.array([knn_classify(model, q) for q in queries], dtype=np.int64)


def tune_k(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    val_features: np.ndarray,
    val_labels: np.ndarray,
    candidates=(1, 3, 5, 7),
) -> int:
    """Pick the candidate k with the highest validation accuracy.

    Candidates larger than the training set are skipped; accuracy ties
    resolve to the smallest k.

    Raises:
        EmptyDataset: empty training/validation set or no usable candidate.
    """
    train_labels = np.asarray(train_labels)
    val_labels = np.asarray(val_labels)
    if len(train_labels) == 0 or len(val_labels) == 0:
        raise EmptyDataset("tune_k needs nonempty train and validation sets")
    usable = sorted(k for k in candidates if 1 <= k <= len(train_labels))
    if not usable:
        raise EmptyDataset("no candidate k fits the training set size")
    best_k = usable[0]
    best_acc = -1.0
    for k in usable:
        model = KnnModel(train_features, train_labels, k)
        acc = float(np.mean(knn_classify_batch(model, val_features) == val_labels))
        if acc > best_acc:
            best_acc = acc
            best_k = k
    return best_k
