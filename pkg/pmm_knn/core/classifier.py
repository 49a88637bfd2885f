"""
Classifiers sharing one contract: ``fit(dataset) -> self`` and
``predict(features) -> labels``.

PmmKnnModel is the local-centroid classifier: for each class it takes the
query's k nearest class members, aggregates them with the Power Muirhead
Mean and assigns the class whose centroid is nearest. KnnModel (majority
vote) and GaussianNbModel are the baselines.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import comb

from pmm_knn.core.aggregation import (
    ExponentVector,
    SupportContext,
    build_support_context,
    elementary_symmetric,
    muirhead_mean,
    power_muirhead_mean,
    power_weights,
)
from pmm_knn.core.data import Dataset
from pmm_knn.errors import DimensionalityError, ModelError, ParameterError

logger = logging.getLogger(__name__)

CLASSIFIERS = ("pmm-knn", "knn", "gnb")
SUPPORT_SCOPES = ("vector", "per-dimension")
GNB_VAR_FLOOR = 1e-9


def _as_queries(features: np.ndarray, dimensionality: int) -> np.ndarray:
    q = np.asarray(features, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.ndim != 2 or q.shape[1] != dimensionality:
        raise DimensionalityError(f"expected queries with {dimensionality} features, got shape {q.shape}")
    return q


def _stable_ranking(queries: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest points per query; ties keep the lower index."""
    dist = cdist(queries, points)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def _require_all_classes(train: Dataset, model: str) -> np.ndarray:
    counts = train.class_counts()
    empty = [train.class_names[c] for c in np.flatnonzero(counts == 0)]
    if empty:
        raise ModelError(f"{model}: no training samples for class(es) {', '.join(empty)}")
    return counts


# --------- PMM-KNN ---------

@dataclass(frozen=True)
class Prediction:
    label: int
    centroid_distances: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Neighborhood:
    """The k nearest members of one class, nearest first."""

    label: int
    indices: np.ndarray
    members: np.ndarray
    distances: np.ndarray
    ctx: SupportContext

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def centroid(self, exponents: ExponentVector, support_scope: str = "vector") -> np.ndarray:
        """Aggregate the members feature by feature with the PMM."""
        n, d = self.members.shape
        p = exponents.truncated(n)
        out = np.empty(d)
        for j in range(d):
            column = self.members[:, j]
            ctx = self.ctx if support_scope == "vector" else build_support_context(column)
            out[j] = power_muirhead_mean(column, p, ctx)
        return out


class PmmKnnModel:
    def __init__(
        self,
        k: int = 5,
        r: int = 1,
        exponents: Optional[Sequence[float]] = None,
        support_scope: str = "vector",
        batch_size: int = 128,
    ):
        if int(k) < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        if support_scope not in SUPPORT_SCOPES:
            raise ParameterError(f"support scope must be one of {SUPPORT_SCOPES}, got {support_scope!r}")
        self.k = int(k)
        self.support_scope = support_scope
        self.batch_size = max(1, int(batch_size))
        self.exponents: Optional[ExponentVector] = None
        if exponents is not None:
            p = exponents if isinstance(exponents, ExponentVector) else ExponentVector(tuple(exponents))
            if p.is_ones_chain:
                r = p.ones_count
            else:
                self.exponents = p
        if self.exponents is None and not 1 <= int(r) <= self.k:
            raise ParameterError(f"ones-chain length must satisfy 1 <= r <= k, got r={r}, k={k}")
        if self.exponents is not None and len(self.exponents) < self.k:
            raise ParameterError(
                f"{len(self.exponents)} exponents for k={self.k}; a general exponent vector needs at least k entries"
            )
        self.r = int(r)
        self._train: Optional[Dataset] = None
        self._class_points: List[np.ndarray] = []
        self._class_index: List[np.ndarray] = []

    def fit(self, train: Dataset) -> "PmmKnnModel":
        _require_all_classes(train, "pmm-knn")
        if self.k > train.size:
            logger.warning("k=%d exceeds %d training samples; using all samples", self.k, train.size)
        class_index = [np.flatnonzero(train.labels == c) for c in range(train.class_count)]
        if self.exponents is not None:
            self._check_truncation(train, class_index)
        self._train = train
        self._class_index = class_index
        self._class_points = [train.features[idx] for idx in self._class_index]
        return self

    def _check_truncation(self, train: Dataset, class_index: Sequence[np.ndarray]) -> None:
        # small classes cut the exponent vector to their size
        for c, idx in enumerate(class_index):
            n = min(self.k, len(idx))
            try:
                self.exponents.truncated(n)
            except ParameterError as e:
                raise ModelError(
                    f"class {train.class_names[c]!r} has {n} neighbors; "
                    f"exponents {list(self.exponents.exponents[:n])} are unusable ({e})"
                ) from e

    @property
    def train(self) -> Dataset:
        if self._train is None:
            raise ModelError("model is not fitted")
        return self._train

    # ---- neighbor ranking (shared across grid cells) ----

    def rank_neighbors(self, features: np.ndarray, k: Optional[int] = None) -> List[np.ndarray]:
        """Per class, the within-class positions of each query's k nearest members."""
        q = _as_queries(features, self.train.dimensionality)
        k = self.k if k is None else int(k)
        return [_stable_ranking(q, points, min(k, len(points))) for points in self._class_points]

    def neighborhood(self, q: np.ndarray, label: int) -> Neighborhood:
        query = _as_queries(q, self.train.dimensionality)
        points = self._class_points[label]
        order = _stable_ranking(query, points, min(self.k, len(points)))[0]
        members = points[order]
        return Neighborhood(
            label=int(label),
            indices=self._class_index[label][order],
            members=members,
            distances=cdist(query, members)[0],
            ctx=build_support_context(members),
        )

    # ---- centroids ----

    def _weighted_members(self, members: np.ndarray) -> np.ndarray:
        """Fold the power weights into the members: b_i = w_i * x_i."""
        if self.support_scope == "vector":
            diff = members[:, :, None, :] - members[:, None, :, :]
            _, w = power_weights(1.0 / (1.0 + np.sqrt((diff * diff).sum(axis=-1))))
            return w[:, :, None] * members
        gaps = np.abs(members[:, :, None, :] - members[:, None, :, :])
        _, w = power_weights(np.moveaxis(1.0 / (1.0 + gaps), -1, 1))
        return np.swapaxes(w, 1, 2) * members

    def _centroids(self, members: np.ndarray, r: int, exponents: Optional[ExponentVector]) -> np.ndarray:
        n = members.shape[1]
        b = self._weighted_members(members)
        if exponents is None:
            r = min(r, n)
            mean = elementary_symmetric(b, r, axis=1) / float(comb(n, r, exact=True))
            return mean ** (1.0 / r)
        p = exponents.truncated(n)
        out = np.empty((b.shape[0], b.shape[2]))
        for i in range(b.shape[0]):
            for j in range(b.shape[2]):
                out[i, j] = muirhead_mean(b[i, :, j], p)
        return out

    def predict_ranked(
        self,
        features: np.ndarray,
        ranked: Sequence[np.ndarray],
        k: Optional[int] = None,
        r: Optional[int] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Labels and per-class centroid distances from a precomputed ranking.

        The ranking must be at least as deep as k; its first k columns are the
        k-neighborhoods because the ordering is stable.
        """
        q = _as_queries(features, self.train.dimensionality)
        k = self.k if k is None else int(k)
        r = self.r if r is None else int(r)
        cdist_all = np.empty((q.shape[0], len(self._class_points)))
        for c, points in enumerate(self._class_points):
            depth = min(k, len(points))
            if ranked[c].shape[1] < depth:
                raise ParameterError(f"ranking depth {ranked[c].shape[1]} is shallower than k={depth}")
            for start in range(0, q.shape[0], self.batch_size):
                stop = start + self.batch_size
                members = points[ranked[c][start:stop, :depth]]
                centroids = self._centroids(members, r, self.exponents)
                gap = q[start:stop] - centroids
                cdist_all[start:stop, c] = np.sqrt((gap * gap).sum(axis=1))
        return np.argmin(cdist_all, axis=1), cdist_all

    def predict_detailed(self, features: np.ndarray) -> List[Prediction]:
        labels, distances = self.predict_ranked(features, self.rank_neighbors(features))
        return [Prediction(int(y), tuple(float(v) for v in row)) for y, row in zip(labels, distances)]

    def predict(self, features: np.ndarray) -> np.ndarray:
        labels, _ = self.predict_ranked(features, self.rank_neighbors(features))
        return labels


def pmm_knn_predict(model: PmmKnnModel, q: np.ndarray) -> Prediction:
    return model.predict_detailed(np.asarray(q, dtype=np.float64).reshape(1, -1))[0]


# --------- Baselines ---------

class KnnModel:
    """Majority vote over the k globally nearest samples."""

    def __init__(self, k: int = 5, batch_size: int = 512):
        if int(k) < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        self.k = int(k)
        self.batch_size = max(1, int(batch_size))
        self._train: Optional[Dataset] = None

    def fit(self, train: Dataset) -> "KnnModel":
        if self.k > train.size:
            logger.warning("k=%d exceeds %d training samples; using all samples", self.k, train.size)
        self._train = train
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self._train is None:
            raise ModelError("model is not fitted")
        train = self._train
        q = _as_queries(features, train.dimensionality)
        k = min(self.k, train.size)
        classes = np.arange(train.class_count)
        out = np.empty(q.shape[0], dtype=np.int64)
        for start in range(0, q.shape[0], self.batch_size):
            nearest = train.labels[_stable_ranking(q[start:start + self.batch_size], train.features, k)]
            votes = (nearest[:, :, None] == classes).sum(axis=1)
            out[start:start + self.batch_size] = np.argmax(votes, axis=1)
        return out


def knn_predict(train: Dataset, q: np.ndarray, k: int) -> int:
    if not 1 <= int(k) <= train.size:
        raise ParameterError(f"k must satisfy 1 <= k <= {train.size}, got {k}")
    return int(KnnModel(k).fit(train).predict(q)[0])


class GaussianNbModel:
    def __init__(self, var_floor: float = GNB_VAR_FLOOR):
        self.var_floor = float(var_floor)
        self.means: Optional[np.ndarray] = None
        self.variances: Optional[np.ndarray] = None
        self.log_priors: Optional[np.ndarray] = None

    def fit(self, train: Dataset) -> "GaussianNbModel":
        counts = _require_all_classes(train, "gnb")
        x, y = train.features, train.labels
        self.means = np.stack([x[y == c].mean(axis=0) for c in range(train.class_count)])
        var = np.stack([x[y == c].var(axis=0) for c in range(train.class_count)])
        self.variances = np.maximum(var, self.var_floor)
        self.log_priors = np.log(counts / train.size)
        return self

    def log_posteriors(self, features: np.ndarray) -> np.ndarray:
        if self.means is None:
            raise ModelError("model is not fitted")
        q = _as_queries(features, self.means.shape[1])
        gap = q[:, None, :] - self.means[None, :, :]
        loglik = -0.5 * (np.log(2.0 * np.pi * self.variances)[None] + gap * gap / self.variances[None])
        return self.log_priors[None, :] + loglik.sum(axis=2)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.log_posteriors(features), axis=1)


def gnb_fit_predict(train: Dataset, q: np.ndarray) -> int:
    return int(GaussianNbModel().fit(train).predict(q)[0])


# --------- Configuration ---------

@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "pmm-knn"
    k: int = 5
    r: int = 1
    exponents: Optional[Tuple[float, ...]] = None
    support_scope: str = "vector"

    def __post_init__(self):
        if self.kind not in CLASSIFIERS:
            raise ParameterError(f"unknown classifier {self.kind!r}; expected one of {CLASSIFIERS}")
        if self.exponents is not None:
            object.__setattr__(self, "exponents", tuple(float(p) for p in self.exponents))

    def build(self):
        if self.kind == "pmm-knn":
            return PmmKnnModel(self.k, self.r, self.exponents, self.support_scope)
        if self.kind == "knn":
            return KnnModel(self.k)
        return GaussianNbModel()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["exponents"] = list(self.exponents) if self.exponents is not None else None
        if self.kind == "gnb":
            for key in ("k", "r", "exponents", "support_scope"):
                data.pop(key)
        elif self.kind == "knn":
            for key in ("r", "exponents", "support_scope"):
                data.pop(key)
        return data
