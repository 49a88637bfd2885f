from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from pmm_knn.errors import DimensionalityError, LabelError, ParameterError


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# --------- Domain types ---------

@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (N x d) plus integer class labels.

    Arrays are copied and made read-only on construction, so a Dataset can be
    shared between worker threads without locking.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: Tuple[str, ...]
    feature_names: Tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionalityError(f"features must be a 2-d matrix, got shape {x.shape}")
        n, d = x.shape
        if n == 0:
            raise ParameterError("dataset has no samples")
        if d == 0:
            raise DimensionalityError("dataset has no features")
        if not np.all(np.isfinite(x)):
            raise ParameterError("dataset contains non-finite feature values")
        y = np.asarray(self.labels)
        if y.shape != (n,):
            raise DimensionalityError(f"expected {n} labels, got shape {y.shape}")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise LabelError("labels must be integer class indices")
        y = y.astype(np.int64)
        names = tuple(str(c) for c in self.class_names)
        if not names:
            raise ParameterError("class_names must not be empty")
        if y.min() < 0 or y.max() >= len(names):
            raise LabelError(f"labels must lie in [0, {len(names)})")
        fnames = tuple(str(f) for f in self.feature_names) or tuple(f"f{j}" for j in range(d))
        if len(fnames) != d:
            raise DimensionalityError(f"expected {d} feature names, got {len(fnames)}")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "feature_names", fnames)

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    def __len__(self) -> int:
        return self.size

    @property
    def dimensionality(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def samples(self) -> Tuple[Sample, ...]:
        return tuple(Sample(self.features[i], int(self.labels[i])) for i in range(self.size))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_names, self.feature_names, self.name)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.class_names, self.feature_names, self.name)


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-feature min-max scaler learned from training data only."""

    minimum: np.ndarray
    maximum: np.ndarray
    span: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.array(self.minimum, dtype=np.float64).reshape(-1)
        hi = np.array(self.maximum, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionalityError("minimum and maximum must have equal length")
        if np.any(lo > hi):
            raise ParameterError("scaler minimum exceeds maximum")
        object.__setattr__(self, "minimum", _frozen(lo))
        object.__setattr__(self, "maximum", _frozen(hi))
        object.__setattr__(self, "span", _frozen(hi - lo))

    @property
    def feature_count(self) -> int:
        return int(self.minimum.shape[0])

    def transform(self, dataset: Dataset) -> Dataset:
        return dataset.with_features(apply_scaler(self, dataset.features))


# --------- Operations ---------

def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    u = np.asarray(a, dtype=np.float64).reshape(-1)
    v = np.asarray(b, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise DimensionalityError(f"vector lengths differ: {u.shape[0]} vs {v.shape[0]}")
    if u.size == 0:
        raise DimensionalityError("vectors must have at least one component")
    diff = u - v
    return float(np.sqrt(np.dot(diff, diff)))


def fit_scaler(train: Dataset) -> FeatureScaler:
    return FeatureScaler(train.features.min(axis=0), train.features.max(axis=0))


def apply_scaler(scaler: FeatureScaler, x: np.ndarray) -> np.ndarray:
    """Map `x` (one vector or a row matrix) into [0, 1] per feature.

    Constant training features map to 0; values outside the training range
    are clamped.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] != scaler.feature_count:
        raise DimensionalityError(
            f"expected {scaler.feature_count} features, got {arr.shape[-1] if arr.ndim else 0}"
        )
    constant = scaler.span == 0
    span = np.where(constant, 1.0, scaler.span)
    out = (arr - scaler.minimum) / span
    out = np.where(constant, 0.0, out)
    return np.clip(out, 0.0, 1.0)
