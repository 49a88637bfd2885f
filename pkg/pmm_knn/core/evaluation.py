from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pmm_knn.core.classifier import ClassifierConfig, PmmKnnModel
from pmm_knn.core.data import Dataset, apply_scaler, fit_scaler
from pmm_knn.core.runner import JobRunner
from pmm_knn.errors import DimensionalityError, FoldError, LabelError, ParameterError

logger = logging.getLogger(__name__)

AVERAGING_MODES = ("one-vs-rest", "pairwise")
DEFAULT_SEED = 42


# --------- Confusion matrix and rates ---------

@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionalityError(f"confusion counts must be square, got shape {c.shape}")
        if np.any(c < 0):
            raise ParameterError("confusion counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def class_count(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def to_list(self) -> List[List[int]]:
        return self.counts.tolist()


def confusion(true_labels: Sequence[int], predicted_labels: Sequence[int], class_count: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise DimensionalityError(f"{t.size} true labels but {p.size} predictions")
    for name, labels in (("true", t), ("predicted", p)):
        bad = np.flatnonzero((labels < 0) | (labels >= class_count))
        if bad.size:
            raise LabelError(
                f"{name} label {labels[bad[0]]} at position {bad[0]} outside [0, {class_count})",
                row=int(bad[0]),
            )
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def _ratio(num: int, den: int) -> Tuple[float, bool]:
    return (num / den, True) if den else (0.0, False)


def _one_vs_rest(cm: ConfusionMatrix, c: int) -> Tuple[float, float, bool, bool]:
    m = cm.counts
    tp = int(m[c, c])
    fn = int(m[c, :].sum()) - tp
    fp = int(m[:, c].sum()) - tp
    tn = cm.total - tp - fn - fp
    sens, sens_ok = _ratio(tp, tp + fn)
    spec, spec_ok = _ratio(tn, fp + tn)
    return sens, spec, sens_ok, spec_ok


def sensitivity_specificity(cm: ConfusionMatrix, positive_class: int) -> Tuple[float, float]:
    """One-vs-rest rates for one class; a zero denominator yields 0."""
    sens, spec, _, _ = _one_vs_rest(cm, positive_class)
    return sens, spec


def pairwise_rates(cm: ConfusionMatrix) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Per-class rates averaged over every (positive, negative) class pair.

    Only samples whose true class is one of the pair count; predictions of
    a third class are ignored.
    """
    m = cm.counts
    n = cm.class_count
    sens = np.zeros(n)
    spec = np.zeros(n)
    undefined: List[str] = []
    if n < 2:
        return sens, spec, ["pairwise[0]"]
    for a in range(n):
        s_vals, p_vals = [], []
        for b in range(n):
            if b == a:
                continue
            s, s_ok = _ratio(int(m[a, a]), int(m[a, a] + m[a, b]))
            p, p_ok = _ratio(int(m[b, b]), int(m[b, b] + m[b, a]))
            s_vals.append(s)
            p_vals.append(p)
            if not (s_ok and p_ok):
                undefined.append(f"pair[{a},{b}]")
        sens[a] = np.mean(s_vals)
        spec[a] = np.mean(p_vals)
    return sens, spec, undefined


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    macro_sensitivity: float
    macro_specificity: float
    per_class_sensitivity: Tuple[float, ...]
    per_class_specificity: Tuple[float, ...]
    undefined: Tuple[str, ...] = ()
    averaging: str = "one-vs-rest"

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, averaging: str = "one-vs-rest") -> "MetricReport":
        if averaging not in AVERAGING_MODES:
            raise ParameterError(f"averaging must be one of {AVERAGING_MODES}, got {averaging!r}")
        if averaging == "pairwise":
            sens, spec, undefined = pairwise_rates(cm)
        else:
            sens = np.zeros(cm.class_count)
            spec = np.zeros(cm.class_count)
            undefined = []
            for c in range(cm.class_count):
                sens[c], spec[c], sens_ok, spec_ok = _one_vs_rest(cm, c)
                if not sens_ok:
                    undefined.append(f"sensitivity[{c}]")
                if not spec_ok:
                    undefined.append(f"specificity[{c}]")
        return cls(
            accuracy=cm.accuracy,
            macro_sensitivity=float(np.mean(sens)),
            macro_specificity=float(np.mean(spec)),
            per_class_sensitivity=tuple(float(v) for v in sens),
            per_class_specificity=tuple(float(v) for v in spec),
            undefined=tuple(undefined),
            averaging=averaging,
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": self.macro_sensitivity,
            "specificity": self.macro_specificity,
            "per_class_sensitivity": list(self.per_class_sensitivity),
            "per_class_specificity": list(self.per_class_specificity),
            "undefined": list(self.undefined),
            "averaging": self.averaging,
        }


# --------- Fold plans ---------

@dataclass(frozen=True, eq=False)
class FoldPlan:
    assignments: np.ndarray
    folds: int
    seed: int
    stratified: bool = True

    def __post_init__(self):
        a = np.array(self.assignments, dtype=np.int64)
        if a.size and (a.min() < 0 or a.max() >= self.folds):
            raise ParameterError(f"fold assignments must lie in [0, {self.folds})")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> List[int]:
        return np.bincount(self.assignments, minlength=self.folds).tolist()

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "seed": self.seed,
            "stratified": self.stratified,
            "fold_sizes": self.fold_sizes(),
        }


def stratified_kfold(dataset: Dataset, folds: int = 10, seed: int = DEFAULT_SEED) -> FoldPlan:
    """Seeded per-class shuffle followed by round-robin fold assignment.

    Each class starts where the previous one stopped, which keeps the total
    fold sizes within one of each other.
    """
    folds = int(folds)
    if folds < 2:
        raise ParameterError(f"need at least 2 folds, got {folds}")
    if folds > dataset.size:
        raise ParameterError(f"{folds} folds requested for {dataset.size} samples")
    rng = np.random.default_rng(seed)
    assignments = np.empty(dataset.size, dtype=np.int64)
    stratified = True
    offset = 0
    for c in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == c)
        if members.size == 0:
            continue
        if members.size < folds:
            stratified = False
            logger.warning(
                "class %r has %d samples for %d folds; it cannot appear in every fold",
                dataset.class_names[c], members.size, folds,
            )
        shuffled = rng.permutation(members)
        assignments[shuffled] = (offset + np.arange(shuffled.size)) % folds
        offset = (offset + shuffled.size) % folds
    return FoldPlan(assignments, folds, int(seed), stratified)


# --------- Cross-validation ---------

@dataclass(frozen=True)
class FoldResult:
    fold: int
    train_size: int
    test_size: int
    confusion: ConfusionMatrix
    metrics: MetricReport

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "confusion": self.confusion.to_list(),
            **self.metrics.to_dict(),
        }


@dataclass(frozen=True)
class CrossValidationResult:
    config: ClassifierConfig
    pooled_confusion: ConfusionMatrix
    pooled: MetricReport
    folds: Tuple[FoldResult, ...]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([f.metrics.accuracy for f in self.folds]))

    @property
    def mean_sensitivity(self) -> float:
        return float(np.mean([f.metrics.macro_sensitivity for f in self.folds]))

    @property
    def mean_specificity(self) -> float:
        return float(np.mean([f.metrics.macro_specificity for f in self.folds]))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "mean": {
                "accuracy": self.mean_accuracy,
                "sensitivity": self.mean_sensitivity,
                "specificity": self.mean_specificity,
            },
            "pooled": {"confusion": self.pooled_confusion.to_list(), **self.pooled.to_dict()},
            "folds": [f.to_dict() for f in self.folds],
        }


def _assemble(
    config: ClassifierConfig,
    plan: FoldPlan,
    matrices: Sequence[ConfusionMatrix],
    averaging: str,
) -> CrossValidationResult:
    folds = []
    for f, cm in enumerate(matrices):
        test = int(cm.total)
        folds.append(FoldResult(f, len(plan.assignments) - test, test, cm, MetricReport.from_confusion(cm, averaging)))
    pooled = matrices[0]
    for cm in matrices[1:]:
        pooled = pooled + cm
    return CrossValidationResult(config, pooled, MetricReport.from_confusion(pooled, averaging), tuple(folds))


def _split(dataset: Dataset, plan: FoldPlan, fold: int):
    """Scaled (train, test) pair with the scaler fit on the training side only."""
    train = dataset.subset(plan.train_indices(fold))
    test = dataset.subset(plan.test_indices(fold))
    scaler = fit_scaler(train)
    return scaler.transform(train), test.labels, apply_scaler(scaler, test.features)


def _check_plan(dataset: Dataset, plan: FoldPlan) -> None:
    if len(plan.assignments) != dataset.size:
        raise ParameterError(f"fold plan covers {len(plan.assignments)} samples, dataset has {dataset.size}")


def cross_validate(
    dataset: Dataset,
    config: ClassifierConfig,
    plan: FoldPlan,
    runner: Optional[JobRunner] = None,
    averaging: str = "one-vs-rest",
) -> CrossValidationResult:
    _check_plan(dataset, plan)
    runner = runner or JobRunner()

    def fold_job(fold: int):
        def run() -> ConfusionMatrix:
            train, test_labels, test_features = _split(dataset, plan, fold)
            model = config.build().fit(train)
            return confusion(test_labels, model.predict(test_features), dataset.class_count)
        return run

    matrices = runner.map([fold_job(f) for f in range(plan.folds)], desc=f"cv {config.kind}", wrap=FoldError)
    result = _assemble(config, plan, matrices, averaging)
    logger.info(
        "%s on %s: mean accuracy %.4f over %d folds",
        config.kind, dataset.name or "dataset", result.mean_accuracy, plan.folds,
    )
    return result


# --------- Grid tuning ---------

@dataclass(frozen=True)
class GridCell:
    k: int
    r: int
    result: CrossValidationResult

    @property
    def accuracy(self) -> float:
        return self.result.mean_accuracy

    def to_row(self) -> dict:
        return {
            "k": self.k,
            "r": self.r,
            "accuracy": self.result.mean_accuracy,
            "sensitivity": self.result.mean_sensitivity,
            "specificity": self.result.mean_specificity,
            "pooled_accuracy": self.result.pooled.accuracy,
        }


@dataclass(frozen=True)
class TuneResult:
    best: GridCell
    cells: Tuple[GridCell, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"best": self.best.to_row(), "grid": [c.to_row() for c in self.cells]}


def grid_cells(k_grid: Sequence[int], r_grid: Sequence[int]) -> List[Tuple[int, int]]:
    ks = sorted({int(k) for k in k_grid})
    rs = sorted({int(r) for r in r_grid})
    if not ks or not rs:
        raise ParameterError("k and r grids must not be empty")
    if ks[0] < 1 or rs[0] < 1:
        raise ParameterError("grid values must be positive")
    cells = [(k, r) for k in ks for r in rs if r <= k]
    if not cells:
        raise ParameterError("no grid cell satisfies r <= k")
    return cells


def grid_tune(
    dataset: Dataset,
    k_grid: Sequence[int],
    r_grid: Sequence[int],
    plan: FoldPlan,
    support_scope: str = "vector",
    runner: Optional[JobRunner] = None,
    averaging: str = "one-vs-rest",
) -> TuneResult:
    """Exhaustive (k, r) search by mean CV accuracy.

    Each fold ranks neighbors once at the largest k; every cell reuses the
    prefix of that ranking. Ties go to the smaller k, then the smaller r.
    """
    _check_plan(dataset, plan)
    cells = grid_cells(k_grid, r_grid)
    k_max = max(k for k, _ in cells)
    runner = runner or JobRunner()

    def fold_job(fold: int):
        def run() -> List[ConfusionMatrix]:
            train, test_labels, test_features = _split(dataset, plan, fold)
            model = PmmKnnModel(k=k_max, r=1, support_scope=support_scope).fit(train)
            ranked = model.rank_neighbors(test_features, k_max)
            out = []
            for k, r in cells:
                predicted, _ = model.predict_ranked(test_features, ranked, k=k, r=r)
                out.append(confusion(test_labels, predicted, dataset.class_count))
            return out
        return run

    per_fold = runner.map([fold_job(f) for f in range(plan.folds)], desc="tune", wrap=FoldError)
    results: Dict[Tuple[int, int], GridCell] = {}
    best: Optional[GridCell] = None
    for i, (k, r) in enumerate(cells):
        config = ClassifierConfig("pmm-knn", k=k, r=r, support_scope=support_scope)
        cell = GridCell(k, r, _assemble(config, plan, [fold[i] for fold in per_fold], averaging))
        results[(k, r)] = cell
        if best is None or cell.accuracy > best.accuracy:
            best = cell
    logger.info("best cell k=%d r=%d, mean accuracy %.4f", best.k, best.r, best.accuracy)
    return TuneResult(best, tuple(results[c] for c in cells))
