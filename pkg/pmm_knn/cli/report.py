"""
Run configuration, report assembly and rendering (json, csv, table).
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from pmm_knn.core.classifier import CLASSIFIERS, SUPPORT_SCOPES, ClassifierConfig
from pmm_knn.core.data import Dataset
from pmm_knn.core.evaluation import AVERAGING_MODES, CrossValidationResult, FoldPlan, TuneResult
from pmm_knn.errors import ParameterError

OUTPUT_FORMATS = ("json", "csv", "table")
METRICS = ("accuracy", "sensitivity", "specificity")

# Published (accuracy, sensitivity, specificity) per dataset and classifier.
PUBLISHED_RESULTS: Dict[str, Dict[str, Tuple[float, float, float]]] = {
    "iris": {
        "pmm-knn": (0.980, 0.970, 0.990),
        "gnb": (0.953, 0.946, 0.973),
        "knn": (0.966, 0.957, 0.981),
    },
    "wbc": {
        "pmm-knn": (0.945, 0.963, 0.908),
        "gnb": (0.938, 0.959, 0.888),
        "knn": (0.934, 0.961, 0.888),
    },
    "digits": {
        "pmm-knn": (0.993, 0.999, 0.993),
        "gnb": (0.838, 0.834, 0.982),
        "knn": (0.986, 0.986, 0.998),
    },
    "satellite": {
        "pmm-knn": (0.922, 0.899, 0.984),
        "gnb": (0.795, 0.784, 0.959),
        "knn": (0.894, 0.868, 0.978),
    },
    "eeg": {
        "pmm-knn": (0.978, 0.977, 0.982),
        "gnb": (0.458, 0.942, 0.063),
        "knn": (0.941, 0.922, 0.956),
    },
}


# --------- Run configuration ---------

@dataclass(frozen=True)
class RunConfig:
    dataset: str
    variant: str = "standard"
    classifiers: Tuple[str, ...] = ("pmm-knn", "knn")
    k: int = 5
    r: int = 1
    exponents: Optional[Tuple[float, ...]] = None
    folds: int = 10
    seed: int = 42
    support_scope: str = "vector"
    averaging: str = "one-vs-rest"
    output: str = "json"
    data_dir: str = "data"
    manifest: Optional[str] = None

    def __post_init__(self):
        if not self.classifiers:
            raise ParameterError("at least one classifier is required")
        for kind in self.classifiers:
            if kind not in CLASSIFIERS:
                raise ParameterError(f"unknown classifier {kind!r}; expected one of {CLASSIFIERS}")
        if self.folds < 2:
            raise ParameterError(f"need at least 2 folds, got {self.folds}")
        if self.k < 1:
            raise ParameterError(f"k must be at least 1, got {self.k}")
        if self.exponents is None and not 1 <= self.r <= self.k:
            raise ParameterError(f"r must satisfy 1 <= r <= k, got r={self.r}, k={self.k}")
        if self.support_scope not in SUPPORT_SCOPES:
            raise ParameterError(f"support scope must be one of {SUPPORT_SCOPES}")
        if self.averaging not in AVERAGING_MODES:
            raise ParameterError(f"averaging must be one of {AVERAGING_MODES}")
        if self.output not in OUTPUT_FORMATS:
            raise ParameterError(f"output must be one of {OUTPUT_FORMATS}")
        if self.exponents is not None:
            # model construction checks the exponent vector against k
            self.classifier_config("pmm-knn").build()

    def classifier_config(self, kind: str) -> ClassifierConfig:
        return ClassifierConfig(kind, self.k, self.r, self.exponents, self.support_scope)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["classifiers"] = list(self.classifiers)
        data["exponents"] = list(self.exponents) if self.exponents is not None else None
        return data


# --------- Reports ---------

def dataset_summary(ds: Dataset) -> dict:
    return {
        "name": ds.name,
        "samples": ds.size,
        "features": ds.dimensionality,
        "classes": list(ds.class_names),
        "class_counts": ds.class_counts().tolist(),
    }


@dataclass
class BenchmarkReport:
    config: RunConfig
    dataset: dict
    plan: FoldPlan
    results: Dict[str, CrossValidationResult] = field(default_factory=dict)
    tuning: Optional[TuneResult] = None
    duration: float = 0.0

    def to_dict(self, include_folds: bool = True) -> dict:
        results = {}
        for kind, res in self.results.items():
            data = res.to_dict()
            if not include_folds:
                data.pop("folds")
            results[kind] = data
        out = {
            "config": self.config.to_dict(),
            "dataset": self.dataset,
            "fold_plan": self.plan.to_dict(),
            "results": results,
        }
        if self.tuning is not None:
            out["tuning"] = self.tuning.to_dict()
        out["duration_seconds"] = round(self.duration, 3)
        return out

    def metric_rows(self) -> List[dict]:
        rows = []
        for kind, res in self.results.items():
            mean = (res.mean_accuracy, res.mean_sensitivity, res.mean_specificity)
            pooled = (res.pooled.accuracy, res.pooled.macro_sensitivity, res.pooled.macro_specificity)
            for metric, value, pooled_value in zip(METRICS, mean, pooled):
                rows.append({
                    "dataset": self.config.dataset,
                    "variant": self.config.variant,
                    "classifier": kind,
                    "metric": metric,
                    "value": value,
                    "pooled": pooled_value,
                })
        return rows


# --------- Rendering ---------

def render_json(payload) -> str:
    return json.dumps(payload, indent=2) + "\n"


def render_csv(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    frame = pd.DataFrame(list(rows), columns=list(columns) if columns else None)
    buf = io.StringIO()
    frame.to_csv(buf, index=False, lineterminator="\n", float_format="%.6f")
    return buf.getvalue()


def render_table(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    if not rows:
        return "(no rows)\n"
    frame = pd.DataFrame(list(rows), columns=list(columns) if columns else None)
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4f}") + "\n"


def render_report(report: BenchmarkReport, fmt: str) -> str:
    if fmt == "json":
        return render_json(report.to_dict())
    rows = report.metric_rows()
    if fmt == "csv":
        return render_csv(rows)
    text = render_table(rows)
    if report.tuning is not None:
        best = report.tuning.best
        text += f"best PMM-KNN cell: k={best.k} r={best.r} accuracy={best.accuracy:.4f}\n"
    return text


def render_tuning(config: RunConfig, dataset: dict, plan: FoldPlan, tuning: TuneResult, fmt: str,
                  duration: float = 0.0) -> str:
    if fmt == "json":
        return render_json({
            "config": config.to_dict(),
            "dataset": dataset,
            "fold_plan": plan.to_dict(),
            **tuning.to_dict(),
            "duration_seconds": round(duration, 3),
        })
    rows = [cell.to_row() for cell in tuning.cells]
    return render_csv(rows) if fmt == "csv" else render_table(rows)


def summary_rows(reports: Sequence[BenchmarkReport], failures: Dict[str, str]) -> List[dict]:
    """One row per (dataset, classifier, metric) with the published value beside the measured one."""
    rows = []
    for report in reports:
        published_rows = PUBLISHED_RESULTS.get(report.config.dataset, {})
        for row in report.metric_rows():
            published = published_rows.get(row["classifier"])
            row = dict(row)
            row["published"] = published[METRICS.index(row["metric"])] if published else None
            rows.append(row)
    for dataset, error in failures.items():
        rows.append({"dataset": dataset, "variant": "", "classifier": "", "metric": "error",
                     "value": None, "pooled": None, "published": None, "error": error})
    return rows


def render_summary(reports: Sequence[BenchmarkReport], failures: Dict[str, str], fmt: str) -> str:
    if fmt == "json":
        return render_json({
            "datasets": [r.to_dict(include_folds=False) for r in reports],
            "summary": summary_rows(reports, {}),
            "failures": failures,
        })
    rows = summary_rows(reports, failures)
    columns = ["dataset", "variant", "classifier", "metric", "value", "pooled", "published"]
    if failures:
        columns.append("error")
    if fmt == "csv":
        return render_csv(rows, columns)
    return render_table(rows, columns)
