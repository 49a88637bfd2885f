"""
Command-line harness: cv, tune, classify, bench-all, fetch and validate.

Every command returns a rendered string; ``pmm_knn.main`` writes it to stdout or
``--out`` and maps errors to exit codes (0 ok, 1 runtime, 2 usage/config).
"""

from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from pmm_knn.cli.report import (
    OUTPUT_FORMATS,
    BenchmarkReport,
    RunConfig,
    dataset_summary,
    render_csv,
    render_json,
    render_report,
    render_summary,
    render_table,
    render_tuning,
)
from pmm_knn.core.classifier import CLASSIFIERS, PmmKnnModel
from pmm_knn.core.data import Dataset, apply_scaler, fit_scaler
from pmm_knn.core.dataio import (
    DATASET_IDS,
    DEFAULT_VARIANT,
    iter_manifests,
    load_benchmark,
    load_csv,
    load_dataset,
    load_manifest,
    validate_dataset,
)
from pmm_knn.core.evaluation import AVERAGING_MODES, cross_validate, grid_tune, stratified_kfold
from pmm_knn.core.fetch import fetch_dataset
from pmm_knn.core.runner import JobRunner
from pmm_knn.errors import ConfigError, DataParseError, InputError, ParameterError, PmmKnnError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

SUPPORT_SCOPE_CHOICES = {"vector": "vector", "per-dim": "per-dimension", "per-dimension": "per-dimension"}


# --------- Argument parsing ---------

def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _classifier_list(text: str) -> List[str]:
    kinds = [v.strip() for v in text.split(",") if v.strip()]
    unknown = [k for k in kinds if k not in CLASSIFIERS]
    if unknown or not kinds:
        raise argparse.ArgumentTypeError(f"classifiers must be drawn from {', '.join(CLASSIFIERS)}, got {text!r}")
    return kinds


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Config file (default: pmm_knn/config.json)")
    p.add_argument("--data-dir", help="Directory holding the raw dataset files")
    p.add_argument("--output", choices=OUTPUT_FORMATS, help="Report format")
    p.add_argument("--out", help="Write the report to this file instead of stdout")
    p.add_argument("--workers", type=int, help="Worker threads for folds and grid cells")
    p.add_argument("--progress", action="store_true", help="Show progress bars on stderr")
    p.add_argument("--log-level", help="Logging level (DEBUG, INFO, WARNING, ...)")
    p.add_argument("-v", "--verbose", action="store_true", help="Debug logging and tracebacks")


def _add_dataset(p: argparse.ArgumentParser, required_source: bool = True) -> None:
    group = p.add_mutually_exclusive_group(required=required_source)
    group.add_argument("--dataset", choices=DATASET_IDS, help="Benchmark dataset id")
    group.add_argument("--manifest", help="Manifest file describing a custom dataset")
    p.add_argument("--variant", default=DEFAULT_VARIANT, help="Dataset variant (e.g. standard, outlier)")


def _add_model(p: argparse.ArgumentParser, classifiers: str) -> None:
    p.add_argument("--classifiers", type=_classifier_list, default=_classifier_list(classifiers),
                   help=f"Comma list drawn from {', '.join(CLASSIFIERS)}")
    p.add_argument("--k", type=int, help="Neighbors per class (PMM-KNN) or overall (KNN)")
    p.add_argument("--r", type=int, help="Ones-chain length")
    p.add_argument("--p", type=_float_list, help="Exponent list; overrides --r")
    p.add_argument("--support-scope", choices=sorted(SUPPORT_SCOPE_CHOICES), help="Support computation scope")


def _add_protocol(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, help="Cross-validation folds")
    p.add_argument("--seed", type=int, help="Fold assignment seed")
    p.add_argument("--averaging", choices=AVERAGING_MODES, help="Multi-class metric averaging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m pmm_knn",
        description="PMM-KNN classifier and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cv = sub.add_parser("cv", help="Cross-validate classifiers on one dataset")
    _add_common(cv)
    _add_dataset(cv)
    _add_model(cv, "pmm-knn,knn")
    _add_protocol(cv)

    tune = sub.add_parser("tune", help="Grid-search PMM-KNN (k, r) by cross-validation")
    _add_common(tune)
    _add_dataset(tune)
    _add_protocol(tune)
    tune.add_argument("--k-grid", type=_int_list, help="Comma list of k values")
    tune.add_argument("--r-grid", type=_int_list, help="Comma list of r values")
    tune.add_argument("--support-scope", choices=sorted(SUPPORT_SCOPE_CHOICES), help="Support computation scope")

    classify = sub.add_parser("classify", help="Predict labels for unlabeled query rows")
    _add_common(classify)
    _add_dataset(classify)
    _add_model(classify, "pmm-knn")
    classify.add_argument("--input", required=True, help="CSV of query rows (features only)")
    classify.add_argument("--query-header", action="store_true", help="Query file starts with a header row")

    bench = sub.add_parser("bench-all", help="Run every benchmark dataset against all classifiers")
    _add_common(bench)
    _add_protocol(bench)
    bench.add_argument("--datasets", type=lambda s: [v.strip() for v in s.split(",") if v.strip()],
                       default=list(DATASET_IDS), help="Comma list of dataset ids")
    bench.add_argument("--k", type=int, help="KNN neighbors")
    bench.add_argument("--k-grid", type=_int_list, help="PMM-KNN k grid")
    bench.add_argument("--r-grid", type=_int_list, help="PMM-KNN r grid")
    bench.add_argument("--support-scope", choices=sorted(SUPPORT_SCOPE_CHOICES), help="Support computation scope")

    fetch = sub.add_parser("fetch", help="Download the raw benchmark files")
    _add_common(fetch)
    fetch.add_argument("--datasets", type=lambda s: [v.strip() for v in s.split(",") if v.strip()],
                       default=list(DATASET_IDS), help="Comma list of dataset ids")
    fetch.add_argument("--force", action="store_true", help="Download even if the file exists")
    fetch.add_argument("--retries", type=int, default=3, help="Attempts per file")

    validate = sub.add_parser("validate", help="Check a dataset for empty classes and constant features")
    _add_common(validate)
    _add_dataset(validate)
    return parser


# --------- Resolution ---------

def _pick(value, config: dict, key: str):
    return config[key] if value is None else value


def resolve_run_config(args: argparse.Namespace, config: dict) -> RunConfig:
    manifest = getattr(args, "manifest", None)
    data_dir = args.data_dir
    if manifest is not None:
        m = load_manifest(manifest)
        dataset, variant = m.name, m.variant
        data_dir = data_dir or str(Path(manifest).resolve().parent)
        manifest = str(Path(manifest))
    else:
        dataset = getattr(args, "dataset", None) or ""
        variant = getattr(args, "variant", DEFAULT_VARIANT)
    scope = _pick(getattr(args, "support_scope", None), config, "support_scope")
    exponents = getattr(args, "p", None)
    k = int(_pick(getattr(args, "k", None), config, "k"))
    r = int(_pick(getattr(args, "r", None), config, "r"))
    return RunConfig(
        dataset=dataset,
        variant=variant,
        classifiers=tuple(getattr(args, "classifiers", None) or ("pmm-knn",)),
        k=k,
        r=r,
        exponents=tuple(exponents) if exponents is not None else None,
        folds=int(_pick(getattr(args, "folds", None), config, "folds")),
        seed=int(_pick(getattr(args, "seed", None), config, "seed")),
        support_scope=SUPPORT_SCOPE_CHOICES.get(scope, scope),
        averaging=_pick(getattr(args, "averaging", None), config, "averaging"),
        output=_pick(args.output, config, "output"),
        data_dir=str(data_dir or config["data_dir"]),
        manifest=manifest,
    )


def load_run_dataset(run: RunConfig) -> Dataset:
    if run.manifest is not None:
        return load_dataset(load_manifest(run.manifest), run.data_dir)
    if not run.dataset:
        raise ConfigError("either --dataset or --manifest is required")
    return load_benchmark(run.dataset, run.data_dir, run.variant)


def _grids(args: argparse.Namespace, config: dict) -> Tuple[List[int], List[int]]:
    k_grid = getattr(args, "k_grid", None) or list(config["k_grid"])
    r_grid = getattr(args, "r_grid", None) or list(range(1, int(config["r_max"]) + 1))
    return k_grid, r_grid


# --------- Commands ---------

def cmd_cv(run: RunConfig, dataset: Optional[Dataset] = None, runner: Optional[JobRunner] = None) -> BenchmarkReport:
    """Cross-validate every requested classifier on one shared fold plan."""
    start = time.perf_counter()
    dataset = dataset if dataset is not None else load_run_dataset(run)
    plan = stratified_kfold(dataset, run.folds, run.seed)
    report = BenchmarkReport(run, dataset_summary(dataset), plan)
    for kind in run.classifiers:
        report.results[kind] = cross_validate(
            dataset, run.classifier_config(kind), plan, runner=runner, averaging=run.averaging,
        )
    report.duration = time.perf_counter() - start
    return report


def cmd_tune(
    run: RunConfig,
    k_grid: Sequence[int],
    r_grid: Sequence[int],
    dataset: Optional[Dataset] = None,
    runner: Optional[JobRunner] = None,
) -> BenchmarkReport:
    start = time.perf_counter()
    dataset = dataset if dataset is not None else load_run_dataset(run)
    plan = stratified_kfold(dataset, run.folds, run.seed)
    tuning = grid_tune(
        dataset, k_grid, r_grid, plan,
        support_scope=run.support_scope, runner=runner, averaging=run.averaging,
    )
    return BenchmarkReport(run, dataset_summary(dataset), plan, tuning=tuning,
                           duration=time.perf_counter() - start)


def read_queries(path: Path, dimensionality: int, has_header: bool = False) -> np.ndarray:
    """Query rows as an (m x d) array; an empty file yields zero rows."""
    path = Path(path)
    if path.exists() and not path.read_text(encoding="utf-8").strip():
        return np.empty((0, dimensionality))
    try:
        table = load_csv(path, has_header=has_header)
    except DataParseError as e:
        raise InputError(f"query file: {e}", row=e.row) from e
    if len(table) and len(table.header) != dimensionality:
        raise InputError(
            f"query row 1 has {len(table.header)} values, the training data has {dimensionality} features",
            row=1,
        )
    out = np.empty((len(table), dimensionality))
    for i, row in enumerate(table.rows):
        try:
            out[i] = [float(v) for v in row]
        except ValueError:
            raise InputError(f"query row {i + 1}: cannot parse {list(row)} as numbers", row=i + 1) from None
        if not np.isfinite(out[i]).all():
            raise InputError(f"query row {i + 1}: non-finite value", row=i + 1)
    return out


def cmd_classify(run: RunConfig, input_path: Path, has_header: bool = False,
                 dataset: Optional[Dataset] = None) -> List[dict]:
    """One prediction row per query, in input order."""
    dataset = dataset if dataset is not None else load_run_dataset(run)
    queries = read_queries(input_path, dataset.dimensionality, has_header)
    if queries.shape[0] == 0:
        return []
    kind = run.classifiers[0]
    scaler = fit_scaler(dataset)
    model = run.classifier_config(kind).build().fit(scaler.transform(dataset))
    scaled = apply_scaler(scaler, queries)
    rows = []
    if isinstance(model, PmmKnnModel):
        for i, pred in enumerate(model.predict_detailed(scaled)):
            row = {"row": i + 1, "label": dataset.class_names[pred.label]}
            for name, dist in zip(dataset.class_names, pred.centroid_distances):
                row[f"distance_{name}"] = dist
            rows.append(row)
    else:
        for i, label in enumerate(model.predict(scaled)):
            rows.append({"row": i + 1, "label": dataset.class_names[int(label)]})
    return rows


def cmd_bench_all(
    base: RunConfig,
    datasets: Sequence[str],
    k_grid: Sequence[int],
    r_grid: Sequence[int],
    runner: Optional[JobRunner] = None,
    progress: bool = False,
) -> Tuple[List[BenchmarkReport], Dict[str, str]]:
    """Tuned PMM-KNN, KNN and GNB on every dataset, all on one fold plan per dataset.

    A dataset that fails is recorded and the remaining ones still run.
    """
    reports: List[BenchmarkReport] = []
    failures: Dict[str, str] = {}
    for dataset_id in tqdm(datasets, desc="datasets", disable=not progress):
        start = time.perf_counter()
        run = RunConfig(
            dataset=dataset_id,
            variant=DEFAULT_VARIANT,
            classifiers=("pmm-knn", "knn", "gnb"),
            k=base.k,
            r=1,
            folds=base.folds,
            seed=base.seed,
            support_scope=base.support_scope,
            averaging=base.averaging,
            output=base.output,
            data_dir=base.data_dir,
        )
        try:
            dataset = load_run_dataset(run)
            plan = stratified_kfold(dataset, run.folds, run.seed)
            tuning = grid_tune(dataset, k_grid, r_grid, plan, run.support_scope, runner, run.averaging)
            report = BenchmarkReport(run, dataset_summary(dataset), plan, tuning=tuning)
            report.results["pmm-knn"] = tuning.best.result
            for kind in ("knn", "gnb"):
                report.results[kind] = cross_validate(
                    dataset, run.classifier_config(kind), plan, runner=runner, averaging=run.averaging,
                )
        except PmmKnnError as e:
            logger.error("%s failed: %s", dataset_id, e)
            failures[dataset_id] = str(e)
            continue
        report.duration = time.perf_counter() - start
        reports.append(report)
    return reports, failures


def cmd_fetch(datasets: Sequence[str], data_dir: Path, force: bool = False, retries: int = 3) -> List[dict]:
    rows = []
    for manifest in iter_manifests(datasets):
        for path in fetch_dataset(manifest, data_dir, max_retries=retries, force=force):
            rows.append({"dataset": manifest.title, "file": str(path)})
    return rows


# --------- Entry ---------

def _render_rows(rows: List[dict], fmt: str) -> str:
    if not rows:
        return ""
    if fmt == "json":
        return render_json(rows)
    return render_csv(rows) if fmt == "csv" else render_table(rows)


def execute(args: argparse.Namespace, config: dict) -> Tuple[str, int]:
    """Run the parsed command; returns the rendered output and its exit code."""
    runner = JobRunner(workers=_pick(args.workers, config, "workers"), progress=args.progress)
    fmt = _pick(args.output, config, "output")

    if args.command == "fetch":
        unknown = [d for d in args.datasets if d not in DATASET_IDS]
        if unknown:
            raise ConfigError(f"unknown dataset(s) {', '.join(unknown)}; expected {', '.join(DATASET_IDS)}")
        rows = cmd_fetch(args.datasets, Path(args.data_dir or config["data_dir"]), args.force, args.retries)
        return _render_rows(rows, fmt), EXIT_OK

    if args.command == "bench-all":
        unknown = [d for d in args.datasets if d not in DATASET_IDS]
        if unknown:
            raise ConfigError(f"unknown dataset(s) {', '.join(unknown)}; expected {', '.join(DATASET_IDS)}")
        base = resolve_run_config(args, config)
        k_grid, r_grid = _grids(args, config)
        reports, failures = cmd_bench_all(base, args.datasets, k_grid, r_grid, runner, args.progress)
        return render_summary(reports, failures, base.output), EXIT_RUNTIME if failures else EXIT_OK

    run = resolve_run_config(args, config)

    if args.command == "cv":
        return render_report(cmd_cv(run, runner=runner), run.output), EXIT_OK
    if args.command == "tune":
        k_grid, r_grid = _grids(args, config)
        report = cmd_tune(run, k_grid, r_grid, runner=runner)
        return render_tuning(run, report.dataset, report.plan, report.tuning, run.output, report.duration), EXIT_OK
    if args.command == "classify":
        return _render_rows(cmd_classify(run, Path(args.input), args.query_header), run.output), EXIT_OK
    if args.command == "validate":
        report = validate_dataset(load_run_dataset(run))
        if run.output == "json":
            return render_json(report.to_dict()), EXIT_OK if report.ok else EXIT_RUNTIME
        rows = [{"check": "warning", "detail": w} for w in report.warnings]
        rows += [{"check": "error", "detail": e} for e in report.errors]
        header = f"{report.dataset}: {report.samples} samples, class counts {list(report.class_counts)}, " \
                 f"{report.duplicate_rows} duplicate rows\n"
        return header + (_render_rows(rows, run.output) if rows else "no issues\n"), EXIT_OK if report.ok else EXIT_RUNTIME
    raise ConfigError(f"unknown command {args.command!r}")


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ConfigError, ParameterError)):
        return EXIT_USAGE
    return EXIT_RUNTIME
