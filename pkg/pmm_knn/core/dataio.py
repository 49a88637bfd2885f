"""
Dataset ingestion: CSV tables, key-value manifests and the five benchmark
datasets with their variants.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pmm_knn.core.data import Dataset
from pmm_knn.errors import ConfigError, DataFileMissingError, DataParseError, LabelError, ParameterError

logger = logging.getLogger(__name__)

MANIFEST_DIR = Path(__file__).resolve().parent.parent / "datasets"
DATASET_IDS = ("iris", "wbc", "digits", "satellite", "eeg")
DEFAULT_VARIANT = "standard"

Column = Union[int, str]


# --------- Raw tables ---------

@dataclass(frozen=True)
class RawTable:
    header: Tuple[str, ...]
    rows: Tuple[Tuple[str, ...], ...]

    def __post_init__(self):
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise DataParseError(f"row {i + 1} has {len(row)} cells, expected {width}", row=i + 1)

    def __len__(self) -> int:
        return len(self.rows)

    def column_index(self, column: Column) -> int:
        if isinstance(column, int):
            if not 0 <= column < len(self.header):
                raise ConfigError(f"column index {column} out of range for {len(self.header)} columns")
            return column
        try:
            return self.header.index(column)
        except ValueError:
            raise ConfigError(f"no column named {column!r}; header is {list(self.header)}") from None

    def concat(self, other: "RawTable") -> "RawTable":
        if other.header != self.header:
            raise DataParseError("cannot concatenate tables with different headers")
        return RawTable(self.header, self.rows + other.rows)


def _separator(delimiter: str) -> str:
    return r"\s+" if delimiter in ("whitespace", "space") else delimiter


def load_csv(path: Union[str, Path], has_header: bool = False, delimiter: str = ",") -> RawTable:
    path = Path(path)
    if not path.exists():
        raise DataFileMissingError(path)
    sep = _separator(delimiter)
    try:
        frame = pd.read_csv(
            path,
            sep=sep,
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            engine="python" if len(sep) > 1 else "c",
        )
    except pd.errors.EmptyDataError:
        raise DataParseError(f"{path}: file is empty", row=0) from None
    except pd.errors.ParserError as e:
        m = re.search(r"line (\d+)", str(e))
        row = int(m.group(1)) if m else None
        raise DataParseError(f"{path}: ragged row {row}: {e}", row=row) from None

    ragged = frame.isna().any(axis=1).to_numpy()
    if ragged.any():
        row = int(np.flatnonzero(ragged)[0]) + 1 + int(has_header)
        raise DataParseError(f"{path}: row {row} has fewer cells than the header", row=row)

    frame = frame.apply(lambda col: col.str.strip())
    header = tuple(str(c).strip() for c in frame.columns)
    rows = tuple(tuple(r) for r in frame.itertuples(index=False, name=None))
    logger.debug("Loaded %s: %d rows x %d columns", path.name, len(rows), len(header))
    return RawTable(header, rows)


# --------- Manifests ---------

def _parse_columns(text: str) -> Tuple[Column, ...]:
    out: List[Column] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if lo > hi:
                raise ConfigError(f"bad column range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part.isdigit():
            out.append(int(part))
        else:
            out.append(part)
    return tuple(out)


def _parse_pairs(text: str, what: str) -> Tuple[Tuple[str, str], ...]:
    pairs = []
    for item in (p.strip() for p in text.split(",")):
        if not item:
            continue
        raw, sep, value = item.rpartition(":")
        if not sep or not raw.strip() or not value.strip():
            raise ConfigError(f"bad {what} entry {item!r}; expected 'raw:value'")
        pairs.append((raw.strip(), value.strip()))
    return tuple(pairs)


def _split_list(text: str) -> Tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    files: Tuple[str, ...]
    label_column: Column
    feature_columns: Tuple[Column, ...]
    label_map: Tuple[Tuple[str, str], ...]
    has_header: bool = False
    delimiter: str = ","
    feature_names: Tuple[str, ...] = ()
    variant: str = DEFAULT_VARIANT
    note: str = ""
    url: str = ""
    downloads: Tuple[str, ...] = ()
    convert: str = ""
    downsample: Tuple[Tuple[str, int], ...] = ()
    downsample_seed: int = 42
    source: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.files:
            raise ConfigError(f"manifest {self.name!r} names no data files")
        if not self.feature_columns:
            raise ConfigError(f"manifest {self.name!r} names no feature columns")
        if self.label_column in self.feature_columns:
            raise ConfigError(f"manifest {self.name!r}: label column is listed as a feature")
        if not self.label_map:
            raise ConfigError(f"manifest {self.name!r} has an empty label map")
        if self.feature_names and len(self.feature_names) != len(self.feature_columns):
            raise ConfigError(f"manifest {self.name!r}: feature_names and feature_columns differ in length")
        if self.downloads and len(self.downloads) != len(self.files):
            raise ConfigError(f"manifest {self.name!r}: one download URL per file expected")
        known = set(self.class_names)
        for cls, _ in self.downsample:
            if cls not in known:
                raise ConfigError(f"manifest {self.name!r}: downsample names unknown class {cls!r}")

    @property
    def class_names(self) -> Tuple[str, ...]:
        seen: Dict[str, None] = {}
        for _, cls in self.label_map:
            seen.setdefault(cls, None)
        return tuple(seen)

    @property
    def label_index(self) -> Dict[str, int]:
        order = {cls: i for i, cls in enumerate(self.class_names)}
        return {raw: order[cls] for raw, cls in self.label_map}

    @property
    def title(self) -> str:
        return self.name if self.variant == DEFAULT_VARIANT else f"{self.name}:{self.variant}"


def parse_manifest(text: str, source: Optional[Path] = None) -> DatasetManifest:
    entries: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source or 'manifest'} line {lineno}: expected 'key = value'")
        entries[key.strip()] = value.strip()

    def require(key: str) -> str:
        if key not in entries:
            raise ConfigError(f"{source or 'manifest'}: missing required key {key!r}")
        return entries.pop(key)

    label = _parse_columns(require("label_column"))
    if len(label) != 1:
        raise ConfigError(f"{source or 'manifest'}: label_column must name exactly one column")
    downsample = tuple((cls, int(n)) for cls, n in _parse_pairs(entries.pop("downsample", ""), "downsample"))
    manifest = DatasetManifest(
        name=require("name"),
        files=_split_list(require("files")),
        label_column=label[0],
        feature_columns=_parse_columns(require("feature_columns")),
        label_map=_parse_pairs(require("label_map"), "label_map"),
        has_header=entries.pop("has_header", "false").lower() in ("1", "true", "yes"),
        delimiter=entries.pop("delimiter", ","),
        feature_names=_split_list(entries.pop("feature_names", "")),
        variant=entries.pop("variant", DEFAULT_VARIANT),
        note=entries.pop("note", ""),
        url=entries.pop("url", ""),
        downloads=_split_list(entries.pop("downloads", "")),
        convert=entries.pop("convert", ""),
        downsample=downsample,
        downsample_seed=int(entries.pop("downsample_seed", "42")),
        source=source,
    )
    for key in entries:
        logger.warning("%s: ignoring unknown manifest key %r", source or "manifest", key)
    return manifest


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    return parse_manifest(path.read_text(encoding="utf-8"), source=path)


def available_variants(dataset_id: str) -> List[str]:
    variants = []
    for p in sorted(MANIFEST_DIR.glob(f"{dataset_id}*.manifest")):
        parts = p.name[: -len(".manifest")].split(".")
        if parts[0] == dataset_id:
            variants.append(parts[1] if len(parts) > 1 else DEFAULT_VARIANT)
    return variants


def manifest_path(dataset_id: str, variant: str = DEFAULT_VARIANT) -> Path:
    if dataset_id not in DATASET_IDS:
        raise ConfigError(f"unknown dataset {dataset_id!r}; expected one of {', '.join(DATASET_IDS)}")
    name = f"{dataset_id}.manifest" if variant == DEFAULT_VARIANT else f"{dataset_id}.{variant}.manifest"
    path = MANIFEST_DIR / name
    if not path.exists():
        raise ConfigError(
            f"dataset {dataset_id!r} has no variant {variant!r}; available: {', '.join(available_variants(dataset_id))}"
        )
    return path


# --------- Table -> Dataset ---------

def _parse_features(cells: np.ndarray, header: Sequence[str], columns: Sequence[int]) -> np.ndarray:
    try:
        values = cells.astype(np.float64)
    except ValueError:
        values = np.empty(cells.shape)
        for (i, j), cell in np.ndenumerate(cells):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataParseError(
                    f"row {i + 1}, column {header[columns[j]]!r}: cannot parse {cell!r} as a number",
                    row=i + 1, column=header[columns[j]],
                ) from None
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise DataParseError(
            f"row {i + 1}, column {header[columns[j]]!r}: non-finite value {cells[i, j]!r}",
            row=i + 1, column=header[columns[j]],
        )
    return values


def to_dataset(table: RawTable, manifest: DatasetManifest) -> Dataset:
    if len(table) == 0:
        raise DataParseError(f"{manifest.name}: table has no data rows", row=0)
    label_col = table.column_index(manifest.label_column)
    feature_cols = [table.column_index(c) for c in manifest.feature_columns]
    if label_col in feature_cols:
        raise ConfigError(f"{manifest.name}: label column is listed as a feature")

    cells = np.array(table.rows, dtype=str)
    features = _parse_features(cells[:, feature_cols], table.header, feature_cols)

    index = manifest.label_index
    labels = np.empty(len(table), dtype=np.int64)
    for i, raw in enumerate(cells[:, label_col]):
        try:
            labels[i] = index[raw]
        except KeyError:
            raise LabelError(f"{manifest.name}: row {i + 1} has unmapped label {raw!r}", row=i + 1) from None

    names = manifest.feature_names or (
        tuple(table.header[j] for j in feature_cols) if manifest.has_header else ()
    )
    return Dataset(features, labels, manifest.class_names, names, manifest.title)


def downsample_class(dataset: Dataset, label: int, keep: int, seed: int = 42) -> Dataset:
    """Keep `keep` randomly chosen samples of one class; row order is preserved."""
    members = np.flatnonzero(dataset.labels == label)
    if keep < 0:
        raise ParameterError("downsample size must be nonnegative")
    if keep >= members.size:
        return dataset
    rng = np.random.default_rng(seed)
    dropped = np.setdiff1d(members, rng.choice(members, size=keep, replace=False))
    return dataset.subset(np.setdiff1d(np.arange(dataset.size), dropped))


def load_dataset(manifest: DatasetManifest, data_dir: Union[str, Path]) -> Dataset:
    data_dir = Path(data_dir)
    table: Optional[RawTable] = None
    for name in manifest.files:
        path = data_dir / name
        if not path.exists():
            raise DataFileMissingError(path, manifest.url)
        part = load_csv(path, manifest.has_header, manifest.delimiter)
        table = part if table is None else table.concat(part)
    dataset = to_dataset(table, manifest)
    order = {cls: i for i, cls in enumerate(manifest.class_names)}
    for cls, keep in manifest.downsample:
        dataset = downsample_class(dataset, order[cls], keep, manifest.downsample_seed)
    logger.info("Loaded %s: %d samples, %d features, %d classes",
                dataset.name, dataset.size, dataset.dimensionality, dataset.class_count)
    return dataset


def load_benchmark(dataset_id: str, data_dir: Union[str, Path], variant: str = DEFAULT_VARIANT) -> Dataset:
    return load_dataset(load_manifest(manifest_path(dataset_id, variant)), data_dir)


# --------- Validation ---------

@dataclass(frozen=True)
class ValidationReport:
    dataset: str
    samples: int
    class_counts: Tuple[int, ...]
    constant_features: Tuple[str, ...]
    duplicate_rows: int
    non_finite: int
    warnings: Tuple[str, ...]
    errors: Tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "samples": self.samples,
            "class_counts": list(self.class_counts),
            "constant_features": list(self.constant_features),
            "duplicate_rows": self.duplicate_rows,
            "non_finite": self.non_finite,
            "warnings": list(self.warnings),
            "errors": list(self.errors),
        }


def validate_dataset(ds: Dataset) -> ValidationReport:
    counts = ds.class_counts()
    x = ds.features
    constant = tuple(ds.feature_names[j] for j in np.flatnonzero(np.ptp(x, axis=0) == 0))
    rows = np.column_stack([x, ds.labels.astype(np.float64)])
    duplicates = ds.size - np.unique(rows, axis=0).shape[0]
    non_finite = int((~np.isfinite(x)).sum())

    warnings = [f"constant feature: {name}" for name in constant]
    errors = [f"empty class: {ds.class_names[c]}" for c in np.flatnonzero(counts == 0)]
    if non_finite:
        errors.append(f"{non_finite} non-finite feature values")
    return ValidationReport(
        dataset=ds.name,
        samples=ds.size,
        class_counts=tuple(int(c) for c in counts),
        constant_features=constant,
        duplicate_rows=int(duplicates),
        non_finite=non_finite,
        warnings=tuple(warnings),
        errors=tuple(errors),
    )


# --------- Export ---------

def write_dataset_csv(ds: Dataset, path: Union[str, Path]) -> DatasetManifest:
    """Write `ds` with a header row and return a manifest that reads it back."""
    path = Path(path)
    frame = pd.DataFrame(ds.features, columns=list(ds.feature_names))
    frame["label"] = [ds.class_names[y] for y in ds.labels]
    frame.to_csv(path, index=False, float_format="%.17g")
    return DatasetManifest(
        name=ds.name or path.stem,
        files=(path.name,),
        label_column="label",
        feature_columns=tuple(ds.feature_names),
        label_map=tuple((c, c) for c in ds.class_names),
        has_header=True,
    )


def iter_manifests(ids: Iterable[str] = DATASET_IDS) -> List[DatasetManifest]:
    return [load_manifest(manifest_path(i, v)) for i in ids for v in available_variants(i)]
