from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from pmm_knn.core.data import Dataset

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture
def blobs() -> Dataset:
    """Three well separated 2-d clusters, 12 points each."""
    gen = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    x = np.vstack([c + gen.normal(scale=0.5, size=(12, 2)) for c in centers])
    y = np.repeat(np.arange(3), 12)
    return Dataset(x, y, ("a", "b", "c"), ("x", "y"), "blobs")


@pytest.fixture
def toy() -> Dataset:
    """Four samples, two per class."""
    x = np.array([[0.0, 0.0], [0.0, 1.0], [5.0, 5.0], [5.0, 6.0]])
    return Dataset(x, np.array([0, 0, 1, 1]), ("low", "high"), name="toy")


def write_toy_files(directory: Path, rows: str, manifest_extra: str = "") -> Path:
    """Write toy.csv plus a manifest that reads it; returns the manifest path."""
    (directory / "toy.csv").write_text(rows, encoding="utf-8")
    manifest = directory / "toy.manifest"
    manifest.write_text(
        "name = toy\n"
        "files = toy.csv\n"
        "has_header = false\n"
        "label_column = 2\n"
        "feature_columns = 0-1\n"
        "label_map = L:low, H:high\n" + manifest_extra,
        encoding="utf-8",
    )
    return manifest


TOY_ROWS = "0,0,L\n0,1,L\n5,5,H\n5,6,H\n"


@pytest.fixture
def toy_manifest(tmp_path) -> Path:
    return write_toy_files(tmp_path, TOY_ROWS)


@pytest.fixture
def blob_manifest(tmp_path, blobs) -> Path:
    lines = []
    for features, label in zip(blobs.features, blobs.labels):
        lines.append(f"{float(features[0])!r},{float(features[1])!r},{'LMH'[label]}")
    path = write_toy_files(tmp_path, "\n".join(lines) + "\n")
    path.write_text(path.read_text().replace("label_map = L:low, H:high", "label_map = L:a, M:b, H:c"))
    return path


def require_data(*names: str) -> Path:
    missing = [n for n in names if not (DATA_DIR / n).exists()]
    if missing:
        pytest.skip(f"benchmark files not present under data/: {', '.join(missing)}")
    return DATA_DIR
