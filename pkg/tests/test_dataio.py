import numpy as np
import pytest

from pmm_knn.core import dataio
from pmm_knn.core.data import Dataset
from pmm_knn.core.dataio import (
    DATASET_IDS,
    available_variants,
    downsample_class,
    iter_manifests,
    load_benchmark,
    load_csv,
    load_dataset,
    load_manifest,
    manifest_path,
    parse_manifest,
    validate_dataset,
    write_dataset_csv,
)
from pmm_knn.errors import ConfigError, DataFileMissingError, DataParseError, LabelError

from conftest import require_data, write_toy_files


# --------- CSV ---------

def test_load_csv_plain_and_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,c\n1, 2 ,x\n3,4,y\n")
    table = load_csv(path, has_header=True)
    assert table.header == ("a", "b", "c")
    assert table.rows == (("1", "2", "x"), ("3", "4", "y"))
    assert load_csv(path).rows[0] == ("a", "b", "c")


def test_load_csv_whitespace_delimiter(tmp_path):
    path = tmp_path / "sat.trn"
    path.write_text("1 2  3\n4   5 6\n")
    table = load_csv(path, delimiter="whitespace")
    assert table.rows == (("1", "2", "3"), ("4", "5", "6"))


def test_load_csv_ragged_row(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("1,2\n3,4\n5,6,7\n")
    with pytest.raises(DataParseError) as info:
        load_csv(path)
    assert info.value.row == 3


def test_load_csv_empty_and_missing(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(DataParseError):
        load_csv(empty)
    with pytest.raises(DataFileMissingError):
        load_csv(tmp_path / "nope.csv")


# --------- Manifests ---------

def test_parse_manifest_ranges_and_maps():
    m = parse_manifest(
        "# comment\n"
        "name = demo\n"
        "files = a.csv, b.csv\n"
        "label_column = 4\n"
        "feature_columns = 0-2, 3\n"
        "label_map = x:first, y:second, z:first\n"
        "downsample = second:5\n"
    )
    assert m.feature_columns == (0, 1, 2, 3)
    assert m.class_names == ("first", "second")
    assert m.label_index == {"x": 0, "y": 1, "z": 0}
    assert m.downsample == (("second", 5),)
    assert m.title == "demo"


@pytest.mark.parametrize(
    "text",
    [
        "name = x\nfiles = a\nfeature_columns = 0\nlabel_map = a:b\n",
        "name = x\nfiles = a\nlabel_column = 0\nfeature_columns = 0\nlabel_map = a:b\n",
        "name = x\nfiles = a\nlabel_column = 1\nfeature_columns = 0\nlabel_map = nocolon\n",
        "name = x\nfiles = a\nlabel_column = 1\nfeature_columns = 0\nlabel_map = a:b\ndownsample = c:3\n",
        "not a key value line\n",
    ],
)
def test_manifest_errors(text):
    with pytest.raises(ConfigError):
        parse_manifest(text)


def test_shipped_manifests_parse():
    manifests = iter_manifests()
    titles = {m.title for m in manifests}
    assert {"iris", "wbc", "wbc:outlier", "digits", "digits:outlier", "satellite", "satellite:outlier", "eeg"} <= titles
    for m in manifests:
        assert m.url
        assert len(m.downloads) == len(m.files)


def test_shipped_manifest_shapes():
    assert load_manifest(manifest_path("iris")).class_names == ("setosa", "versicolor", "virginica")
    assert len(load_manifest(manifest_path("digits")).class_names) == 10
    assert len(load_manifest(manifest_path("satellite")).class_names) == 6
    assert load_manifest(manifest_path("satellite", "outlier")).class_names == ("inlier", "outlier")
    assert load_manifest(manifest_path("wbc", "outlier")).downsample == (("malignant", 21),)
    assert load_manifest(manifest_path("eeg")).convert == "arff"
    assert available_variants("wbc") == ["standard", "outlier"]


def test_unknown_dataset_and_variant():
    with pytest.raises(ConfigError):
        manifest_path("mnist")
    with pytest.raises(ConfigError):
        manifest_path("iris", "outlier")
    assert set(DATASET_IDS) == {"iris", "wbc", "digits", "satellite", "eeg"}


# --------- Table -> Dataset ---------

def test_load_toy_dataset(toy_manifest):
    ds = load_dataset(load_manifest(toy_manifest), toy_manifest.parent)
    assert ds.size == 4
    assert ds.class_names == ("low", "high")
    assert ds.labels.tolist() == [0, 0, 1, 1]
    assert ds.features[3].tolist() == [5.0, 6.0]


def test_unmapped_label_reports_row(tmp_path):
    manifest = write_toy_files(tmp_path, "0,0,L\n1,1,Q\n")
    with pytest.raises(LabelError) as info:
        load_dataset(load_manifest(manifest), tmp_path)
    assert info.value.row == 2


def test_bad_number_reports_row_and_column(tmp_path):
    manifest = write_toy_files(tmp_path, "0,0,L\n1,abc,H\n")
    with pytest.raises(DataParseError) as info:
        load_dataset(load_manifest(manifest), tmp_path)
    assert (info.value.row, info.value.column) == (2, "1")


def test_non_finite_feature_is_rejected(tmp_path):
    manifest = write_toy_files(tmp_path, "0,nan,L\n1,1,H\n")
    with pytest.raises(DataParseError):
        load_dataset(load_manifest(manifest), tmp_path)


def test_missing_file_names_path_and_url(tmp_path):
    with pytest.raises(DataFileMissingError) as info:
        load_benchmark("iris", tmp_path)
    assert info.value.path == tmp_path / "iris.data"
    assert "archive.ics.uci.edu" in str(info.value)


def test_multi_file_concatenation_and_downsampling(tmp_path):
    (tmp_path / "a.txt").write_text("0 0 1\n0 1 1\n9 9 2\n")
    (tmp_path / "b.txt").write_text("9 8 2\n8 9 2\n1 0 1\n")
    manifest = tmp_path / "m.manifest"
    manifest.write_text(
        "name = pair\nfiles = a.txt, b.txt\ndelimiter = whitespace\n"
        "label_column = 2\nfeature_columns = 0-1\nlabel_map = 1:in, 2:out\n"
        "downsample = out:1\n"
    )
    ds = load_dataset(load_manifest(manifest), tmp_path)
    assert ds.class_counts().tolist() == [3, 1]
    assert ds.size == 4


def test_downsample_is_seeded(blobs):
    a = downsample_class(blobs, 1, 4, seed=5)
    b = downsample_class(blobs, 1, 4, seed=5)
    assert a.class_counts().tolist() == [12, 4, 12]
    assert np.array_equal(a.features, b.features)
    assert downsample_class(blobs, 1, 50) is blobs


def test_round_trip_through_csv(tmp_path, blobs):
    path = tmp_path / "blobs.csv"
    manifest = write_dataset_csv(blobs, path)
    back = load_dataset(manifest, tmp_path)
    assert np.array_equal(back.features, blobs.features)
    assert back.labels.tolist() == blobs.labels.tolist()
    assert back.feature_names == ("x", "y")


# --------- Validation ---------

def test_validate_flags_constant_features_and_duplicates():
    ds = Dataset(np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 2.0]]), np.array([0, 0, 1]), ("a", "b", "c"))
    report = validate_dataset(ds)
    assert report.constant_features == ("f0",)
    assert report.duplicate_rows == 1
    assert report.warnings == ("constant feature: f0",)
    assert report.errors == ("empty class: c",)
    assert not report.ok


def test_validate_clean_dataset(blobs):
    report = validate_dataset(blobs)
    assert report.ok
    assert report.warnings == ()
    assert report.to_dict()["class_counts"] == [12, 12, 12]


def test_iris_has_no_validation_warnings():
    data_dir = require_data("iris.data")
    report = validate_dataset(load_benchmark("iris", data_dir))
    assert report.samples == 150
    assert report.class_counts == (50, 50, 50)
    assert report.warnings == ()


def test_manifest_dir_points_at_package_data():
    assert (dataio.MANIFEST_DIR / "iris.manifest").exists()
