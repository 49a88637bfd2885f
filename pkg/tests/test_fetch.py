import pytest
import requests

from pmm_knn.core import fetch
from pmm_knn.core.dataio import load_manifest, manifest_path, parse_manifest
from pmm_knn.core.fetch import arff_to_csv, download, fetch_dataset
from pmm_knn.errors import FetchError

ARFF = """@RELATION 'EEG Eye State'
% comment
@ATTRIBUTE AF3 NUMERIC
@ATTRIBUTE F7 NUMERIC
@ATTRIBUTE eyeDetection {0,1}

@DATA
4329.23,4009.23,0
4324.62,4004.62,1
"""


class FakeResponse:
    def __init__(self, status=200, content=b"payload"):
        self.status_code = status
        self.content = content

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"{self.status_code} error", response=self)


def test_arff_to_csv():
    assert arff_to_csv(ARFF) == "AF3,F7,eyeDetection\n4329.23,4009.23,0\n4324.62,4004.62,1\n"


def test_arff_without_data_section():
    with pytest.raises(FetchError):
        arff_to_csv("@ATTRIBUTE a NUMERIC\n")
    with pytest.raises(FetchError):
        arff_to_csv("@DATA\n1,2\n")


def test_download_retries_transient_errors(monkeypatch):
    calls = []

    def fake_get(url, timeout):
        calls.append(url)
        if len(calls) < 3:
            return FakeResponse(503)
        return FakeResponse(200, b"ok")

    monkeypatch.setattr(fetch.requests, "get", fake_get)
    waits = []
    assert download("http://example.test/x", max_retries=3, sleep=waits.append) == b"ok"
    assert len(calls) == 3
    assert waits == [2, 4]


def test_download_gives_up_on_client_errors(monkeypatch):
    calls = []

    def fake_get(url, timeout):
        calls.append(url)
        return FakeResponse(404)

    monkeypatch.setattr(fetch.requests, "get", fake_get)
    with pytest.raises(FetchError):
        download("http://example.test/x", max_retries=5, sleep=lambda s: None)
    assert len(calls) == 1


def test_download_connection_errors_exhaust_retries(monkeypatch):
    def fake_get(url, timeout):
        raise requests.ConnectionError("connection refused")

    monkeypatch.setattr(fetch.requests, "get", fake_get)
    with pytest.raises(FetchError, match="connection refused"):
        download("http://example.test/x", max_retries=2, sleep=lambda s: None)


def test_fetch_dataset_writes_and_converts(tmp_path, monkeypatch):
    monkeypatch.setattr(fetch.requests, "get", lambda url, timeout: FakeResponse(200, ARFF.encode()))
    written = fetch_dataset(load_manifest(manifest_path("eeg")), tmp_path)
    assert written == [tmp_path / "eeg_eye_state.csv"]
    assert written[0].read_text().startswith("AF3,F7,eyeDetection\n")


def test_fetch_dataset_skips_existing_files(tmp_path, monkeypatch):
    (tmp_path / "iris.data").write_text("kept")

    def fail(url, timeout):
        raise AssertionError("no download expected")

    monkeypatch.setattr(fetch.requests, "get", fail)
    fetch_dataset(load_manifest(manifest_path("iris")), tmp_path)
    assert (tmp_path / "iris.data").read_text() == "kept"


def test_fetch_requires_download_urls(tmp_path):
    manifest = parse_manifest("name = x\nfiles = a\nlabel_column = 1\nfeature_columns = 0\nlabel_map = a:b\n")
    with pytest.raises(FetchError):
        fetch_dataset(manifest, tmp_path)
