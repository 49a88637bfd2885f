from __future__ import annotations

import io
import logging
import time
from pathlib import Path
from typing import Callable, List, Optional, Union

import pandas as pd
import requests
from scipy.io import arff

from pmm_knn.core.dataio import DatasetManifest
from pmm_knn.errors import FetchError

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


def _is_retryable(error: Exception) -> bool:
    if isinstance(error, (requests.ConnectionError, requests.Timeout)):
        return True
    if isinstance(error, requests.HTTPError) and error.response is not None:
        return error.response.status_code in RETRYABLE_STATUS
    return False


def download(
    url: str,
    max_retries: int = 3,
    timeout: float = 30,
    sleep: Callable[[float], None] = time.sleep,
) -> bytes:
    """GET `url` with exponential backoff on transient failures."""
    last_error: Optional[Exception] = None
    for attempt in range(max(1, max_retries)):
        if attempt > 0:
            wait_time = min(2 ** attempt, 10)
            logger.info("Retrying %s (%d/%d) in %ss", url, attempt, max_retries, wait_time)
            sleep(wait_time)
        try:
            response = requests.get(url, timeout=timeout)
            response.raise_for_status()
            return response.content
        except requests.RequestException as e:
            last_error = e
            if not _is_retryable(e):
                break
    raise FetchError(f"could not download {url}: {last_error}")


def arff_to_csv(text: str) -> str:
    """Rewrite an ARFF document as CSV, header taken from its attribute names."""
    try:
        data, meta = arff.loadarff(io.StringIO(text))
    except (arff.ArffError, ValueError, TypeError, IndexError, StopIteration) as e:
        raise FetchError(f"could not parse ARFF document: {e or type(e).__name__}") from e
    if not meta.names():
        raise FetchError("ARFF document declares no attributes")
    frame = pd.DataFrame(data, columns=meta.names())
    for name, kind in zip(meta.names(), meta.types()):
        if kind == "nominal":
            frame[name] = frame[name].str.decode("utf-8")
    return frame.to_csv(index=False, lineterminator="\n")


def fetch_dataset(
    manifest: DatasetManifest,
    data_dir: Union[str, Path],
    max_retries: int = 3,
    timeout: float = 30,
    force: bool = False,
) -> List[Path]:
    """Download every data file a manifest names into `data_dir`.

    Files already present are left alone unless `force` is set.
    """
    if not manifest.downloads:
        raise FetchError(f"manifest {manifest.title!r} lists no download URLs")
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for name, url in zip(manifest.files, manifest.downloads):
        target = data_dir / name
        if target.exists() and not force:
            logger.info("%s already present, skipping", target)
            written.append(target)
            continue
        logger.info("Fetching %s -> %s", url, target)
        payload = download(url, max_retries=max_retries, timeout=timeout)
        if manifest.convert == "arff":
            target.write_text(arff_to_csv(payload.decode("utf-8", errors="replace")), encoding="utf-8")
        elif manifest.convert:
            raise FetchError(f"unknown conversion {manifest.convert!r} in manifest {manifest.title!r}")
        else:
            target.write_bytes(payload)
        written.append(target)
    return written
