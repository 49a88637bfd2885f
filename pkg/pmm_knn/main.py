# PMM-KNN benchmark harness
# Command-line entrypoint.

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pmm_knn.cli.commands import EXIT_RUNTIME, build_parser, execute, exit_code_for
from pmm_knn.errors import PmmKnnError

logger = logging.getLogger("pmm_knn")

DEFAULT_CONFIG = {
    "data_dir": "data",
    "seed": 42,
    "folds": 10,
    "k": 5,
    "r": 1,
    "k_grid": [3, 5, 7, 9, 11, 13, 15],
    "r_max": 7,
    "support_scope": "vector",  # vector | per-dimension
    "averaging": "one-vs-rest",  # one-vs-rest | pairwise
    "workers": 1,
    "output": "json",  # json | csv | table
    "log_level": "INFO",
}


def load_config(config_path: Path) -> dict:
    if not config_path.exists():
        config_path.parent.mkdir(parents=True, exist_ok=True)
        config_path.write_text(json.dumps(DEFAULT_CONFIG, indent=2), encoding="utf-8")
        return DEFAULT_CONFIG.copy()
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config root must be an object")
        # fill missing keys with defaults
        for k, v in DEFAULT_CONFIG.items():
            data.setdefault(k, v)
        return data
    except (OSError, ValueError) as e:
        logger.warning("Could not read %s (%s); using defaults", config_path, e)
        return DEFAULT_CONFIG.copy()


def save_config(config_path: Path, data: dict) -> None:
    config_path.write_text(json.dumps(data, indent=2), encoding="utf-8")


def setup_logging(level: str, verbose: bool = False) -> None:
    """Log to stderr; stdout is reserved for reports."""
    resolved = logging.DEBUG if verbose else getattr(logging, str(level).upper(), logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("pmm_knn")
    root.handlers[:] = [handler]
    root.setLevel(resolved)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    base_dir = Path(__file__).resolve().parent
    config_path = Path(args.config) if args.config else base_dir / "config.json"
    config = load_config(config_path)
    setup_logging(args.log_level or config["log_level"], args.verbose)

    try:
        text, code = execute(args, config)
    except PmmKnnError as e:
        logger.error("%s", e, exc_info=args.verbose)
        return exit_code_for(e)
    except Exception as e:
        logger.error("Unexpected failure: %s", e, exc_info=args.verbose)
        return EXIT_RUNTIME

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        logger.info("Report written to %s", out)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
