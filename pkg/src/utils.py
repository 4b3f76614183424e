"""
Utility functions for the batch front end: formatting, hashing, manifests.
"""

import hashlib
import json
import logging
import os
import time
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
FLOAT_FORMAT = "%.17g"
THREADS_ENV = "NEK_THREADS"


def format_number(number: float) -> str:
    """
    Format a float with 17 significant digits, "NA" for missing values.
    """
    if number is None or pd.isna(number):
        return "NA"
    return FLOAT_FORMAT % number


def utc_timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def canonical_json(data: Any) -> str:
    """
    Key-sorted, whitespace-free JSON used for hashing.
    """
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def config_hash(config: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def file_sha256(file_path: str) -> str:
    digest = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def resolve_threads(cli_threads: Optional[int], default: int = 1) -> int:
    """
    Thread count: CLI flag, then NEK_THREADS, then the default.
    """
    if cli_threads is not None:
        threads = cli_threads
    elif os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={os.environ[THREADS_ENV]!r}")
            threads = default
    else:
        threads = default
    return max(1, int(threads))


def save_table(df: pd.DataFrame, output_path: str) -> str:
    """
    Save a results table as CSV with fixed float formatting.
    """
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    df.to_csv(output_path, index=False, float_format=FLOAT_FORMAT, na_rep="NA", lineterminator="\n")
    logger.info(f"Table saved to {output_path}")
    return output_path


def append_jsonl(records: List[Dict[str, Any]], output_path: str) -> str:
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "a", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, default=_json_default) + "\n")
    logger.info(f"{len(records)} record(s) appended to {output_path}")
    return output_path


def write_manifest(
    output_dir: str,
    config: Dict[str, Any],
    outputs: List[str],
    seeds: List[int],
    started: str,
    command: str,
) -> str:
    """
    Write manifest.json: config hash, tool version, seeds, timestamps and a
    SHA-256 per emitted file.
    """
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "tool_version": TOOL_VERSION,
        "seeds": seeds,
        "started_utc": started,
        "finished_utc": utc_timestamp(),
        "outputs": {os.path.basename(p): file_sha256(p) for p in outputs},
    }
    path = os.path.join(output_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    logger.info(f"Manifest written to {path}")
    return path
