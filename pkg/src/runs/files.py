"""
Run Artifact Files

Hashing and JSON helpers shared by every run. JSON is written with sorted
keys and a trailing newline so identical content gives identical bytes.
"""

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.errors import InputMissingError

CHUNK_SIZE = 1 << 16


def sha256_file(path: Path) -> str:
    """Hex SHA-256 digest of a file's bytes."""
    path = Path(path)
    if not path.exists():
        raise InputMissingError(f"File not found: {path}")
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def write_json(payload: Any, path: Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise InputMissingError(f"File not found: {path}")
    return json.loads(path.read_text())


def read_points(path: Path) -> tuple[np.ndarray, pd.DataFrame]:
    """
    Points from a CSV with x, y columns. For a trajectory CSV the final
    (t = 0) snapshot is returned together with the full frame.
    """
    path = Path(path)
    if not path.exists():
        raise InputMissingError(f"Samples file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if "snapshot_t" in frame:
        final = frame[frame["snapshot_t"] == frame["snapshot_t"].min()].sort_values("particle_id")
        return final[["x", "y"]].to_numpy(dtype=np.float64), frame
    return frame[["x", "y"]].to_numpy(dtype=np.float64), frame
