"""CSV / JSON writers and the per-run manifest."""

import json
import platform
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import scipy
from loguru import logger

import prticle
from prticle.errors import DataError
from prticle.utils import to_jsonable

# Fixed float formatting keeps reruns byte-identical.
FLOAT_FORMAT = "%.12e"


def ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write a DataFrame as CSV with the fixed float format and no index."""
    path = Path(path)
    ensure_dir(path.parent)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_table(path: str | Path, required: Optional[list[str]] = None) -> pd.DataFrame:
    """
    Read a CSV written by write_table.

    Raises:
        DataError: If the file is unreadable or required columns are missing
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read table {path}: {e}") from e
    missing = [c for c in (required or []) if c not in frame.columns]
    if missing:
        raise DataError(f"Table {path} is missing columns: {missing}")
    return frame


def write_json(payload: Any, path: str | Path) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def versions() -> dict[str, str]:
    return {
        "prticle": prticle.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_manifest(
    out_dir: str | Path,
    config: dict[str, Any],
    wall_time: float,
    extra: Optional[dict[str, Any]] = None,
) -> Path:
    """
    Write manifest.json: config, seed, package versions and wall time.

    Wall time is the only field expected to differ between reruns.
    """
    payload = {
        "config": config,
        "seed": config.get("seed"),
        "versions": versions(),
        "wall_time_seconds": round(float(wall_time), 3),
    }
    if extra:
        payload.update(extra)
    path = write_json(payload, Path(out_dir) / "manifest.json")
    logger.info(f"Manifest written to {path}")
    return path
