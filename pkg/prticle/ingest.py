"""Longleaf-format CSV ingestion (columns x, y, diameter)."""

from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from prticle.errors import DataError
from prticle.models import MARK_OFFSET, MARKED_EXTENT, Dataset, ObservationKind

REQUIRED_COLUMNS = ("x", "y", "diameter")


def ingest_longleaf(path: str | Path) -> Dataset:
    """
    Read a marked point pattern.

    Rows with diameter <= 2 cm and rows whose location is outside the open
    window (0, 200)^2 are dropped and counted; the counts are recorded in
    Dataset.source. File order is preserved.

    Raises:
        DataError: On a missing file, missing columns, or unparseable rows
            (reported with their 1-based file line numbers)
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read longleaf file {path}: {e}") from e

    frame.columns = [c.strip().lower() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"Longleaf file {path} is missing columns: {missing}")

    numeric = frame[list(REQUIRED_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        # header is line 1, first data row is line 2
        lines = (np.flatnonzero(bad.to_numpy()) + 2).tolist()
        raise DataError(f"Unparseable rows in {path} at lines {lines}")

    values = numeric.to_numpy(dtype=float)
    small = values[:, 2] <= MARK_OFFSET
    outside = ~((values[:, :2] > 0.0) & (values[:, :2] < MARKED_EXTENT)).all(axis=1)
    keep = ~(small | outside)
    rejected_mark = int(np.sum(small))
    rejected_location = int(np.sum(outside & ~small))
    if rejected_mark or rejected_location:
        logger.warning(
            f"Longleaf ingestion dropped {rejected_mark} rows with diameter <= {MARK_OFFSET} "
            f"and {rejected_location} rows outside the window"
        )
    if not keep.any():
        raise DataError(f"No valid observations in {path}")

    data = Dataset(
        kind=ObservationKind.MARKED,
        values=values[keep],
        source={
            "path": str(path),
            "rows_read": int(values.shape[0]),
            "rejected_mark": rejected_mark,
            "rejected_location": rejected_location,
        },
    )
    logger.info(f"Ingested {data.n} marked points from {path}")
    return data
