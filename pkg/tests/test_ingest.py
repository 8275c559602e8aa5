"""Unit tests for longleaf CSV ingestion."""

import numpy as np
import pytest

from prticle.errors import DataError
from prticle.ingest import ingest_longleaf
from prticle.models import ObservationKind


def write_csv(tmp_path, text: str):
    path = tmp_path / "trees.csv"
    path.write_text(text, encoding="utf-8")
    return path


class TestIngestLongleaf:
    """Tests for ingest_longleaf."""

    def test_valid_rows_in_file_order(self, tmp_path):
        """Rows are kept in order as (s1, s2, mark)."""
        path = write_csv(tmp_path, "x,y,diameter\n10.5,20.0,32.1\n150,3.2,5.0\n")
        data = ingest_longleaf(path)
        assert data.kind == ObservationKind.MARKED
        assert data.values.tolist() == [[10.5, 20.0, 32.1], [150.0, 3.2, 5.0]]
        assert data.source["rows_read"] == 2

    def test_small_marks_and_outside_locations_dropped(self, tmp_path):
        """Diameters <= 2 and locations on or outside the window edge are counted and dropped."""
        path = write_csv(
            tmp_path,
            "x,y,diameter\n10,10,2.0\n10,10,1.5\n0,50,10\n200,50,10\n50,50,10\n",
        )
        data = ingest_longleaf(path)
        assert data.n == 1
        assert data.source["rejected_mark"] == 2
        assert data.source["rejected_location"] == 2

    def test_headers_are_normalised(self, tmp_path):
        """Header case and surrounding spaces are ignored; extra columns are allowed."""
        path = write_csv(tmp_path, " X , Y ,Diameter,species\n1,2,3,pine\n")
        assert ingest_longleaf(path).values.tolist() == [[1.0, 2.0, 3.0]]

    def test_missing_column(self, tmp_path):
        """A file without a diameter column is rejected."""
        path = write_csv(tmp_path, "x,y\n1,2\n")
        with pytest.raises(DataError, match="missing columns"):
            ingest_longleaf(path)

    def test_unparseable_rows_report_line_numbers(self, tmp_path):
        """Bad rows are reported with their file line numbers."""
        path = write_csv(tmp_path, "x,y,diameter\n1,2,3\n1,abc,3\n4,5,\n")
        with pytest.raises(DataError) as exc_info:
            ingest_longleaf(path)
        assert "[3, 4]" in str(exc_info.value)
        assert exc_info.value.exit_code == 3

    def test_missing_file(self, tmp_path):
        """A nonexistent path is a data error."""
        with pytest.raises(DataError):
            ingest_longleaf(tmp_path / "absent.csv")

    def test_no_valid_rows(self, tmp_path):
        """A file whose rows are all dropped is rejected."""
        path = write_csv(tmp_path, "x,y,diameter\n10,10,1.0\n")
        with pytest.raises(DataError):
            ingest_longleaf(path)

    def test_values_are_read_only(self, tmp_path):
        """Ingested observations cannot be mutated."""
        data = ingest_longleaf(write_csv(tmp_path, "x,y,diameter\n1,2,3\n"))
        with pytest.raises(ValueError):
            data.values[0, 0] = 5.0
        assert np.isfinite(data.values).all()
