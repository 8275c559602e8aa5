"""Unit tests for utility functions."""

import asyncio
import threading

import numpy as np
import pytest
from loguru import logger

from prticle.utils import configure_logging, gather_jobs, log_execution_time, median, run_jobs, to_jsonable


class TestConfigureLogging:
    """Tests for configure_logging function."""

    def test_configure_logging_console_only(self):
        """Test logging configuration without a file sink."""
        configure_logging(log_level="INFO", rotation="100 MB", retention="30 days", to_file=False)
        logger.info("Test log message")

    def test_configure_logging_with_file(self, tmp_path):
        """Test the rotating file sink is created in the log directory."""
        configure_logging(log_level="DEBUG", rotation="1 MB", retention="1 day", directory=str(tmp_path))
        logger.debug("Debug message")
        logger.complete()
        log_files = [p for p in tmp_path.iterdir() if p.name.startswith("prticle_")]
        assert log_files
        assert "[MainThread] test_utils.test_configure_logging_with_file" in log_files[0].read_text(encoding="utf-8")
        configure_logging(log_level="INFO", rotation="100 MB", retention="30 days", to_file=False)


class TestLogExecutionTime:
    """Tests for log_execution_time decorator."""

    def test_sync_function(self):
        """Test decorator returns the wrapped function's result."""

        @log_execution_time
        def add(a, b):
            return a + b

        assert add(2, 3) == 5
        assert add.__name__ == "add"

    @pytest.mark.asyncio
    async def test_async_function(self):
        """Test decorator supports coroutines."""

        @log_execution_time
        async def sample_function():
            await asyncio.sleep(0.01)
            return "success"

        assert await sample_function() == "success"

    def test_failure_is_reraised(self):
        """Test exceptions propagate unchanged."""

        @log_execution_time
        def broken():
            raise ValueError("boom")

        with pytest.raises(ValueError, match="boom"):
            broken()


class TestJobPool:
    """Tests for the thread-pool job runner."""

    def test_results_keyed_and_sorted(self):
        """Results come back keyed by job, in sorted key order."""
        jobs = {(2, 1): lambda: "b", (1, 5): lambda: "a", (2, 0): lambda: "c"}
        results = run_jobs(jobs, max_workers=3)
        assert list(results) == [(1, 5), (2, 0), (2, 1)]
        assert results[(2, 1)] == "b"

    def test_jobs_run_on_worker_threads(self):
        """With several workers, jobs leave the calling thread."""
        main = threading.get_ident()
        results = run_jobs({i: threading.get_ident for i in range(4)}, max_workers=2)
        assert all(ident != main for ident in results.values())

    def test_single_worker_runs_inline(self):
        """max_workers = 1 runs jobs sequentially in the caller."""
        main = threading.get_ident()
        results = run_jobs({i: threading.get_ident for i in range(3)}, max_workers=1)
        assert set(results.values()) == {main}

    @pytest.mark.asyncio
    async def test_gather_jobs(self):
        """The async entry point can be awaited from a running loop."""
        results = await gather_jobs({"x": lambda: 1, "y": lambda: 2}, max_workers=2)
        assert results == {"x": 1, "y": 2}

    def test_job_error_propagates(self):
        """A failing job fails the pool."""

        def fail():
            raise RuntimeError("cell failed")

        with pytest.raises(RuntimeError, match="cell failed"):
            run_jobs({0: lambda: 1, 1: fail}, max_workers=2)


class TestHelpers:
    """Tests for small helpers."""

    def test_median(self):
        """Median of a generator is a plain float."""
        value = median(x for x in [3.0, 1.0, 2.0])
        assert value == 2.0
        assert isinstance(value, float)

    def test_to_jsonable(self):
        """numpy values nested in containers become builtins."""
        payload = {"a": np.float64(1.5), 2: [np.arange(2), (np.int64(3),)]}
        assert to_jsonable(payload) == {"a": 1.5, "2": [[0, 1], [3]]}
