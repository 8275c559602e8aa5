"""
Unit tests for the oracle cache.
"""
import shutil
import tempfile
from unittest.mock import Mock

import numpy as np
import pytest

from prticle.cache import OracleCache, oracle_key
from prticle.kernels import KernelModel
from prticle.models import Dataset, WeightSchedule
from prticle.quadrature import make_grid, run_pr_quadrature


@pytest.fixture
def temp_cache_dir():
    """Create a temporary directory for cache testing."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def oracle_cache(temp_cache_dir):
    """Create an OracleCache instance with temporary directory."""
    cache = OracleCache(cache_dir=temp_cache_dir)
    yield cache
    cache.close()


@pytest.fixture
def problem():
    """A small quadrature problem."""
    return (
        Dataset.euclidean([2.0, 6.0, 6.5]),
        make_grid([(0.0, 10.0)], 101),
        WeightSchedule(),
        KernelModel.gaussian_iso(0.5),
    )


class TestOracleKey:
    """Tests for oracle_key."""

    def test_key_is_stable(self, problem):
        """The same inputs give the same key."""
        assert oracle_key(*problem) == oracle_key(*problem)

    @pytest.mark.parametrize("change", ["data", "grid", "gamma", "kernel"])
    def test_key_changes_with_inputs(self, problem, change):
        """Every input contributes to the key."""
        data, grid, schedule, kernel = problem
        if change == "data":
            data = Dataset.euclidean([2.0, 6.0, 6.6])
        elif change == "grid":
            grid = make_grid([(0.0, 10.0)], 102)
        elif change == "gamma":
            schedule = WeightSchedule(gamma=0.9)
        else:
            kernel = KernelModel.gaussian_iso(0.6)
        assert oracle_key(data, grid, schedule, kernel) != oracle_key(*problem)


class TestOracleCache:
    """Tests for OracleCache class."""

    def test_cache_initialization(self, temp_cache_dir):
        """Test cache initialization."""
        cache = OracleCache(cache_dir=temp_cache_dir)
        assert cache.cache is not None
        assert cache.hits == 0
        cache.close()

    def test_set_and_get(self, oracle_cache):
        """Test storing and retrieving arrays."""
        oracle_cache.set("k", np.array([1.0, 2.0]), np.array([0.5]))
        values, m_values = oracle_cache.get("k")
        assert values.tolist() == [1.0, 2.0]
        assert m_values.tolist() == [0.5]
        assert oracle_cache.hits == 1

    def test_cache_miss(self, oracle_cache):
        """Test cache miss for an unknown key."""
        assert oracle_cache.get("absent") is None
        assert oracle_cache.misses == 1

    def test_memoised_run_is_bit_identical(self, oracle_cache, problem):
        """A cached fit equals the recomputed one exactly, and is computed once."""
        compute = Mock(side_effect=run_pr_quadrature)
        first, m1 = oracle_cache.run_pr_quadrature(*problem, compute=compute)
        second, m2 = oracle_cache.run_pr_quadrature(*problem, compute=compute)
        fresh, m3 = run_pr_quadrature(*problem)
        assert compute.call_count == 1
        assert np.array_equal(first.values, second.values)
        assert np.array_equal(second.values, fresh.values)
        assert np.array_equal(m2, m3)

    def test_clear(self, oracle_cache, problem):
        """Clearing forces recomputation."""
        compute = Mock(side_effect=run_pr_quadrature)
        oracle_cache.run_pr_quadrature(*problem, compute=compute)
        oracle_cache.clear()
        oracle_cache.run_pr_quadrature(*problem, compute=compute)
        assert compute.call_count == 2

    def test_disabled_cache_always_computes(self, temp_cache_dir, problem):
        """With caching off every call recomputes."""
        cache = OracleCache(cache_dir=temp_cache_dir, enabled=False)
        compute = Mock(side_effect=run_pr_quadrature)
        cache.run_pr_quadrature(*problem, compute=compute)
        cache.run_pr_quadrature(*problem, compute=compute)
        assert compute.call_count == 2
        assert cache.get("anything") is None
        cache.close()
