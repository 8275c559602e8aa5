"""On-disk memoisation of quadrature oracle fits using DiskCache."""

import hashlib
from typing import Callable, Optional

import numpy as np
from diskcache import Cache
from loguru import logger

from prticle.kernels import KernelModel
from prticle.models import Dataset, WeightSchedule
from prticle.quadrature import GridDensity, run_pr_quadrature


def oracle_key(data: Dataset, state: GridDensity, schedule: WeightSchedule, kernel: KernelModel) -> str:
    """SHA-256 of the dataset bytes, grid, initial density, gamma and kernel."""
    h = hashlib.sha256()
    for arr in (data.values, state.points, state.cell_weights, state.values):
        h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(arr.shape).encode())
    h.update(repr(schedule.gamma).encode())
    h.update(kernel.model_dump_json().encode())
    return h.hexdigest()


class OracleCache:
    """
    Caches (final grid values, normalizing constants) of quadrature PR runs.

    Cached and recomputed results are bit-identical, so the cache can be
    cleared at any time.
    """

    def __init__(self, cache_dir: str, enabled: bool = True):
        """
        Args:
            cache_dir: Directory path for DiskCache storage
            enabled: When False every lookup recomputes
        """
        self.enabled = enabled
        self.cache: Optional[Cache] = Cache(cache_dir) if enabled else None
        self.hits = 0
        self.misses = 0
        logger.info(f"OracleCache initialized: directory={cache_dir}, enabled={enabled}")

    def get(self, key: str) -> Optional[tuple[np.ndarray, np.ndarray]]:
        if self.cache is None:
            return None
        entry = self.cache.get(key)
        if entry is None:
            self.misses += 1
            logger.debug(f"Oracle cache miss: {key[:12]}")
            return None
        self.hits += 1
        logger.debug(f"Oracle cache hit: {key[:12]}")
        return entry["values"], entry["m_values"]

    def set(self, key: str, values: np.ndarray, m_values: np.ndarray) -> None:
        if self.cache is None:
            return
        self.cache.set(key, {"values": np.array(values), "m_values": np.array(m_values)})

    def run_pr_quadrature(
        self,
        data: Dataset,
        state: GridDensity,
        schedule: WeightSchedule,
        kernel: KernelModel,
        compute: Callable = run_pr_quadrature,
    ) -> tuple[GridDensity, np.ndarray]:
        """Memoised run_pr_quadrature."""
        key = oracle_key(data, state, schedule, kernel)
        cached = self.get(key)
        if cached is not None:
            values, m_values = cached
            return state.with_values(values), m_values
        fitted, m_values = compute(data, state, schedule, kernel)
        self.set(key, fitted.values, m_values)
        return fitted, m_values

    def clear(self) -> None:
        if self.cache is not None:
            self.cache.clear()
            logger.info("Oracle cache cleared")

    def close(self) -> None:
        if self.cache is not None:
            self.cache.close()
