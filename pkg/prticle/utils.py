"""Utility functions for logging, timing, progress and the experiment job pool."""

import asyncio
import inspect
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Optional, TypeVar

import numpy as np
from loguru import logger
from tqdm import tqdm


T = TypeVar("T")

# Densities below this value are clamped; keeps Delta ratios and log ratios defined.
DENSITY_FLOOR = 1e-300


def configure_logging(
    log_level: str,
    rotation: str,
    retention: str,
    directory: str = "logs",
    to_file: bool = True,
) -> None:
    """
    Install the loguru sinks used by every experiment run.

    The stderr sink is colourised and short, tagged with the worker thread so
    interleaved run_jobs output stays attributable. The optional file sink
    writes prticle_<date>.log under `directory`, one line per record with
    source line numbers; it is enqueued because jobs log from pool threads.

    Args:
        log_level: Minimum level for both sinks
        rotation: loguru rotation rule for the file sink (e.g. "100 MB")
        retention: loguru retention rule for old files (e.g. "30 days")
        directory: Directory for log files
        to_file: Skip the file sink when False (tests, dry runs)
    """
    logger.remove()

    logger.add(
        sys.stderr,
        level=log_level,
        format=(
            "<green>{time:HH:mm:ss.SSS}</green> <level>{level: <7}</level> "
            "<magenta>[{thread.name}]</magenta> <cyan>{module}</cyan>: <level>{message}</level>"
        ),
        colorize=True,
    )

    if to_file:
        logger.add(
            str(Path(directory) / "prticle_{time:YYYY-MM-DD}.log"),
            rotation=rotation,
            retention=retention,
            level=log_level,
            format="{time:YYYY-MM-DDTHH:mm:ss.SSSZZ} {level} [{thread.name}] {module}.{function}:{line} {message}",
            enqueue=True,
            backtrace=True,
            diagnose=False,
        )

    logger.info(f"Logging configured: level={log_level}, rotation={rotation}, retention={retention}")


def log_execution_time(func: Callable[..., T]) -> Callable[..., T]:
    """
    Decorator to log function execution time.

    Works for both plain and async functions. Failures are logged with
    their duration and re-raised unchanged.

    Args:
        func: Function to wrap

    Returns:
        Wrapped function that logs execution time
    """
    if inspect.iscoroutinefunction(func):

        @wraps(func)
        async def async_wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                result = await func(*args, **kwargs)
            except Exception as e:
                logger.error(f"{func.__name__} failed after {time.perf_counter() - start:.3f}s: {e}")
                raise
            logger.info(f"{func.__name__} completed in {time.perf_counter() - start:.3f}s")
            return result

        return async_wrapper

    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.error(f"{func.__name__} failed after {time.perf_counter() - start:.3f}s: {e}")
            raise
        logger.info(f"{func.__name__} completed in {time.perf_counter() - start:.3f}s")
        return result

    return wrapper


def progress(iterable: Iterable[T], desc: str, total: Optional[int] = None) -> Iterable[T]:
    """Wrap an iterable in a tqdm bar that stays silent outside a terminal."""
    return tqdm(iterable, desc=desc, total=total, leave=False, disable=not sys.stderr.isatty())


async def gather_jobs(
    jobs: dict[Hashable, Callable[[], T]],
    max_workers: int = 4,
) -> dict[Hashable, T]:
    """
    Run independent blocking jobs on a bounded thread pool.

    Each job is a zero-argument callable owning its own random stream and
    state. Results are returned keyed and sorted by job key, so the output
    order does not depend on completion order.

    Args:
        jobs: Mapping from job key to a blocking callable
        max_workers: Thread pool size

    Returns:
        Mapping from job key to result, in sorted key order
    """
    loop = asyncio.get_running_loop()
    keys = sorted(jobs)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [loop.run_in_executor(executor, jobs[key]) for key in keys]
        results = await asyncio.gather(*futures)
    logger.debug(f"Job pool finished: jobs={len(keys)}, max_workers={max_workers}")
    return dict(zip(keys, results))


def run_jobs(jobs: dict[Hashable, Callable[[], T]], max_workers: int = 4) -> dict[Hashable, T]:
    """Synchronous entry point for `gather_jobs`."""
    if max_workers <= 1 or len(jobs) <= 1:
        return {key: jobs[key]() for key in sorted(jobs)}
    return asyncio.run(gather_jobs(jobs, max_workers=max_workers))


def median(values: Iterable[float]) -> float:
    """Median of a finite collection, as a plain float."""
    return float(np.median(np.fromiter(values, dtype=float)))


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays nested in containers into JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value
