"""
Reportable quantities from fitted PR estimates: mixture densities, smoothed
mixing densities, conditional mark densities, and L1 / KL metrics.
"""
import math
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel
from scipy import stats
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from prticle.errors import DataError, LocationOutsideSupportError
from prticle.kernels import KernelModel, conditional_mark_components
from prticle.models import Dataset
from prticle.prticle_filter import ParticleSet, ess
from prticle.quadrature import GridDensity, mixture_density_quadrature_many
from prticle.utils import DENSITY_FLOOR

# Evaluation points processed per block in the dense kernel sums.
CHUNK = 512


class MetricResult(BaseModel):
    """A scalar metric with its Monte Carlo standard error and clamped-point count."""

    name: str
    value: float
    std_error: Optional[float] = None
    flagged_points: int = 0
    n: Optional[int] = None


# ---------------------------------------------------------------------------
# Density estimates
# ---------------------------------------------------------------------------

class DensityEstimate(ABC):
    """Pointwise-evaluable density; `sample` is available where the representation allows it."""

    @abstractmethod
    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        """Density at each row of xs."""

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} cannot be sampled")


class MixtureGridEstimate(DensityEstimate):
    """m_P(x) for a mixing density held on a quadrature grid."""

    def __init__(self, state: GridDensity, kernel: KernelModel):
        self.state = state
        self.kernel = kernel

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        return mixture_density_quadrature_many(xs, self.state, self.kernel)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        mass = self.state.values * self.state.cell_weights
        nodes = rng.choice(self.state.size, size=size, p=mass / mass.sum())
        return self.kernel.simulate(self.state.points[nodes], rng)


class ParticleMixtureEstimate(DensityEstimate):
    """(1/T) sum_t k(x | U_t) Delta_t."""

    def __init__(self, state: ParticleSet, kernel: KernelModel):
        self.state = state
        self.kernel = kernel

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        return self.kernel.mixture(xs, self.state.particles, self.state.deltas / self.state.T)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        d = self.state.deltas
        idx = rng.choice(self.state.T, size=size, p=d / d.sum())
        return self.kernel.simulate(self.state.particles[idx], rng)


class MixingGridEstimate(DensityEstimate):
    """Mixing density on a 1-d or 2-d tensor grid, linearly interpolated (zero outside)."""

    def __init__(self, state: GridDensity):
        if len(state.shape) not in (1, 2) or state.points.shape[1] != len(state.shape):
            raise ValueError("interpolation needs a 1-d or 2-d tensor grid")
        self.state = state
        axes = []
        for j, n in enumerate(state.shape):
            stride = int(np.prod(state.shape[j + 1:]))
            axes.append(state.points[: n * stride : stride, j])
        self._interp = RegularGridInterpolator(
            tuple(axes), state.values.reshape(state.shape), bounds_error=False, fill_value=0.0
        )

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, len(self.state.shape))
        return np.maximum(self._interp(xs), 0.0)


class WeightedKDEEstimate(DensityEstimate):
    """Gaussian product-kernel KDE of a weighted particle cloud."""

    def __init__(self, state: ParticleSet, bandwidth: Optional[Sequence[float]] = None):
        self.state = state
        self.bandwidth = silverman_bandwidth(state) if bandwidth is None else np.atleast_1d(bandwidth)

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        return weighted_kde(self.state, self.bandwidth, xs)


class FunctionEstimate(DensityEstimate):
    """Wrap a vectorised density function, optionally with a sampler."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], sampler: Optional[Callable] = None):
        self.fn = fn
        self.sampler = sampler

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(xs, dtype=float)), dtype=float)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.sampler is None:
            return super().sample(size, rng)
        return self.sampler(size, rng)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def mixture_density_particle(x: np.ndarray, state: ParticleSet, kernel: KernelModel) -> float:
    """Particle analogue of m_P(x): (1/T) sum_t k(x | U_t) Delta_t."""
    return float(np.mean(kernel.evaluate(x, state.particles) * state.deltas))


def silverman_bandwidth(state: ParticleSet) -> np.ndarray:
    """Per-coordinate 1.06 * weighted sd * ESS^(-1/5)."""
    sd = np.sqrt(np.maximum(np.diag(state.weighted_covariance()), 0.0))
    h = 1.06 * sd * ess(state) ** -0.2
    return np.where(h > 0, h, 1e-3)


def weighted_kde(state: ParticleSet, bandwidth: Sequence[float], eval_points: np.ndarray) -> np.ndarray:
    """
    p(u) = (1/T) sum_t Delta_t prod_j phi((u_j - U_tj) / h_j) / h_j.

    Raises:
        ValueError: On a non-positive bandwidth or dimension mismatch
    """
    h = np.atleast_1d(np.asarray(bandwidth, dtype=float))
    if h.size == 1 and state.dim > 1:
        h = np.full(state.dim, h[0])
    if h.shape != (state.dim,):
        raise ValueError(f"need one bandwidth per coordinate ({state.dim})")
    if np.any(h <= 0):
        raise ValueError("bandwidths must be positive")
    pts = np.asarray(eval_points, dtype=float).reshape(-1, state.dim)
    scaled_particles = state.particles / h
    norm = 1.0 / (np.prod(h) * (2.0 * math.pi) ** (state.dim / 2.0) * state.T)
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], CHUNK):
        block = pts[start:start + CHUNK] / h
        sq = np.sum((block[:, None, :] - scaled_particles[None, :, :]) ** 2, axis=2)
        out[start:start + CHUNK] = norm * (np.exp(-0.5 * sq) @ state.deltas)
    return out


def l1_distance(a: DensityEstimate, b: DensityEstimate, grid: GridDensity) -> float:
    """Quadrature integral of |a - b| over the grid nodes."""
    diff = np.abs(a.evaluate(grid.points) - b.evaluate(grid.points))
    return float(np.sum(diff * grid.cell_weights))


def _log_ratio(ref: np.ndarray, approx: np.ndarray) -> tuple[np.ndarray, int]:
    flagged = int(np.sum((ref < DENSITY_FLOOR) | (approx < DENSITY_FLOOR) | ~np.isfinite(ref) | ~np.isfinite(approx)))
    ratio = np.log(np.maximum(ref, DENSITY_FLOOR)) - np.log(np.maximum(approx, DENSITY_FLOOR))
    return ratio, flagged


def kl_divergence_mc(
    reference: DensityEstimate,
    approx: DensityEstimate,
    sample_source: Union[Dataset, DensityEstimate, np.ndarray],
    n_mc: int,
    rng: Optional[np.random.Generator] = None,
    name: str = "kl_mc",
) -> MetricResult:
    """
    Monte Carlo K(reference, approx) = E_ref[log reference(Z) - log approx(Z)].

    Args:
        sample_source: A Dataset or array of draws from the reference, or
            anything with `sample(size, rng)`
        n_mc: Number of draws (ignored for a Dataset/array, whose size is used)

    Returns:
        MetricResult with std_error and the count of clamped points
    """
    if isinstance(sample_source, Dataset):
        z = sample_source.values
    elif isinstance(sample_source, np.ndarray):
        z = sample_source
    else:
        if rng is None:
            raise ValueError("an rng is required to sample the reference")
        z = sample_source.sample(n_mc, rng)
    if z.shape[0] < 2:
        raise ValueError("need at least two Monte Carlo points")
    ratio, flagged = _log_ratio(reference.evaluate(z), approx.evaluate(z))
    if flagged:
        logger.warning(f"{name}: {flagged} Monte Carlo points hit the density floor")
    return MetricResult(
        name=name,
        value=float(np.mean(ratio)),
        std_error=float(np.std(ratio, ddof=1) / math.sqrt(ratio.size)),
        flagged_points=flagged,
        n=int(ratio.size),
    )


def kl_divergence_quadrature(
    reference: DensityEstimate,
    approx: DensityEstimate,
    x_grid: GridDensity,
    name: str = "kl_quadrature",
) -> MetricResult:
    """sum_g r(x_g) log(r(x_g) / a(x_g)) c_g over a one-dimensional x grid."""
    r = reference.evaluate(x_grid.points)
    a = approx.evaluate(x_grid.points)
    ratio, flagged = _log_ratio(r, a)
    value = float(np.sum(np.where(r > 0, r * ratio, 0.0) * x_grid.cell_weights))
    return MetricResult(name=name, value=value, flagged_points=flagged, n=x_grid.size)


def conditional_mark_density(
    s: tuple[float, float],
    mark_grid: np.ndarray,
    state: ParticleSet,
    kernel: KernelModel,
) -> np.ndarray:
    """
    g(x | s) over mark_grid from the fitted marked-pp particle mixture.

    Each particle contributes Delta_t times its location density at s times
    its conditional mark density; the curve is normalised on the grid by
    the trapezoid rule.

    Raises:
        LocationOutsideSupportError: If every component's location density underflows at s
    """
    mark_grid = np.asarray(mark_grid, dtype=float)
    if np.any(mark_grid <= kernel.mark_offset) or np.any(np.diff(mark_grid) <= 0):
        raise ValueError("mark grid must be increasing and above the mark offset")
    cond_mean, cond_var, marginal = conditional_mark_components(s, state.particles, kernel)
    weights = state.deltas * marginal
    total = float(np.sum(weights))
    if not total >= DENSITY_FLOOR:
        raise LocationOutsideSupportError(f"no mixture component has location mass at s={tuple(s)}")
    z = np.log(mark_grid - kernel.mark_offset)
    sd = np.sqrt(cond_var)
    dens = stats.norm.pdf(z[None, :], loc=cond_mean[:, None], scale=sd[:, None])
    curve = (weights @ dens) / total / (mark_grid - kernel.mark_offset)
    return curve / trapezoid(curve, mark_grid)


def nrd0_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5) with fallbacks for degenerate samples."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    iqr = float(np.subtract(*np.percentile(values, [75, 25])))
    lo = min(sd, iqr / 1.34)
    if lo <= 0:
        lo = sd or abs(float(values[0])) or 1.0
    return 0.9 * lo * values.size ** -0.2


def empirical_mark_density(
    data: Dataset,
    s: tuple[float, float],
    radius: float,
    mark_grid: np.ndarray,
    bandwidth: Optional[float] = None,
) -> np.ndarray:
    """
    Gaussian KDE of the marks of observations within `radius` of s,
    normalised on mark_grid.

    Raises:
        DataError: If no observation lies within the radius
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    values = data.values
    dist = np.linalg.norm(values[:, :2] - np.asarray(s, dtype=float), axis=1)
    marks = values[dist <= radius, 2]
    if marks.size == 0:
        raise DataError(f"no observations within radius {radius} of s={tuple(s)}")
    h = nrd0_bandwidth(marks) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    mark_grid = np.asarray(mark_grid, dtype=float)
    curve = stats.norm.pdf(mark_grid[:, None], loc=marks[None, :], scale=h).mean(axis=1)
    return curve / trapezoid(curve, mark_grid)


def weighted_quantiles(values: np.ndarray, weights: np.ndarray, probs: Sequence[float]) -> np.ndarray:
    """Inverted weighted CDF at each prob."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.size == 0:
        raise ValueError("values and weights must be non-empty and of equal length")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive total")
    order = np.argsort(values, kind="stable")
    cdf = np.cumsum(weights[order]) / weights.sum()
    idx = np.searchsorted(cdf, np.asarray(probs, dtype=float), side="left")
    return values[order][np.minimum(idx, values.size - 1)]


def total_variation(values: np.ndarray) -> float:
    """sum_k |g_{k+1} - g_k|."""
    return float(np.sum(np.abs(np.diff(np.asarray(values, dtype=float)))))
