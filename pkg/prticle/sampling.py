"""
Seeded random generation: independent RNG streams, elementary distributions,
p0 / true-mixing samplers, and two-stage mixture data simulation.
"""
import math
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from prticle.errors import SamplerExhaustedError
from prticle.kernels import KernelModel, simulate_angular_gaussian
from prticle.models import Dataset

# Stream ids: one per consumer so draws never interfere across purposes.
DATA_STREAM = 1
PARTICLE_STREAM = 2
PERMUTATION_STREAM = 3
REFRESH_STREAM = 4
METRIC_STREAM = 5
TRUTH_STREAM = 6

# Rejection sampling gives up after this many candidates per requested draw.
REJECTION_BUDGET = 100


class RngStream(BaseModel):
    """
    Reproducible random stream identified by (seed, stream_id, path).

    Generators are numpy Philox (counter-based, platform stable) keyed by a
    SeedSequence whose spawn key is (stream_id, *path). Identical keys give
    identical draw sequences; distinct keys give independent sequences.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0, lt=2 ** 64)
    stream_id: int = Field(..., ge=0)
    path: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, index: int) -> "RngStream":
        """Child stream, e.g. one per seed-ladder cell or permutation."""
        return RngStream(seed=self.seed, stream_id=self.stream_id, path=(*self.path, int(index)))


def stream(seed: int, stream_id: int, *path: int) -> np.random.Generator:
    """Shortcut for RngStream(seed, stream_id, path).generator()."""
    return RngStream(seed=seed, stream_id=stream_id, path=tuple(path)).generator()


# ---------------------------------------------------------------------------
# Elementary distributions
# ---------------------------------------------------------------------------

def sample_uniform_box(
    bounds: Sequence[tuple[float, float]],
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """Uniform draw(s) from a box given as per-coordinate (lo, hi)."""
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo, hi = b[:, 0], b[:, 1]
    if np.any(lo >= hi):
        raise ValueError("box bounds need lo < hi in every coordinate")
    shape = (b.shape[0],) if size is None else (size, b.shape[0])
    return lo + (hi - lo) * rng.random(shape)


def sample_uniform_sphere(rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform point(s) on S^2 via normalised standard normal 3-vectors."""
    z = rng.standard_normal((1 if size is None else size, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z[0] if size is None else z


def sample_scaled_beta(
    a: float, b: float, lo: float, hi: float, rng: np.random.Generator, size: Optional[int] = None
):
    """lo + (hi - lo) * Beta(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("beta shape parameters must be positive")
    if lo >= hi:
        raise ValueError("scaled beta needs lo < hi")
    return lo + (hi - lo) * rng.beta(a, b, size=size)


def sample_gamma(shape: float, rate: float, rng: np.random.Generator, size: Optional[int] = None):
    """Gamma(shape, rate); numpy's generator uses the Marsaglia-Tsang method."""
    if shape <= 0 or rate <= 0:
        raise ValueError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


def _cholesky(cov: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"covariance/scale matrix must be positive definite: {e}") from e


def sample_mvnormal(mean, cov, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Multivariate normal draw(s) via the Cholesky factor."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    chol = _cholesky(cov)
    z = rng.standard_normal((1 if size is None else size, mean.size))
    out = mean + z @ chol.T
    return out[0] if size is None else out


def sample_mvt(location, scale, df: float, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """
    Multivariate Student-t draw(s): location + N(0, scale) / sqrt(chi2_df / df).

    The covariance of the result is scale * df / (df - 2) for df > 2.
    """
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    location = np.atleast_1d(np.asarray(location, dtype=float))
    chol = _cholesky(scale)
    m = 1 if size is None else size
    z = rng.standard_normal((m, location.size)) @ chol.T
    g = rng.chisquare(df, size=m) / df
    out = location + z / np.sqrt(g)[:, None]
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# Samplers over mixing points
# ---------------------------------------------------------------------------

class MixingSampler(ABC):
    """A distribution over mixing points that can be sampled and, optionally, evaluated."""

    dim: int

    @abstractmethod
    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """(size, dim) draws."""

    def density(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no density evaluator")

    def describe(self) -> dict:
        """JSON-ready description recorded in run manifests."""
        return {"sampler": type(self).__name__, "dim": self.dim}


class UniformBoxSampler(MixingSampler):
    """Uniform on a box; `open_lower` marks coordinates whose lower bound is excluded."""

    def __init__(self, bounds: Sequence[tuple[float, float]], open_lower: Sequence[int] = ()):
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ValueError("box bounds need lo < hi in every coordinate")
        self.open_lower = tuple(open_lower)
        self.dim = self.bounds.shape[0]
        self.volume = float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        u = rng.random((size, self.dim))
        # flip to (lo, hi] on coordinates with an excluded lower bound
        for j in self.open_lower:
            u[:, j] = 1.0 - u[:, j]
        return lo + (hi - lo) * u

    def density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.all((points >= self.bounds[:, 0]) & (points <= self.bounds[:, 1]), axis=1)
        return np.where(inside, 1.0 / self.volume, 0.0)

    def describe(self) -> dict:
        return {**super().describe(), "bounds": self.bounds.tolist(), "open_lower": list(self.open_lower)}


class UniformSphereSampler(MixingSampler):
    """Uniform on S^2, optionally times a uniform concentration on (beta_lo, beta_hi]."""

    def __init__(self, beta_bounds: Optional[tuple[float, float]] = None):
        self.beta_bounds = beta_bounds
        if beta_bounds is not None and not 0.0 <= beta_bounds[0] < beta_bounds[1]:
            raise ValueError("beta bounds need 0 <= lo < hi")
        self.dim = 3 if beta_bounds is None else 4

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        mu = sample_uniform_sphere(rng, size=size)
        if self.beta_bounds is None:
            return mu
        lo, hi = self.beta_bounds
        beta = hi - (hi - lo) * rng.random(size)
        return np.column_stack([mu, beta])

    def density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        value = 1.0 / (4.0 * math.pi)
        if self.beta_bounds is None:
            return np.full(points.shape[0], value)
        lo, hi = self.beta_bounds
        inside = (points[:, 3] > lo) & (points[:, 3] <= hi)
        return np.where(inside, value / (hi - lo), 0.0)

    def describe(self) -> dict:
        return {**super().describe(), "beta_bounds": self.beta_bounds}


class ProductSampler(MixingSampler):
    """Independent coordinates, each a frozen scipy.stats distribution."""

    def __init__(self, marginals: Sequence, names: Optional[Sequence[str]] = None):
        self.marginals = list(marginals)
        self.names = list(names) if names is not None else [f"u{j + 1}" for j in range(len(self.marginals))]
        self.dim = len(self.marginals)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.column_stack([m.rvs(size=size, random_state=rng) for m in self.marginals])

    def density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.ones(points.shape[0])
        for j, m in enumerate(self.marginals):
            out *= m.pdf(points[:, j])
        return out

    def quantiles(self, probs: Sequence[float]) -> dict[str, list[float]]:
        """Per-coordinate true quantiles."""
        return {name: [float(v) for v in m.ppf(probs)] for name, m in zip(self.names, self.marginals)}

    def describe(self) -> dict:
        specs = [f"{m.dist.name}{tuple(round(float(a), 6) for a in m.args)}{dict(m.kwds)}" for m in self.marginals]
        return {**super().describe(), "marginals": dict(zip(self.names, specs))}


class PointMassSampler(MixingSampler):
    """Degenerate distribution at a single mixing point."""

    def __init__(self, point: Sequence[float]):
        self.point = np.atleast_1d(np.asarray(point, dtype=float))
        self.dim = self.point.size

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(self.point, (size, 1))

    def describe(self) -> dict:
        return {**super().describe(), "point": self.point.tolist()}


class SphereLocationMixtureSampler(MixingSampler):
    """
    Mixing distribution on (mu, beta) with mu drawn from a mixture of angular
    Gaussians on the sphere and beta fixed (a point mass).
    """

    def __init__(
        self,
        centers: Sequence[Sequence[float]],
        spread: float,
        point_beta: float,
        weights: Optional[Sequence[float]] = None,
    ):
        self.centers = np.asarray(centers, dtype=float)
        if np.max(np.abs(np.linalg.norm(self.centers, axis=1) - 1.0)) > 1e-12:
            raise ValueError("mixture centers must be unit vectors")
        k = self.centers.shape[0]
        self.weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
        self.spread = spread
        self.point_beta = point_beta
        self.dim = 4

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        component = rng.choice(self.centers.shape[0], size=size, p=self.weights)
        mu = simulate_angular_gaussian(self.centers[component], np.full(size, self.spread), rng)
        return np.column_stack([mu, np.full(size, self.point_beta)])

    def describe(self) -> dict:
        return {
            **super().describe(),
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "spread": self.spread,
            "point_beta": self.point_beta,
        }


class RejectionSampler(MixingSampler):
    """
    Restrict a base sampler to a valid region by rejection.

    Raises SamplerExhaustedError when more than budget * size candidates are
    needed.
    """

    def __init__(
        self,
        base: MixingSampler,
        valid: Callable[[np.ndarray], np.ndarray],
        budget: int = REJECTION_BUDGET,
    ):
        self.base = base
        self.valid = valid
        self.budget = budget
        self.dim = base.dim
        self.last_acceptance: Optional[float] = None

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        accepted: list[np.ndarray] = []
        have = 0
        drawn = 0
        limit = self.budget * max(size, 1)
        while have < size:
            if drawn >= limit:
                logger.error(f"Rejection sampler exhausted: accepted {have}/{size} after {drawn} candidates")
                raise SamplerExhaustedError(
                    f"rejection sampling accepted only {have} of {size} draws within {limit} candidates",
                    diagnostics={"accepted": have, "requested": size, "candidates": drawn},
                )
            batch = min(max(2 * (size - have), 64), limit - drawn)
            cand = self.base.sample(batch, rng)
            drawn += batch
            keep = cand[self.valid(cand)]
            accepted.append(keep)
            have += keep.shape[0]
        self.last_acceptance = have / drawn if drawn else None
        return np.concatenate(accepted, axis=0)[:size]

    def density(self, points: np.ndarray) -> np.ndarray:
        # unnormalised: the base density restricted to the valid region
        points = np.atleast_2d(points)
        return np.where(self.valid(points), self.base.density(points), 0.0)

    def describe(self) -> dict:
        return {**self.base.describe(), "rejection_budget": self.budget}


def sample_mixture_data(
    true_mixing: MixingSampler,
    kernel: KernelModel,
    n: int,
    rng: np.random.Generator,
    return_latents: bool = False,
):
    """
    Simulate n observations by the two-stage hierarchy U_i ~ P, X_i | U_i ~ k(. | U_i).

    Returns:
        Dataset, or (Dataset, latents) when return_latents is set
    """
    latents = true_mixing.sample(n, rng) if n else np.empty((0, kernel.mixing_dim))
    values = kernel.simulate(latents, rng) if n else np.empty((0, kernel.data_dim))
    data = Dataset(kind=kernel.observation_kind, values=values, source={"simulated": True, "n": n})
    logger.debug(f"Simulated {n} observations from {kernel.family.value} mixture")
    return (data, latents) if return_latents else data
