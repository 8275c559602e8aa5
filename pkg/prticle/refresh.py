"""
Attrition handling: weighted moment summaries of a fitted particle cloud and
a Student-t re-initialisation of p0, run as a two-pass fit.
"""
from typing import Any, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from prticle.errors import DegeneracyError, RefreshError
from prticle.kernels import KernelModel
from prticle.models import Dataset, WeightSchedule
from prticle.prticle_filter import ParticleSet, ess, init_particles, run_prticle
from prticle.sampling import (
    PARTICLE_STREAM,
    REFRESH_STREAM,
    REJECTION_BUDGET,
    MixingSampler,
    RejectionSampler,
    RngStream,
    sample_mvt,
)

DEFAULT_DF = 5.0
DEFAULT_INFLATE = 1.5
MIN_MOMENT_ESS = 3.0


class MomentSummary(BaseModel):
    """Weighted mean and covariance of a particle cloud, with the ESS they came from."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    covariance: np.ndarray
    source_ess: float

    @field_validator("mean", "covariance", mode="before")
    @classmethod
    def validate_arrays(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def validate_psd(self):
        """Symmetric and PSD up to roundoff."""
        d = self.mean.shape[0]
        cov = self.covariance
        if self.mean.ndim != 1 or cov.shape != (d, d):
            raise ValueError("covariance must be d x d for a d-vector mean")
        if np.all(np.isfinite(cov)):
            if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
                raise ValueError("covariance must be symmetric")
            if np.min(np.linalg.eigvalsh(cov)) < -1e-10:
                raise ValueError("covariance must be positive semi-definite")
        return self


def weighted_moments(
    state: ParticleSet,
    kernel: Optional[KernelModel] = None,
    min_ess: Optional[float] = MIN_MOMENT_ESS,
) -> MomentSummary:
    """
    mu = (1/T) sum U_t Delta_t and Sigma = (1/T) sum (U_t - mu)(U_t - mu)^T Delta_t.

    With a kernel, particles are first mapped to its unconstrained
    coordinates (log-variances, log-concentration).

    Raises:
        RefreshError: If ESS < min_ess
    """
    state_ess = ess(state)
    if min_ess is not None and state_ess < min_ess:
        raise RefreshError(
            f"effective sample size {state_ess:.3f} below {min_ess}; weighted moments are meaningless",
            diagnostics={"ess": state_ess},
        )
    u = state.particles if kernel is None else kernel.to_unconstrained(state.particles)
    t = state.T
    mean = u.T @ state.deltas / t
    centered = u - mean
    cov = (centered * state.deltas[:, None]).T @ centered / t
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(mean=mean, covariance=cov, source_ess=state_ess)


class StudentTSampler(MixingSampler):
    """
    Multivariate Student-t proposal in a kernel's unconstrained coordinates.

    Draws are mapped back with kernel.from_unconstrained; `density` is the
    Student-t density of the unconstrained coordinates.
    """

    def __init__(self, location: np.ndarray, scale: np.ndarray, df: float, kernel: Optional[KernelModel] = None):
        self.location = np.asarray(location, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.df = float(df)
        self.kernel = kernel
        self.dim = self.location.size
        self._dist = stats.multivariate_t(loc=self.location, shape=self.scale, df=self.df)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        z = sample_mvt(self.location, self.scale, self.df, rng, size=size)
        return z if self.kernel is None else self.kernel.from_unconstrained(z)

    def density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        z = points if self.kernel is None else self.kernel.to_unconstrained(points)
        return np.atleast_1d(self._dist.pdf(z)).astype(float)

    def describe(self) -> dict:
        return {
            **super().describe(),
            "location": self.location.tolist(),
            "scale": self.scale.tolist(),
            "df": self.df,
        }


def _regularize(scale: np.ndarray) -> np.ndarray:
    d = scale.shape[0]
    trace = float(np.trace(scale))
    eps = 1e-8 * trace / d if trace > 0 else 1e-8
    for _ in range(8):
        try:
            np.linalg.cholesky(scale)
            return scale
        except np.linalg.LinAlgError:
            scale = scale + eps * np.eye(d)
            eps *= 10.0
    raise RefreshError("refresh scale matrix could not be made positive definite")


def refresh_sampler(
    moments: MomentSummary,
    df: float = DEFAULT_DF,
    inflate: float = DEFAULT_INFLATE,
    kernel: Optional[KernelModel] = None,
    budget: int = REJECTION_BUDGET,
) -> MixingSampler:
    """
    Student-t p0 with location mu and covariance inflate * Sigma.

    The scale matrix is inflate * Sigma * (df - 2) / df. With a kernel, draws
    are rejection-filtered to its valid parameter region.

    Raises:
        ValueError: If df <= 2 or inflate < 1
        RefreshError: If the moments are not finite
    """
    if df <= 2:
        raise ValueError("refresh degrees of freedom must exceed 2")
    if inflate < 1:
        raise ValueError("refresh inflation must be >= 1")
    if not (np.all(np.isfinite(moments.mean)) and np.all(np.isfinite(moments.covariance))):
        raise RefreshError("weighted moments are not finite")

    scale = _regularize(inflate * moments.covariance * (df - 2.0) / df)
    proposal = StudentTSampler(moments.mean, scale, df, kernel=kernel)
    if kernel is None:
        return proposal
    return RejectionSampler(proposal, kernel.valid_mask, budget=budget)


class RefreshDiagnostics(BaseModel):
    """Per-pass ESS and the moments that defined the refreshed p0."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    T: int
    df: float
    inflate: float
    seed: int
    rounds: int
    ess_pass1: float
    ess_pass2: Optional[float] = None
    ess_history: list[float] = Field(default_factory=list)
    mean: Optional[list[float]] = None
    covariance: Optional[list[float]] = Field(default=None, description="Row-major")
    acceptance_rate: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump()


def run_with_refresh(
    data: Dataset,
    initial_sampler: MixingSampler,
    T: int,
    schedule: WeightSchedule,
    kernel: KernelModel,
    df: float = DEFAULT_DF,
    inflate: float = DEFAULT_INFLATE,
    seed: int = 0,
    rounds: int = 1,
    refresh_T: Optional[int] = None,
    min_ess: Optional[float] = MIN_MOMENT_ESS,
    stream_path: tuple[int, ...] = (),
) -> tuple[ParticleSet, RefreshDiagnostics]:
    """
    Two-pass PRticle fit.

    Pass 1 runs from initial_sampler. Each refresh round then matches a
    Student-t to the previous pass's weighted moments and reruns the filter
    over the same data with fresh particles.

    Args:
        rounds: Number of refresh rounds (0 runs pass 1 only)
        refresh_T: Particle count for refreshed passes (defaults to T)
        stream_path: Extra substream key, e.g. the seed cell index

    Returns:
        (final ParticleSet, RefreshDiagnostics)

    Raises:
        DegeneracyError: If pass 1 degenerates (diagnostics attached)
        RefreshError: If a refreshed pass degenerates
    """
    particle_stream = RngStream(seed=seed, stream_id=PARTICLE_STREAM, path=stream_path)
    names = kernel.coordinate_names
    state = init_particles(initial_sampler, T, seed, stream=particle_stream, coordinate_names=names)
    try:
        state, _ = run_prticle(data, state, schedule, kernel, min_ess=min_ess)
    except DegeneracyError as e:
        raise DegeneracyError(
            e.message, step=e.step, diagnostics={**e.diagnostics, "pass": 1, "T": T, "seed": seed}
        ) from e

    history = [ess(state)]
    diagnostics = RefreshDiagnostics(
        T=T, df=df, inflate=inflate, seed=seed, rounds=rounds, ess_pass1=history[0], ess_history=history
    )
    logger.info(f"Refresh pass 1 done: T={T}, ESS={history[0]:.1f}")

    for r in range(1, rounds + 1):
        moments = weighted_moments(state, kernel=kernel, min_ess=min_ess)
        sampler = refresh_sampler(moments, df=df, inflate=inflate, kernel=kernel)
        refresh_stream = RngStream(seed=seed, stream_id=REFRESH_STREAM, path=(*stream_path, r))
        fresh = init_particles(sampler, refresh_T or T, seed, stream=refresh_stream, coordinate_names=names)
        try:
            state, _ = run_prticle(data, fresh, schedule, kernel, min_ess=min_ess)
        except DegeneracyError as e:
            raise RefreshError(
                f"refreshed pass {r + 1} failed: {e.message}",
                step=e.step,
                diagnostics={**diagnostics.to_dict(), "pass": r + 1},
            ) from e
        history.append(ess(state))
        diagnostics = diagnostics.model_copy(
            update={
                "ess_pass2": history[-1],
                "ess_history": list(history),
                "mean": moments.mean.tolist(),
                "covariance": moments.covariance.ravel().tolist(),
                "acceptance_rate": getattr(sampler, "last_acceptance", None),
            }
        )
        logger.info(f"Refresh pass {r + 1} done: T={fresh.T}, ESS={history[-1]:.1f}")

    return state, diagnostics
