"""
PRticle filter: a fixed particle cloud drawn from p0 whose Delta weights are
updated multiplicatively with every observation.
"""
import json
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from prticle.errors import DegeneracyError
from prticle.kernels import KernelModel
from prticle.models import Dataset, WeightSchedule, permute_dataset
from prticle.output import read_table, write_json, write_table
from prticle.sampling import PARTICLE_STREAM, MixingSampler, RngStream
from prticle.utils import DENSITY_FLOOR, progress, run_jobs

SELF_NORMALIZATION_TOLERANCE = 1e-9
# Clouds whose ESS drops below this are degenerate; only enforced when T exceeds it.
DEGENERACY_ESS = 3.0


class ParticleSet(BaseModel):
    """
    Particles U_1..U_T with their Delta weights.

    Delta has mean one after every update, so the weighted cloud is the PR
    estimate p_i relative to p0. `p0_density` and `density_at_particles` are
    only carried when density tracking is requested.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    particles: np.ndarray
    deltas: np.ndarray
    step_count: int = Field(default=0, ge=0)
    p0_density: Optional[np.ndarray] = None
    density_at_particles: Optional[np.ndarray] = None
    coordinate_names: list[str] = Field(default_factory=list)

    @field_validator("particles", "deltas", "p0_density", "density_at_particles", mode="before")
    @classmethod
    def validate_arrays(cls, v):
        if v is None:
            return None
        arr = np.array(v, dtype=float, copy=True)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def validate_cloud(self):
        """At least one particle, one positive Delta per particle."""
        if self.particles.ndim != 2 or self.particles.shape[0] < 1:
            raise ValueError("particles must be a non-empty (T, dim) array")
        t = self.particles.shape[0]
        if self.deltas.shape != (t,):
            raise ValueError("one Delta weight per particle is required")
        if not np.all(self.deltas > 0):
            raise ValueError("Delta weights must be strictly positive")
        for name in ("p0_density", "density_at_particles"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (t,):
                raise ValueError(f"{name} must have one value per particle")
        return self

    @property
    def T(self) -> int:
        return int(self.particles.shape[0])

    @property
    def dim(self) -> int:
        return int(self.particles.shape[1])

    @property
    def names(self) -> list[str]:
        return self.coordinate_names or [f"u{j + 1}" for j in range(self.dim)]

    def reset(self) -> "ParticleSet":
        """Same particles with Delta = 1 and no absorbed updates."""
        return ParticleSet(
            particles=self.particles,
            deltas=np.ones(self.T),
            p0_density=self.p0_density,
            density_at_particles=self.p0_density,
            coordinate_names=self.coordinate_names,
        )

    def weighted_mean(self) -> np.ndarray:
        return self.particles.T @ self.deltas / self.T

    def weighted_covariance(self) -> np.ndarray:
        centered = self.particles - self.weighted_mean()
        return (centered * self.deltas[:, None]).T @ centered / self.T

    def summary(self) -> dict:
        """JSON summary: T, step count, ESS and weighted moments."""
        return {
            "T": self.T,
            "step_count": self.step_count,
            "ess": ess(self),
            "coordinates": self.names,
            "weighted_mean": self.weighted_mean(),
            "weighted_covariance": self.weighted_covariance(),
        }

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.particles, columns=self.names)
        frame["delta"] = self.deltas
        if self.p0_density is not None:
            frame["p0_density"] = self.p0_density
            frame["density"] = self.density_at_particles
        return frame

    def to_csv(self, path: str | Path) -> Path:
        return write_table(self.to_frame(), path)

    def save(self, directory: str | Path, stem: str = "particles") -> Path:
        """Write `<stem>.csv` plus `<stem>.json`; the JSON records step_count for resuming."""
        directory = Path(directory)
        self.to_csv(directory / f"{stem}.csv")
        return write_json(self.summary(), directory / f"{stem}.json")

    @classmethod
    def from_csv(cls, path: str | Path, step_count: int = 0) -> "ParticleSet":
        frame = read_table(path, required=["delta"])
        extra = {"delta", "p0_density", "density"}
        names = [c for c in frame.columns if c not in extra]
        has_density = "p0_density" in frame.columns
        return cls(
            particles=frame[names].to_numpy(),
            deltas=frame["delta"].to_numpy(),
            step_count=step_count,
            p0_density=frame["p0_density"].to_numpy() if has_density else None,
            density_at_particles=frame["density"].to_numpy() if has_density else None,
            coordinate_names=names,
        )

    @classmethod
    def load(cls, directory: str | Path, stem: str = "particles") -> "ParticleSet":
        with open(Path(directory) / f"{stem}.json", "r", encoding="utf-8") as f:
            meta = json.load(f)
        return cls.from_csv(Path(directory) / f"{stem}.csv", step_count=int(meta["step_count"]))


def init_particles(
    sampler: MixingSampler,
    T: int,
    seed: int,
    track_density: bool = False,
    stream: Optional[RngStream] = None,
    coordinate_names: Optional[list[str]] = None,
) -> ParticleSet:
    """
    Draw T iid particles from p0 with all Delta = 1.

    Args:
        sampler: p0 sampler
        T: Particle count
        seed: Seed of the particle stream (ignored when `stream` is given)
        track_density: Also store p0 and p_i evaluated at the particles

    Raises:
        ValueError: If T < 1
        SamplerExhaustedError: If a rejection sampler runs out of budget
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = (stream or RngStream(seed=seed, stream_id=PARTICLE_STREAM)).generator()
    particles = sampler.sample(T, rng)
    p0_density = sampler.density(particles) if track_density else None
    return ParticleSet(
        particles=particles,
        deltas=np.ones(T),
        p0_density=p0_density,
        density_at_particles=p0_density,
        coordinate_names=coordinate_names or [],
    )


def _delta_update(deltas: np.ndarray, k: np.ndarray, w: float, step: Optional[int]) -> tuple[np.ndarray, float, np.ndarray]:
    d = float(np.mean(k * deltas))
    if not d >= DENSITY_FLOOR:
        logger.error(f"PRticle normalizing constant underflow at step {step}: D={d}")
        raise DegeneracyError("Monte Carlo normalizing constant below 1e-300; refresh the particles", step=step)
    factor = 1.0 + w * (k / d - 1.0)
    return np.maximum(deltas * factor, DENSITY_FLOOR), d, factor


def _check_self_normalization(deltas: np.ndarray, step: Optional[int]) -> None:
    mean = float(np.mean(deltas))
    if abs(mean - 1.0) > SELF_NORMALIZATION_TOLERANCE:
        raise DegeneracyError(f"Delta weights lost self-normalization: mean={mean!r}", step=step)


def _check_ess(deltas: np.ndarray, min_ess: Optional[float], step: Optional[int]) -> None:
    t = deltas.shape[0]
    if min_ess is None or t <= min_ess:
        return
    value = float(np.sum(deltas) ** 2 / np.sum(deltas * deltas))
    if value < min_ess:
        logger.error(f"Particle cloud collapsed at step {step}: ESS={value:.3f} < {min_ess}")
        raise DegeneracyError(
            f"effective sample size {value:.3f} below {min_ess}; refresh the particles",
            step=step,
            diagnostics={"ess": value, "T": t},
        )


def prticle_step(
    state: ParticleSet,
    x: np.ndarray,
    w: float,
    kernel: KernelModel,
    check_invariants: bool = True,
    min_ess: Optional[float] = DEGENERACY_ESS,
) -> tuple[ParticleSet, float]:
    """
    Absorb one observation.

    D = (1/T) sum_t k(x | U_t) Delta_t, then
    Delta_t <- Delta_t [1 + w (k(x | U_t) / D - 1)].

    Returns:
        (updated ParticleSet, D)

    Raises:
        DegeneracyError: If D < 1e-300 or the updated ESS falls below min_ess
    """
    if not 0.0 < w < 1.0:
        raise ValueError(f"PR weight must lie in (0, 1), got {w}")
    step = state.step_count + 1
    k = kernel.evaluate(x, state.particles)
    deltas, d, factor = _delta_update(state.deltas, k, w, step)
    if check_invariants:
        _check_self_normalization(deltas, step)
    _check_ess(deltas, min_ess, step)
    density = None if state.density_at_particles is None else state.density_at_particles * factor
    updated = ParticleSet(
        particles=state.particles,
        deltas=deltas,
        step_count=step,
        p0_density=state.p0_density,
        density_at_particles=density,
        coordinate_names=state.coordinate_names,
    )
    return updated, d


def run_prticle(
    data: Dataset,
    state: ParticleSet,
    schedule: WeightSchedule,
    kernel: KernelModel,
    start_index: Optional[int] = None,
    min_ess: Optional[float] = DEGENERACY_ESS,
    check_invariants: bool = True,
) -> tuple[ParticleSet, np.ndarray]:
    """
    Run the filter over the data in order.

    Observation j (0-based) uses the schedule weight w_{start_index + j};
    start_index defaults to state.step_count + 1 so a resumed cloud
    continues its schedule.

    Args:
        min_ess: Raise DegeneracyError at the first step whose ESS falls
            below this value (only when T exceeds it); None disables the check
        check_invariants: Assert mean(Delta) = 1 after every step

    Returns:
        (final ParticleSet, the n Monte Carlo normalizing constants)
    """
    if kernel.mixing_dim != state.dim:
        raise ValueError(f"particles have {state.dim} coordinates but {kernel.family.value} needs {kernel.mixing_dim}")
    if data.n == 0:
        return state, np.empty(0)

    start = state.step_count + 1 if start_index is None else int(start_index)
    weights = schedule.weights(data.n, start=start)
    bound = kernel.bind(state.particles)
    deltas = np.array(state.deltas)
    density = None if state.density_at_particles is None else np.array(state.density_at_particles)
    m_hats = np.empty(data.n)

    for j in progress(range(data.n), desc="prticle", total=data.n):
        step = start + j
        deltas, m_hats[j], factor = _delta_update(deltas, bound(data.values[j]), float(weights[j]), step)
        if check_invariants:
            _check_self_normalization(deltas, step)
        _check_ess(deltas, min_ess, step)
        if density is not None:
            density = density * factor

    final = ParticleSet(
        particles=state.particles,
        deltas=deltas,
        step_count=start + data.n - 1,
        p0_density=state.p0_density,
        density_at_particles=density,
        coordinate_names=state.coordinate_names,
    )
    logger.debug(f"PRticle run finished: n={data.n}, T={final.T}, ESS={ess(final):.1f}")
    return final, m_hats


def ess(state: ParticleSet) -> float:
    """(sum Delta)^2 / sum Delta^2, in [1, T]."""
    d = state.deltas
    return float(np.sum(d) ** 2 / np.sum(d * d))


def permutation_average(
    data: Dataset,
    base_state: ParticleSet,
    schedule: WeightSchedule,
    kernel: KernelModel,
    n_perms: int,
    seed: int,
    max_workers: int = 1,
    min_ess: Optional[float] = DEGENERACY_ESS,
) -> ParticleSet:
    """
    Average Delta over runs on independent orderings of the data.

    Every run starts from base_state's particles with Delta reset to 1.
    Permutation 0 is the given order. Runs are independent and may execute
    on the job pool; each enforces min_ess at every step.

    Raises:
        DegeneracyError: Naming the failing permutation
    """
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    start = base_state.reset()

    def job(r: int):
        def run() -> ParticleSet:
            ordered = data if r == 0 else permute_dataset(data, seed, index=r)
            try:
                fitted, _ = run_prticle(ordered, start, schedule, kernel, min_ess=min_ess)
            except DegeneracyError as e:
                raise DegeneracyError(e.message, step=e.step, permutation=r, diagnostics=e.diagnostics) from e
            return fitted

        return run

    fits = run_jobs({r: job(r) for r in range(n_perms)}, max_workers=max_workers)
    if n_perms == 1:
        return fits[0]
    deltas = np.mean(np.stack([fits[r].deltas for r in range(n_perms)]), axis=0)
    density = None if start.p0_density is None else start.p0_density * deltas
    return ParticleSet(
        particles=start.particles,
        deltas=deltas,
        step_count=data.n,
        p0_density=start.p0_density,
        density_at_particles=density,
        coordinate_names=start.coordinate_names,
    )
