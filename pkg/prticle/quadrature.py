"""
Exact PR on a discretised mixing support (tensor grids up to two dimensions,
or a latitude-longitude grid on the sphere). Used as the oracle for the
particle engine.
"""
import math
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from prticle.errors import DegeneracyError
from prticle.kernels import KernelModel
from prticle.models import Dataset, WeightSchedule, permute_dataset
from prticle.output import read_table, write_table
from prticle.utils import DENSITY_FLOOR

NORMALIZATION_TOLERANCE = 1e-8


class GridDensity(BaseModel):
    """
    Density values on a fixed quadrature grid.

    `points` are mixing points in the kernel's layout (one row per grid
    node), `cell_weights` the quadrature weights, and `shape` the grid's
    tensor shape for reshaping into contour tables.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    cell_weights: np.ndarray
    values: np.ndarray
    shape: tuple[int, ...]
    coordinate_names: list[str] = Field(default_factory=list)

    @field_validator("points", "cell_weights", "values", mode="before")
    @classmethod
    def validate_arrays(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def validate_grid(self):
        """Consistent sizes and nonnegative values."""
        g = self.points.shape[0]
        if self.points.ndim != 2 or self.cell_weights.shape != (g,) or self.values.shape != (g,):
            raise ValueError("points, cell_weights and values must describe the same grid nodes")
        if int(np.prod(self.shape)) != g:
            raise ValueError(f"grid shape {self.shape} does not match {g} nodes")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")
        return self

    @property
    def names(self) -> list[str]:
        return self.coordinate_names or [f"u{j + 1}" for j in range(self.points.shape[1])]

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def integral(self) -> float:
        return float(np.sum(self.values * self.cell_weights))

    def with_values(self, values: np.ndarray) -> "GridDensity":
        return GridDensity(
            points=self.points,
            cell_weights=self.cell_weights,
            values=values,
            shape=self.shape,
            coordinate_names=self.coordinate_names,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.points, columns=self.names)
        frame["cell_weight"] = self.cell_weights
        frame["density"] = self.values
        return frame

    def to_csv(self, path: str | Path) -> Path:
        return write_table(self.to_frame(), path)

    @classmethod
    def from_csv(cls, path: str | Path, shape: Optional[tuple[int, ...]] = None) -> "GridDensity":
        frame = read_table(path, required=["cell_weight", "density"])
        names = [c for c in frame.columns if c not in ("cell_weight", "density")]
        return cls(
            points=frame[names].to_numpy(),
            cell_weights=frame["cell_weight"].to_numpy(),
            values=frame["density"].to_numpy(),
            shape=shape or (len(frame),),
            coordinate_names=names,
        )


def _trapezoid_weights(lo: float, hi: float, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(lo, hi, resolution)
    h = (hi - lo) / (resolution - 1)
    weights = np.full(resolution, h)
    weights[[0, -1]] = 0.5 * h
    return nodes, weights


def make_grid(
    bounds: Sequence[tuple[float, float]],
    resolution: int | Sequence[int],
    coordinate_names: Optional[list[str]] = None,
) -> GridDensity:
    """
    Tensor-product trapezoid grid initialised to the uniform density.

    Args:
        bounds: Per-dimension (lo, hi)
        resolution: Points per dimension (one value or one per dimension)

    Returns:
        GridDensity with values 1 / volume

    Raises:
        ValueError: On more than two dimensions, lo >= hi or resolution < 2
    """
    bounds = [tuple(map(float, b)) for b in bounds]
    d = len(bounds)
    if d == 0 or d > 2:
        raise ValueError(f"quadrature grids support 1 or 2 dimensions, got {d}")
    res = [int(resolution)] * d if np.isscalar(resolution) else [int(r) for r in resolution]
    if len(res) != d or any(r < 2 for r in res):
        raise ValueError("resolution must be >= 2 in every dimension")
    if any(lo >= hi for lo, hi in bounds):
        raise ValueError("grid bounds need lo < hi")

    axes = [_trapezoid_weights(lo, hi, r) for (lo, hi), r in zip(bounds, res)]
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    wmesh = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    cell_weights = np.prod(np.stack([w.ravel() for w in wmesh]), axis=0)
    volume = float(np.prod([hi - lo for lo, hi in bounds]))
    return GridDensity(
        points=points,
        cell_weights=cell_weights,
        values=np.full(points.shape[0], 1.0 / volume),
        shape=tuple(res),
        coordinate_names=coordinate_names or [],
    )


def make_sphere_grid(n_theta: int, n_phi: int) -> GridDensity:
    """
    Latitude-longitude grid on S^2 with uniform density.

    Midpoint rule in the polar angle, periodic rule in the azimuth, cell
    weight sin(theta) dtheta dphi. Values are 1 / (sum of cell weights), so
    the discrete integral is exactly one.
    """
    if n_theta < 2 or n_phi < 3:
        raise ValueError("sphere grid needs n_theta >= 2 and n_phi >= 3")
    d_theta = math.pi / n_theta
    d_phi = 2.0 * math.pi / n_phi
    theta = (np.arange(n_theta) + 0.5) * d_theta
    phi = np.arange(n_phi) * d_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(tt.ravel())
    points = np.column_stack([st * np.cos(pp.ravel()), st * np.sin(pp.ravel()), np.cos(tt.ravel())])
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    cell_weights = st * d_theta * d_phi
    return GridDensity(
        points=points,
        cell_weights=cell_weights,
        values=np.full(points.shape[0], 1.0 / float(np.sum(cell_weights))),
        shape=(n_theta, n_phi),
        coordinate_names=["mu_x", "mu_y", "mu_z"],
    )


def _check_kernel(state: GridDensity, kernel: KernelModel) -> None:
    if state.points.shape[1] != kernel.mixing_dim:
        raise ValueError(
            f"grid has {state.points.shape[1]} coordinates but {kernel.family.value} needs {kernel.mixing_dim}"
        )


def _update(values: np.ndarray, k: np.ndarray, cell_weights: np.ndarray, w: float, step: Optional[int]):
    m_value = float(np.sum(k * values * cell_weights))
    if not m_value >= DENSITY_FLOOR:
        logger.error(f"Quadrature normalizing constant underflow at step {step}: {m_value}")
        raise DegeneracyError("normalizing constant below 1e-300 on the grid support", step=step)
    new = (1.0 - w) * values + w * k * values / m_value
    new /= np.sum(new * cell_weights)
    return new, m_value


def pr_quadrature_step(
    state: GridDensity,
    x: np.ndarray,
    w: float,
    kernel: KernelModel,
) -> tuple[GridDensity, float]:
    """
    One PR update on the grid.

    m = sum_g k(x | u_g) p(u_g) c_g, then p <- (1 - w) p + w k p / m,
    renormalised by the discrete integral.

    Raises:
        ValueError: If w is outside (0, 1) or dimensions disagree
        DegeneracyError: If m underflows
    """
    if not 0.0 < w < 1.0:
        raise ValueError(f"PR weight must lie in (0, 1), got {w}")
    _check_kernel(state, kernel)
    k = kernel.evaluate(x, state.points)
    values, m_value = _update(np.array(state.values), k, state.cell_weights, w, step=None)
    return state.with_values(values), m_value


def run_pr_quadrature(
    data: Dataset,
    state: GridDensity,
    schedule: WeightSchedule,
    kernel: KernelModel,
) -> tuple[GridDensity, np.ndarray]:
    """
    Iterate pr_quadrature_step over the data in order with w_i = (i + 1)^-gamma.

    Returns:
        Final GridDensity and the n normalizing constants m_{i-1}(X_i)
    """
    _check_kernel(state, kernel)
    if data.n == 0:
        return state, np.empty(0)

    bound = kernel.bind(state.points)
    weights = schedule.weights(data.n)
    values = np.array(state.values)
    cw = state.cell_weights
    m_values = np.empty(data.n)
    for i, x in enumerate(data.values):
        values, m_values[i] = _update(values, bound(x), cw, float(weights[i]), step=i + 1)

    result = state.with_values(values)
    if abs(result.integral() - 1.0) > NORMALIZATION_TOLERANCE:
        raise DegeneracyError(f"grid density lost normalization: {result.integral()}", step=data.n)
    logger.debug(f"Quadrature PR finished: n={data.n}, grid={state.size}")
    return result, m_values


def mixture_density_quadrature(x: np.ndarray, state: GridDensity, kernel: KernelModel) -> float:
    """m_P(x) = sum_g k(x | u_g) p(u_g) c_g."""
    _check_kernel(state, kernel)
    return float(np.sum(kernel.evaluate(x, state.points) * state.values * state.cell_weights))


def mixture_density_quadrature_many(xs: np.ndarray, state: GridDensity, kernel: KernelModel) -> np.ndarray:
    """mixture_density_quadrature at each row of xs."""
    _check_kernel(state, kernel)
    return kernel.mixture(xs, state.points, state.values * state.cell_weights)


def pr_log_marginal_likelihood(m_values: Sequence[float]) -> float:
    """sum_i log m_{i-1}(X_i)."""
    m = np.maximum(np.asarray(m_values, dtype=float), DENSITY_FLOOR)
    return float(np.sum(np.log(m)))


def profile_structural_parameter(
    data: Dataset,
    make_state: Callable[[], GridDensity],
    schedule: WeightSchedule,
    kernels: Sequence[KernelModel],
) -> tuple[int, np.ndarray]:
    """
    Pick the kernel hyperparameter maximising the PR marginal likelihood.

    Args:
        make_state: Factory for a fresh initial grid density
        kernels: Candidate kernels (e.g. fixed-beta angular Gaussians)

    Returns:
        (index of the best kernel, log marginal likelihoods per candidate)
    """
    if not kernels:
        raise ValueError("at least one candidate kernel is required")
    loglik = np.empty(len(kernels))
    for j, kernel in enumerate(kernels):
        _, m_values = run_pr_quadrature(data, make_state(), schedule, kernel)
        loglik[j] = pr_log_marginal_likelihood(m_values)
    best = int(np.argmax(loglik))
    logger.info(f"Structural parameter profile: best candidate {best} of {len(kernels)}, loglik={loglik[best]:.3f}")
    return best, loglik


def permutation_average_quadrature(
    data: Dataset,
    state: GridDensity,
    schedule: WeightSchedule,
    kernel: KernelModel,
    n_perms: int,
    seed: int,
) -> GridDensity:
    """
    Average the quadrature PR estimate over data orderings.

    Permutation 0 is the given order; further permutations are drawn from
    the permutation stream of `seed`.
    """
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    total = np.zeros(state.size)
    for r in range(n_perms):
        ordered = data if r == 0 else permute_dataset(data, seed, index=r)
        try:
            fitted, _ = run_pr_quadrature(ordered, state, schedule, kernel)
        except DegeneracyError as e:
            raise DegeneracyError(e.message, step=e.step, permutation=r) from e
        total += fitted.values
    return state.with_values(total / n_perms)
