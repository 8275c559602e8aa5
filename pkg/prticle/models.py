"""
Core domain types shared by both PR engines: the weight schedule, marked
points and the ordered observation container.
"""
from enum import Enum
from typing import Any, Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Spatial extent of the marked point process window and the mark offset (cm).
MARKED_EXTENT = 200.0
MARK_OFFSET = 2.0
SPHERE_NORM_TOLERANCE = 1e-12

# An observation is one row of a Dataset: a Euclidean vector, a unit
# 3-vector, or a marked point (s1, s2, mark).
Observation = np.ndarray


class WeightSchedule(BaseModel):
    """PR step-size sequence w_i = (i + 1)^(-gamma)."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=1.0, description="Decay exponent in (0.5, 1]")

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        """Validate that gamma lies in (0.5, 1]."""
        if not 0.5 < v <= 1.0:
            raise ValueError("gamma must lie in (0.5, 1]")
        return v

    def weight_at(self, i: int) -> float:
        """Weight of the i-th update (1-based)."""
        if i < 1:
            raise ValueError(f"weight index must be >= 1, got {i}")
        return float((i + 1.0) ** (-self.gamma))

    def weights(self, n: int, start: int = 1) -> np.ndarray:
        """Weights w_start, ..., w_{start+n-1} as an array."""
        if start < 1:
            raise ValueError(f"weight index must be >= 1, got {start}")
        idx = np.arange(start, start + n, dtype=float)
        return (idx + 1.0) ** (-self.gamma)


def weight_at(i: int, schedule: WeightSchedule) -> float:
    """
    Return the PR weight (i + 1)^(-gamma) for update i >= 1.

    Raises:
        ValueError: If i < 1
    """
    return schedule.weight_at(i)


class MarkedPoint(BaseModel):
    """A tree location in the open 200 x 200 window with its diameter mark (cm)."""

    model_config = ConfigDict(frozen=True)

    s1: float = Field(..., gt=0.0, lt=MARKED_EXTENT)
    s2: float = Field(..., gt=0.0, lt=MARKED_EXTENT)
    mark: float = Field(..., gt=MARK_OFFSET)

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.mark], dtype=float)


class ObservationKind(str, Enum):
    """Variant of the observations held by a Dataset."""

    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    MARKED = "marked"


class Dataset(BaseModel):
    """
    Ordered, validated observations.

    Order matters because PR is order-dependent. Observations are validated
    once here so kernel evaluations need no per-call checks. The values
    array is stored read-only, one observation per row.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: ObservationKind
    values: np.ndarray
    source: dict[str, Any] = Field(default_factory=dict, description="Provenance (e.g. ingestion counts)")

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v: Any) -> np.ndarray:
        """Coerce to a read-only 2-d float array."""
        arr = np.array(v, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 1)
        if arr.ndim != 2:
            raise ValueError("observations must form a 2-d array (n x dim)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("observations must be finite")
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def validate_domain(self):
        """Validate the variant-specific domain of every observation."""
        arr = self.values
        if self.kind == ObservationKind.SPHERE:
            if arr.shape[1] != 3:
                raise ValueError("sphere observations must be 3-vectors")
            if arr.shape[0] and np.max(np.abs(np.linalg.norm(arr, axis=1) - 1.0)) > SPHERE_NORM_TOLERANCE:
                raise ValueError("sphere observations must have unit norm")
        elif self.kind == ObservationKind.MARKED:
            if arr.shape[1] != 3:
                raise ValueError("marked observations must be (s1, s2, mark) rows")
            s = arr[:, :2]
            if np.any(s <= 0.0) or np.any(s >= MARKED_EXTENT) or np.any(arr[:, 2] <= MARK_OFFSET):
                raise ValueError("marked observations must satisfy 0 < s < 200 and mark > 2")
        return self

    @classmethod
    def euclidean(cls, values: Any, **source: Any) -> "Dataset":
        return cls(kind=ObservationKind.EUCLIDEAN, values=values, source=source)

    @classmethod
    def sphere(cls, values: Any, **source: Any) -> "Dataset":
        return cls(kind=ObservationKind.SPHERE, values=values, source=source)

    @classmethod
    def from_marked_points(cls, points: list[MarkedPoint], **source: Any) -> "Dataset":
        values = np.array([p.as_array() for p in points], dtype=float).reshape(-1, 3)
        return cls(kind=ObservationKind.MARKED, values=values, source=source)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Observation]:
        return iter(self.values)

    def reorder(self, order: np.ndarray) -> "Dataset":
        """Dataset with rows taken in the given index order."""
        return Dataset(kind=self.kind, values=self.values[np.asarray(order)], source=dict(self.source))


def permute_dataset(data: Dataset, seed: int, index: int = 0) -> Dataset:
    """
    Uniformly random reordering of the observations, deterministic in seed.

    Uses a Fisher-Yates shuffle of the indices drawn from the dedicated
    permutation stream; the multiset of observations is unchanged. `index`
    selects one of several independent permutations for the same seed.
    """
    from prticle.sampling import PERMUTATION_STREAM, RngStream

    if data.n <= 1:
        return data
    rng = RngStream(seed=seed, stream_id=PERMUTATION_STREAM, path=(index,)).generator()
    return data.reorder(rng.permutation(data.n))
