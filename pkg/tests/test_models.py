"""Unit tests for the core domain types."""

import numpy as np
import pytest
from pydantic import ValidationError

from prticle.models import Dataset, MarkedPoint, ObservationKind, WeightSchedule, permute_dataset, weight_at


class TestWeightSchedule:
    """Tests for the PR step-size sequence."""

    def test_harmonic_weights(self):
        """gamma = 1 gives w_1 = 1/2 and w_9 = 1/10."""
        schedule = WeightSchedule(gamma=1.0)
        assert weight_at(1, schedule) == pytest.approx(0.5)
        assert weight_at(9, schedule) == pytest.approx(0.1)

    def test_slower_decay(self):
        """gamma = 0.67 gives w_1 = 2^-0.67."""
        assert WeightSchedule(gamma=0.67).weight_at(1) == pytest.approx(2 ** -0.67)

    def test_weights_array_matches_scalar(self):
        """The vector form agrees with weight_at at every index."""
        schedule = WeightSchedule(gamma=0.8)
        weights = schedule.weights(5, start=3)
        assert np.allclose(weights, [schedule.weight_at(i) for i in range(3, 8)])

    def test_weights_strictly_decrease(self):
        """The sequence is strictly decreasing and inside (0, 1)."""
        weights = WeightSchedule().weights(50)
        assert np.all(np.diff(weights) < 0)
        assert np.all((weights > 0) & (weights < 1))

    def test_harmonic_sums(self):
        """For gamma = 1 the squares stay below pi^2/6 while the weights themselves keep growing."""
        weights = WeightSchedule(gamma=1.0).weights(10**6)
        assert float(np.sum(weights**2)) < np.pi**2 / 6
        assert float(np.sum(weights)) > np.log(10**6) - 1.0

    @pytest.mark.parametrize("gamma", [0.5, 0.3, 1.01])
    def test_invalid_gamma_rejected(self, gamma):
        """gamma must lie in (0.5, 1]."""
        with pytest.raises(ValidationError):
            WeightSchedule(gamma=gamma)

    def test_index_below_one_rejected(self):
        """Weight indices start at 1."""
        with pytest.raises(ValueError):
            WeightSchedule().weight_at(0)


class TestMarkedPoint:
    """Tests for marked point validation."""

    def test_valid_point(self):
        """A point inside the window with mark above 2 is accepted."""
        p = MarkedPoint(s1=10.0, s2=190.0, mark=2.5)
        assert np.array_equal(p.as_array(), [10.0, 190.0, 2.5])

    @pytest.mark.parametrize(
        "fields",
        [
            {"s1": 0.0, "s2": 50.0, "mark": 10.0},
            {"s1": 200.0, "s2": 50.0, "mark": 10.0},
            {"s1": 50.0, "s2": 50.0, "mark": 2.0},
        ],
    )
    def test_out_of_domain_rejected(self, fields):
        """Window edges and a mark of exactly 2 are outside the domain."""
        with pytest.raises(ValidationError):
            MarkedPoint(**fields)


class TestDataset:
    """Tests for the ordered observation container."""

    def test_euclidean_vector_becomes_column(self):
        """A flat vector is stored as n x 1."""
        data = Dataset.euclidean([1.0, 2.0, 3.0])
        assert data.n == 3
        assert data.dim == 1
        assert data.kind == ObservationKind.EUCLIDEAN

    def test_values_are_read_only(self):
        """Stored observations cannot be mutated in place."""
        data = Dataset.euclidean([[1.0, 2.0]])
        with pytest.raises(ValueError):
            data.values[0, 0] = 5.0

    def test_non_finite_rejected(self):
        """NaN observations fail validation."""
        with pytest.raises(ValidationError):
            Dataset.euclidean([1.0, float("nan")])

    def test_sphere_requires_unit_norm(self):
        """Sphere observations must have norm 1 within 1e-12."""
        Dataset.sphere([[0.0, 0.0, 1.0]])
        with pytest.raises(ValidationError):
            Dataset.sphere([[0.0, 0.0, 1.001]])

    def test_marked_domain(self):
        """Marked datasets reject marks at or below the offset."""
        points = [MarkedPoint(s1=1.0, s2=2.0, mark=3.0)]
        assert Dataset.from_marked_points(points).n == 1
        with pytest.raises(ValidationError):
            Dataset(kind=ObservationKind.MARKED, values=[[1.0, 2.0, 2.0]])

    def test_empty_dataset(self):
        """An empty dataset is valid and iterates over nothing."""
        data = Dataset.euclidean([])
        assert data.n == 0
        assert list(data) == []


class TestPermuteDataset:
    """Tests for seeded reordering."""

    @pytest.fixture
    def data(self):
        return Dataset.euclidean(np.arange(20.0))

    def test_same_multiset(self, data):
        """A permutation keeps every observation exactly once."""
        shuffled = permute_dataset(data, seed=7)
        assert sorted(shuffled.values[:, 0]) == sorted(data.values[:, 0])

    def test_deterministic_in_seed(self, data):
        """The same seed and index give the same order."""
        a = permute_dataset(data, seed=7, index=2)
        b = permute_dataset(data, seed=7, index=2)
        assert np.array_equal(a.values, b.values)

    def test_index_selects_independent_order(self, data):
        """Different permutation indices give different orders."""
        a = permute_dataset(data, seed=7, index=1)
        b = permute_dataset(data, seed=7, index=2)
        assert not np.array_equal(a.values, b.values)

    def test_single_observation_unchanged(self):
        """n = 1 is returned as is."""
        data = Dataset.euclidean([4.2])
        assert permute_dataset(data, seed=1) is data
