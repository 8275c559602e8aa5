"""Unit tests for the PRticle filter."""

import math
from types import SimpleNamespace
from unittest.mock import patch

import numpy as np
import pytest

from prticle.errors import DegeneracyError
from prticle.kernels import KernelModel
from prticle.models import Dataset, WeightSchedule
from prticle.prticle_filter import (
    ParticleSet,
    ess,
    init_particles,
    permutation_average,
    prticle_step,
    run_prticle,
)
from prticle.quadrature import make_grid, run_pr_quadrature
from prticle.sampling import DATA_STREAM, PARTICLE_STREAM, RngStream, UniformBoxSampler, sample_mixture_data, stream
from prticle.utils import median


class TableKernel:
    """
    Kernel with hand-set values: particle t is the index t, observation j is
    the index j, and k(X_j | U_t) = table[j, t].
    """

    mixing_dim = 1
    family = SimpleNamespace(value="table")

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)

    def bind(self, points, floor=True):
        idx = np.asarray(points)[:, 0].astype(int)
        return lambda x: self.table[int(x[0]), idx]

    def evaluate(self, x, points):
        return self.bind(points)(np.atleast_1d(x))


def index_particles(T: int) -> ParticleSet:
    return ParticleSet(particles=np.arange(T, dtype=float).reshape(-1, 1), deltas=np.ones(T))


def index_data(n: int) -> Dataset:
    return Dataset.euclidean(np.arange(n, dtype=float))


def product_form(table: np.ndarray, weights: np.ndarray) -> list[float]:
    """
    Delta_n(u_t) = prod_j {1 + w_j (k(X_j | u_t) / m_{j-1}(X_j) - 1)}, with
    each m_{j-1} the particle average of k times the partial product.
    """
    n, T = table.shape
    factors: list[list[float]] = []
    for j in range(n):
        partial = [math.prod(f[t] for f in factors) for t in range(T)]
        m = sum(float(table[j, t]) * partial[t] for t in range(T)) / T
        factors.append([1.0 + float(weights[j]) * (float(table[j, t]) / m - 1.0) for t in range(T)])
    return [math.prod(f[t] for f in factors) for t in range(T)]


@pytest.fixture
def kernel():
    return KernelModel.gaussian_iso(0.5)


@pytest.fixture
def prior():
    return UniformBoxSampler([(0.0, 10.0)])


class TestInitParticles:
    """Tests for particle initialisation."""

    def test_single_particle(self, prior):
        """T = 1 gives one particle with Delta = 1."""
        state = init_particles(prior, 1, seed=0)
        assert state.T == 1
        assert state.deltas.tolist() == [1.0]
        assert state.step_count == 0

    def test_law_of_large_numbers(self, prior):
        """Uniform [0, 10] particles have mean 5 within three standard errors."""
        state = init_particles(prior, 10_000, seed=3)
        se = math.sqrt(100.0 / 12.0) / 100.0
        assert abs(state.particles.mean() - 5.0) < 3 * se

    def test_deterministic(self, prior):
        """The same seed gives the same particles."""
        a = init_particles(prior, 50, seed=8)
        b = init_particles(prior, 50, seed=8)
        assert np.array_equal(a.particles, b.particles)

    def test_explicit_stream(self, prior):
        """A substream gives a different cloud than the default stream."""
        a = init_particles(prior, 50, seed=8)
        b = init_particles(prior, 50, seed=8, stream=RngStream(seed=8, stream_id=PARTICLE_STREAM, path=(1,)))
        assert not np.array_equal(a.particles, b.particles)

    def test_zero_particles_rejected(self, prior):
        """T must be at least one."""
        with pytest.raises(ValueError):
            init_particles(prior, 0, seed=0)

    def test_density_tracking(self, prior):
        """With tracking, p0 is stored at every particle."""
        state = init_particles(prior, 10, seed=0, track_density=True)
        assert np.allclose(state.p0_density, 0.1)


class TestParticleSet:
    """Tests for the particle container."""

    def test_non_positive_delta_rejected(self):
        """Delta weights must be strictly positive."""
        with pytest.raises(ValueError):
            ParticleSet(particles=[[0.0], [1.0]], deltas=[1.0, 0.0])

    def test_shape_mismatch_rejected(self):
        """One Delta per particle."""
        with pytest.raises(ValueError):
            ParticleSet(particles=[[0.0], [1.0]], deltas=[1.0])

    def test_save_and_load(self, prior, kernel, tmp_path):
        """A mid-run cloud round-trips through CSV and its JSON summary."""
        state = init_particles(prior, 20, seed=1, coordinate_names=["u1"])
        fitted, _ = run_prticle(Dataset.euclidean([3.0, 4.0]), state, WeightSchedule(), kernel)
        fitted.save(tmp_path, "cloud")
        restored = ParticleSet.load(tmp_path, "cloud")
        assert restored.step_count == 2
        assert restored.names == ["u1"]
        assert np.allclose(restored.deltas, fitted.deltas, rtol=1e-11)

    def test_reset(self):
        """reset keeps the particles and restores Delta = 1."""
        state = ParticleSet(particles=[[0.0], [1.0]], deltas=[1.5, 0.5], step_count=4)
        fresh = state.reset()
        assert fresh.deltas.tolist() == [1.0, 1.0]
        assert fresh.step_count == 0


class TestPRticleStep:
    """Tests for a single filter update."""

    def test_hand_example(self):
        """Kernel values {1, 2, 3} with w = 0.5 give D = 2 and Delta = {0.75, 1, 1.25}."""
        state, d = prticle_step(index_particles(3), np.array([0.0]), 0.5, TableKernel([[1.0, 2.0, 3.0]]))
        assert d == pytest.approx(2.0)
        assert np.allclose(state.deltas, [0.75, 1.0, 1.25])
        assert state.deltas.mean() == pytest.approx(1.0, abs=1e-12)
        assert state.step_count == 1

    def test_single_particle_delta_fixed(self):
        """With T = 1 Delta stays 1 and m_hat is the kernel value."""
        kernel = TableKernel([[0.3], [2.5], [0.01]])
        state = index_particles(1)
        for j, expected in enumerate([0.3, 2.5, 0.01]):
            state, d = prticle_step(state, np.array([float(j)]), 0.5, kernel)
            assert d == pytest.approx(expected)
            assert state.deltas[0] == pytest.approx(1.0)

    def test_flat_kernel_fixed_point(self):
        """A constant kernel leaves Delta unchanged and m_hat = c."""
        state, d = prticle_step(index_particles(4), np.array([0.0]), 0.3, TableKernel([[0.7] * 4]))
        assert d == pytest.approx(0.7)
        assert np.allclose(state.deltas, 1.0)

    def test_weight_outside_unit_interval(self):
        """w must lie in (0, 1)."""
        with pytest.raises(ValueError):
            prticle_step(index_particles(2), np.array([0.0]), 1.0, TableKernel([[1.0, 1.0]]))

    def test_underflow_carries_step(self, kernel):
        """D below 1e-300 raises a degeneracy error naming the step."""
        state = ParticleSet(particles=[[0.0], [1.0]], deltas=[1e-20, 1e-20], step_count=6)
        with pytest.raises(DegeneracyError) as exc_info:
            prticle_step(state, np.array([1e4]), 0.5, kernel)
        assert exc_info.value.step == 7


class TestRunPRticle:
    """Tests for full filter runs."""

    def test_empty_data_is_p0(self, prior, kernel):
        """n = 0 leaves all Delta at 1."""
        state = init_particles(prior, 10, seed=0)
        fitted, m_hats = run_prticle(Dataset.euclidean([]), state, WeightSchedule(), kernel)
        assert np.array_equal(fitted.deltas, np.ones(10))
        assert m_hats.size == 0

    def test_first_m_hat_is_plain_average(self, prior, kernel):
        """m_hat_0(X_1) = (1/T) sum_t k(X_1 | U_t)."""
        state = init_particles(prior, 100, seed=0)
        _, m_hats = run_prticle(Dataset.euclidean([4.0]), state, WeightSchedule(), kernel)
        assert m_hats[0] == pytest.approx(np.mean(kernel.evaluate(np.array([4.0]), state.particles)))

    def test_two_steps_match_product_form(self):
        """n = 2, T = 4 with hand-set kernels agrees with the expanded product."""
        table = np.array([[0.5, 1.0, 2.0, 4.0], [3.0, 0.2, 1.0, 0.6]])
        schedule = WeightSchedule(gamma=1.0)
        fitted, _ = run_prticle(index_data(2), index_particles(4), schedule, TableKernel(table), min_ess=None)
        assert np.allclose(fitted.deltas, product_form(table, schedule.weights(2)), rtol=1e-12, atol=0)

    def test_brute_force_oracle(self):
        """200 random small cases agree with the product form to 1e-12."""
        rng = np.random.default_rng(20240)
        for _ in range(200):
            n = int(rng.integers(1, 4))
            T = int(rng.integers(1, 9))
            table = rng.uniform(0.05, 5.0, size=(n, T))
            schedule = WeightSchedule(gamma=float(rng.uniform(0.51, 1.0)))
            fitted, _ = run_prticle(index_data(n), index_particles(T), schedule, TableKernel(table), min_ess=None)
            expected = product_form(table, schedule.weights(n))
            assert np.allclose(fitted.deltas, expected, rtol=1e-12, atol=0)

    def test_self_normalisation_every_step(self, prior, kernel):
        """mean(Delta) = 1 within 1e-9 and Delta > 0 after every step."""
        data = sample_mixture_data(prior, kernel, 100, stream(5, DATA_STREAM))
        state = init_particles(prior, 200, seed=5)
        schedule = WeightSchedule()
        for i, x in enumerate(data.values, start=1):
            state, _ = prticle_step(state, x, schedule.weight_at(i), kernel)
            assert abs(state.deltas.mean() - 1.0) < 1e-9
            assert np.all(state.deltas > 0)

    def test_resume_continues_schedule(self, prior, kernel):
        """Running two halves back to back equals one run over all the data."""
        data = Dataset.euclidean([1.0, 3.0, 4.5, 7.0, 8.0, 2.5])
        state = init_particles(prior, 30, seed=2)
        full, _ = run_prticle(data, state, WeightSchedule(), kernel)
        half, _ = run_prticle(Dataset.euclidean(data.values[:3]), state, WeightSchedule(), kernel)
        rest, _ = run_prticle(Dataset.euclidean(data.values[3:]), half, WeightSchedule(), kernel)
        assert rest.step_count == 6
        assert np.allclose(rest.deltas, full.deltas, rtol=1e-12)

    def test_density_tracking(self, prior, kernel):
        """Tracked p_n at the particles is p0 times Delta."""
        state = init_particles(prior, 25, seed=4, track_density=True)
        fitted, _ = run_prticle(Dataset.euclidean([2.0, 8.0]), state, WeightSchedule(), kernel)
        assert np.allclose(fitted.density_at_particles, fitted.p0_density * fitted.deltas)

    def test_collapse_raises_by_default(self, prior):
        """A narrow kernel on repeated data collapses the cloud below ESS 3."""
        kernel = KernelModel.gaussian_iso(0.001)
        state = init_particles(prior, 50, seed=0)
        data = Dataset.euclidean(np.full(200, 5.0))
        with pytest.raises(DegeneracyError) as exc_info:
            run_prticle(data, state, WeightSchedule(), kernel)
        assert exc_info.value.diagnostics["T"] == 50
        assert exc_info.value.diagnostics["ess"] < 3.0
        assert 1 <= exc_info.value.step <= data.n
        fitted, _ = run_prticle(data, state, WeightSchedule(), kernel, min_ess=None)
        assert ess(fitted) < 3.0

    def test_collapse_reported_at_failing_step(self):
        """The ESS floor is checked after every update, not only at the end."""
        table = [[1000.0, 1e-6, 1e-6, 1e-6], [1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]]
        with pytest.raises(DegeneracyError) as exc_info:
            run_prticle(index_data(3), index_particles(4), WeightSchedule(), TableKernel(table))
        assert exc_info.value.step == 1

    def test_step_checks_ess(self):
        """prticle_step applies the same floor."""
        kernel = TableKernel([[1000.0, 1e-6, 1e-6, 1e-6]])
        with pytest.raises(DegeneracyError) as exc_info:
            prticle_step(index_particles(4), np.array([0.0]), 0.5, kernel)
        assert exc_info.value.step == 1
        state, _ = prticle_step(index_particles(4), np.array([0.0]), 0.5, kernel, min_ess=None)
        assert ess(state) < 3.0

    def test_small_clouds_exempt(self):
        """Clouds with T <= 3 never trip the ESS floor."""
        table = [[1000.0, 1e-6, 1e-6], [1000.0, 1e-6, 1e-6]]
        fitted, _ = run_prticle(index_data(2), index_particles(3), WeightSchedule(), TableKernel(table))
        assert fitted.step_count == 2

    def test_kernel_dimension_checked(self, prior):
        """Particles must match the kernel's mixing layout."""
        state = init_particles(prior, 5, seed=0)
        with pytest.raises(ValueError):
            run_prticle(Dataset.euclidean([[1.0, 1.0]]), state, WeightSchedule(), KernelModel.gaussian_iso(0.5, dim=2))


class TestESS:
    """Tests for the effective sample size."""

    def test_equal_weights(self):
        """All Delta equal gives ESS = T."""
        assert ess(index_particles(100)) == pytest.approx(100.0)

    def test_hand_example(self):
        """Delta = {2, 1, 1} gives 16 / 6."""
        state = ParticleSet(particles=np.zeros((3, 1)), deltas=[2.0, 1.0, 1.0])
        assert ess(state) == pytest.approx(16.0 / 6.0)

    def test_dominant_particle(self):
        """One dominant particle drives ESS towards 1."""
        state = ParticleSet(particles=np.zeros((4, 1)), deltas=[4.0 - 3e-12, 1e-12, 1e-12, 1e-12])
        assert ess(state) == pytest.approx(1.0, abs=1e-9)


class TestPermutationAverage:
    """Tests for order averaging of Delta."""

    @pytest.fixture
    def data(self, kernel, prior):
        return sample_mixture_data(prior, kernel, 30, stream(6, DATA_STREAM))

    def test_single_permutation_is_single_run(self, data, prior, kernel):
        """n_perms = 1 is the in-order run."""
        state = init_particles(prior, 40, seed=1)
        single, _ = run_prticle(data, state, WeightSchedule(), kernel)
        averaged = permutation_average(data, state, WeightSchedule(), kernel, 1, seed=1)
        assert np.array_equal(averaged.deltas, single.deltas)

    def test_single_observation(self, prior, kernel):
        """With n = 1 every permutation is the same run."""
        data = Dataset.euclidean([4.0])
        state = init_particles(prior, 40, seed=1)
        single, _ = run_prticle(data, state, WeightSchedule(), kernel)
        averaged = permutation_average(data, state, WeightSchedule(), kernel, 5, seed=1)
        assert np.allclose(averaged.deltas, single.deltas, rtol=1e-12)

    def test_average_keeps_mean_one(self, data, prior, kernel):
        """The averaged Delta vector still has mean 1."""
        state = init_particles(prior, 40, seed=1)
        averaged = permutation_average(data, state, WeightSchedule(), kernel, 4, seed=1, max_workers=2)
        assert abs(averaged.deltas.mean() - 1.0) < 1e-9
        assert averaged.step_count == data.n

    def test_failure_names_permutation(self, data, prior, kernel):
        """A degenerate run is reported with its permutation index."""
        state = init_particles(prior, 10, seed=1)
        with patch("prticle.prticle_filter.run_prticle", side_effect=DegeneracyError("collapsed", step=4)):
            with pytest.raises(DegeneracyError) as exc_info:
                permutation_average(data, state, WeightSchedule(), kernel, 3, seed=1)
        assert exc_info.value.permutation == 0
        assert exc_info.value.step == 4

    def test_min_ess_forwarded(self):
        """Every permutation run enforces the ESS floor."""
        table = [[1000.0, 1e-6, 1e-6, 1e-6], [1.0, 1.0, 1.0, 1.0]]
        data, state = index_data(2), index_particles(4)
        with pytest.raises(DegeneracyError) as exc_info:
            permutation_average(data, state, WeightSchedule(), TableKernel(table), 2, seed=1)
        assert exc_info.value.permutation in (0, 1)
        averaged = permutation_average(data, state, WeightSchedule(), TableKernel(table), 2, seed=1, min_ess=None)
        assert abs(averaged.deltas.mean() - 1.0) < 1e-9


@pytest.mark.slow
def test_m_hats_approach_quadrature(kernel, prior):
    """Particle normalizing constants approach the quadrature ones as T grows."""
    data = sample_mixture_data(prior, kernel, 100, stream(11, DATA_STREAM))
    _, exact = run_pr_quadrature(data, make_grid([(0.0, 10.0)], 2000), WeightSchedule(), kernel)
    errors = {}
    for T in (100, 10_000):
        rel = []
        for s in range(5):
            state = init_particles(prior, T, seed=s)
            _, m_hats = run_prticle(data, state, WeightSchedule(), kernel)
            rel.append(float(np.median(np.abs(m_hats - exact) / exact)))
        errors[T] = median(rel)
    assert errors[10_000] < errors[100]
