"""
Kernel densities k(x | u) for the four mixture families, sphere geometry
helpers, and the closed-form conditional pieces of the marked point process
kernel.

Mixing points are rows of a float array in a family-specific layout:

    gaussian-iso             u_1 .. u_d
    gaussian-bivariate-full  mu1, mu2, sigma1^2, sigma2^2, rho
    angular-gaussian-sphere  mu_x, mu_y, mu_z, beta   (beta omitted when fixed)
    marked-pp-trivariate     mu1, mu2, mu3, log var1..3, rho12, rho13, rho23
                             (correlations omitted in the reduced variant)
"""
import math
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit, logit

from prticle.models import (
    MARK_OFFSET,
    MARKED_EXTENT,
    SPHERE_NORM_TOLERANCE,
    MarkedPoint,
    ObservationKind,
)
from prticle.utils import DENSITY_FLOOR

LOG_2PI = math.log(2.0 * math.pi)
INV_4PI = 1.0 / (4.0 * math.pi)

MixingPoint = np.ndarray
BoundKernel = Callable[[np.ndarray], np.ndarray]


class KernelFamily(str, Enum):
    GAUSSIAN_ISO = "gaussian-iso"
    GAUSSIAN_BIVARIATE_FULL = "gaussian-bivariate-full"
    ANGULAR_GAUSSIAN_SPHERE = "angular-gaussian-sphere"
    MARKED_PP_TRIVARIATE = "marked-pp-trivariate"


# ---------------------------------------------------------------------------
# Sphere geometry
# ---------------------------------------------------------------------------

def _check_unit(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > SPHERE_NORM_TOLERANCE:
        raise ValueError(f"{name} must have unit norm")
    return v


def spherical_angles(mu: np.ndarray) -> tuple[float, float]:
    """Polar angle theta in [0, pi] from +z and azimuth phi in [0, 2 pi)."""
    theta = math.acos(min(1.0, max(-1.0, float(mu[2]))))
    phi = math.atan2(float(mu[1]), float(mu[0])) % (2.0 * math.pi)
    return theta, phi


def rotation_matrix(mu: np.ndarray) -> np.ndarray:
    """
    Rotation Q_mu taking (0, 0, 1) onto the unit vector mu.

    Built from the spherical coordinates (theta, phi) of mu; the third
    column is mu itself.

    Raises:
        ValueError: If mu is not a unit 3-vector
    """
    mu = _check_unit(mu, "mu")
    theta, phi = spherical_angles(mu)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    return np.array(
        [
            [ct * cp, -sp, st * cp],
            [ct * sp, cp, st * sp],
            [-st, 0.0, ct],
        ]
    )


def angular_gaussian_covariance(mu: np.ndarray, beta: float) -> np.ndarray:
    """Sigma = Q D Q^T with D = diag(1, 1, beta^-2): principal axis mu."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    q = rotation_matrix(mu)
    d = np.diag([1.0, 1.0, beta ** -2])
    return q @ d @ q.T


# ---------------------------------------------------------------------------
# Scalar evaluators
# ---------------------------------------------------------------------------

def eval_gaussian_iso(x: np.ndarray, u: np.ndarray, sigma2: float) -> float:
    """N_d(x | u, sigma2 I_d)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != u.shape:
        raise ValueError(f"dimension mismatch: x has {x.shape}, u has {u.shape}")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    d = x.size
    sq = float(np.sum((x - u) ** 2))
    return (2.0 * math.pi * sigma2) ** (-d / 2.0) * math.exp(-sq / (2.0 * sigma2))


def eval_gaussian_bivariate_full(x: np.ndarray, point: MixingPoint) -> float:
    """Bivariate normal density at x for the point (mu1, mu2, sigma1^2, sigma2^2, rho)."""
    bound = KernelModel.bivariate().bind(np.asarray(point, dtype=float).reshape(1, 5), floor=False)
    return float(bound(np.asarray(x, dtype=float))[0])


def eval_angular_gaussian(x: np.ndarray, mu: np.ndarray, beta: float) -> float:
    """
    Angular Gaussian density on S^2 with respect to surface measure.

    (1 / 4 pi) |Sigma|^(-1/2) (x^T Sigma^-1 x)^(-3/2), Sigma = Q_mu D_beta Q_mu^T.
    """
    x = _check_unit(x, "x")
    sigma = angular_gaussian_covariance(mu, beta)
    quad = float(x @ np.linalg.solve(sigma, x))
    return INV_4PI * np.linalg.det(sigma) ** -0.5 * quad ** -1.5


def eval_marked_pp_kernel(p: Union[MarkedPoint, np.ndarray], point: MixingPoint) -> float:
    """Trivariate normal on (logit s/200, log(mark - 2)) divided by the Jacobian product."""
    obs = p.as_array() if isinstance(p, MarkedPoint) else MarkedPoint(s1=p[0], s2=p[1], mark=p[2]).as_array()
    point = np.asarray(point, dtype=float)
    kernel = KernelModel.marked_pp(reduced=point.size == 6)
    return float(kernel.bind(point.reshape(1, -1), floor=False)(obs)[0])


def conditional_mark_component(s: tuple[float, float], point: MixingPoint) -> tuple[float, float, float]:
    """
    Conditional of log(mark - 2) given the location for one mixture component.

    Returns:
        (cond_mean, cond_var, marginal_weight) where marginal_weight is the
        location density of the component at s including its Jacobian.
    """
    point = np.asarray(point, dtype=float)
    kernel = KernelModel.marked_pp(reduced=point.size == 6)
    mean, var, weight = conditional_mark_components(s, point.reshape(1, -1), kernel)
    return float(mean[0]), float(var[0]), float(weight[0])


def marked_pp_point(
    mean: tuple[float, float, float],
    variances: tuple[float, float, float],
    correlations: Optional[tuple[float, float, float]] = (0.0, 0.0, 0.0),
) -> MixingPoint:
    """Pack (mu, Sigma) into the marked-pp layout; correlations=None gives the reduced layout."""
    parts = [np.asarray(mean, dtype=float), np.log(np.asarray(variances, dtype=float))]
    if correlations is not None:
        parts.append(np.asarray(correlations, dtype=float))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Marked point process helpers
# ---------------------------------------------------------------------------

def assemble_marked_covariance(points: np.ndarray) -> np.ndarray:
    """(T, 3, 3) covariances from log-variance and correlation columns."""
    points = np.atleast_2d(points)
    sd = np.exp(0.5 * points[:, 3:6])
    corr = np.zeros((points.shape[0], 3, 3))
    corr[:, [0, 1, 2], [0, 1, 2]] = 1.0
    if points.shape[1] == 9:
        for (i, j), col in zip(((0, 1), (0, 2), (1, 2)), (6, 7, 8)):
            corr[:, i, j] = points[:, col]
            corr[:, j, i] = points[:, col]
    return corr * sd[:, :, None] * sd[:, None, :]


def _correlations_valid(points: np.ndarray) -> np.ndarray:
    if points.shape[1] == 6:
        return np.ones(points.shape[0], dtype=bool)
    r12, r13, r23 = points[:, 6], points[:, 7], points[:, 8]
    in_box = (np.abs(r12) < 1) & (np.abs(r13) < 1) & (np.abs(r23) < 1)
    det = 1.0 + 2.0 * r12 * r13 * r23 - r12 ** 2 - r13 ** 2 - r23 ** 2
    return in_box & (det > 0)


def _marked_transform(x: np.ndarray, extent: float, offset: float) -> tuple[np.ndarray, float]:
    """Map (s1, s2, mark) to the Gaussian scale; returns (y, log Jacobian product)."""
    p = x[:2] / extent
    y = np.array([logit(p[0]), logit(p[1]), math.log(x[2] - offset)])
    log_jac = math.log(x[2] - offset) + float(np.sum(np.log(p) + np.log1p(-p)))
    return y, log_jac


def conditional_mark_components(
    s: tuple[float, float],
    points: np.ndarray,
    kernel: "KernelModel",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised conditional_mark_component over T mixing points.

    Returns:
        cond_mean (T,), cond_var (T,), marginal_weight (T,)
    """
    if kernel.family != KernelFamily.MARKED_PP_TRIVARIATE:
        raise ValueError("conditional mark components need the marked-pp kernel")
    s = np.asarray(s, dtype=float)
    if s.shape != (2,) or np.any(s <= 0) or np.any(s >= kernel.extent):
        raise ValueError(f"location must lie in (0, {kernel.extent})^2")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(_correlations_valid(points)):
        raise ValueError("covariance is not positive definite")
    cov = assemble_marked_covariance(points)
    mu = points[:, :3]

    p = s / kernel.extent
    y_s = logit(p)
    log_jac = float(np.sum(np.log(p) + np.log1p(-p)))

    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    det12 = a * c - b * b
    d1 = y_s[0] - mu[:, 0]
    d2 = y_s[1] - mu[:, 1]
    # Sigma_12^-1 (y_s - mu_12) and Sigma_12^-1 Sigma_{12,3} via the explicit 2x2 inverse
    z1 = (c * d1 - b * d2) / det12
    z2 = (-b * d1 + a * d2) / det12
    s13, s23 = cov[:, 0, 2], cov[:, 1, 2]
    w1 = (c * s13 - b * s23) / det12
    w2 = (-b * s13 + a * s23) / det12

    cond_mean = mu[:, 2] + s13 * z1 + s23 * z2
    cond_var = cov[:, 2, 2] - (s13 * w1 + s23 * w2)
    quad = d1 * z1 + d2 * z2
    log_marginal = -0.5 * quad - 0.5 * np.log(det12) - LOG_2PI - log_jac
    return cond_mean, cond_var, np.exp(log_marginal)


# ---------------------------------------------------------------------------
# Kernel model
# ---------------------------------------------------------------------------

class KernelModel(BaseModel):
    """
    Kernel family plus its fixed hyperparameters.

    `bind(points)` precomputes per-point quantities and returns a callable
    mapping one observation to the kernel values at every point.
    """

    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    sigma2: Optional[float] = Field(default=None, gt=0.0, description="Isotropic variance (gaussian-iso)")
    dim: int = Field(default=1, ge=1, description="Data dimension (gaussian-iso)")
    beta: Optional[float] = Field(default=None, gt=0.0, description="Fixed concentration (sphere, quadrature fits)")
    reduced: bool = Field(default=False, description="Marked-pp with correlations pinned at 0")
    extent: float = Field(default=MARKED_EXTENT, gt=0.0)
    mark_offset: float = MARK_OFFSET

    @model_validator(mode="after")
    def validate_hyperparameters(self):
        """gaussian-iso needs its variance."""
        if self.family == KernelFamily.GAUSSIAN_ISO and self.sigma2 is None:
            raise ValueError("gaussian-iso kernel requires sigma2")
        return self

    @classmethod
    def gaussian_iso(cls, sigma2: float, dim: int = 1) -> "KernelModel":
        return cls(family=KernelFamily.GAUSSIAN_ISO, sigma2=sigma2, dim=dim)

    @classmethod
    def bivariate(cls) -> "KernelModel":
        return cls(family=KernelFamily.GAUSSIAN_BIVARIATE_FULL)

    @classmethod
    def angular(cls, beta: Optional[float] = None) -> "KernelModel":
        return cls(family=KernelFamily.ANGULAR_GAUSSIAN_SPHERE, beta=beta)

    @classmethod
    def marked_pp(cls, reduced: bool = False) -> "KernelModel":
        return cls(family=KernelFamily.MARKED_PP_TRIVARIATE, reduced=reduced)

    @property
    def data_dim(self) -> int:
        return self.dim if self.family == KernelFamily.GAUSSIAN_ISO else (
            2 if self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL else 3
        )

    @property
    def observation_kind(self) -> ObservationKind:
        if self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE:
            return ObservationKind.SPHERE
        if self.family == KernelFamily.MARKED_PP_TRIVARIATE:
            return ObservationKind.MARKED
        return ObservationKind.EUCLIDEAN

    @property
    def coordinate_names(self) -> list[str]:
        if self.family == KernelFamily.GAUSSIAN_ISO:
            return [f"u{j + 1}" for j in range(self.dim)]
        if self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            return ["mu1", "mu2", "sigma1_sq", "sigma2_sq", "rho"]
        if self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE:
            names = ["mu_x", "mu_y", "mu_z"]
            return names if self.beta is not None else names + ["beta"]
        names = ["mu1", "mu2", "mu3", "log_var1", "log_var2", "log_var3"]
        return names if self.reduced else names + ["rho12", "rho13", "rho23"]

    @property
    def mixing_dim(self) -> int:
        return len(self.coordinate_names)

    def _check_points(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.mixing_dim:
            raise ValueError(
                f"{self.family.value} mixing points need {self.mixing_dim} coordinates, got {points.shape[1]}"
            )
        return points

    # -- evaluation ---------------------------------------------------------

    def bind(self, points: np.ndarray, floor: bool = True) -> BoundKernel:
        """
        Precompute per-point quantities for repeated evaluation.

        Args:
            points: (T, mixing_dim) mixing points
            floor: Clamp values below DENSITY_FLOOR

        Returns:
            Callable x -> (T,) kernel values k(x | U_t)

        Raises:
            ValueError: On invalid points (non-PD covariance, non-unit sphere location)
        """
        points = self._check_points(points)
        if self.family == KernelFamily.GAUSSIAN_ISO:
            raw = self._bind_gaussian_iso(points)
        elif self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            raw = self._bind_bivariate(points)
        elif self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE:
            raw = self._bind_angular(points)
        else:
            raw = self._bind_marked(points)
        if not floor:
            return raw
        return lambda x: np.maximum(raw(x), DENSITY_FLOOR)

    def evaluate(self, x: np.ndarray, points: np.ndarray) -> np.ndarray:
        """k(x | U_t) for every row U_t of points."""
        return self.bind(points)(np.asarray(x, dtype=float))

    def density_matrix(self, xs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """(m, T) matrix of floored kernel values k(x_i | U_t)."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.data_dim)
        points = self._check_points(points)
        if self.family == KernelFamily.GAUSSIAN_ISO:
            sq = np.sum((xs[:, None, :] - points[None, :, :]) ** 2, axis=2)
            out = (2.0 * math.pi * self.sigma2) ** (-self.dim / 2.0) * np.exp(-sq / (2.0 * self.sigma2))
        elif self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            m1, m2, s1, s2, rho = points.T
            sd1, sd2 = np.sqrt(s1), np.sqrt(s2)
            one_minus = 1.0 - rho ** 2
            z1 = (xs[:, :1] - m1) / sd1
            z2 = (xs[:, 1:2] - m2) / sd2
            q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / one_minus
            out = np.exp(-0.5 * q) / (2.0 * math.pi * sd1 * sd2 * np.sqrt(one_minus))
        else:
            bound = self.bind(points, floor=False)
            out = np.stack([bound(x) for x in xs]) if xs.shape[0] else np.empty((0, points.shape[0]))
        return np.maximum(out, DENSITY_FLOOR)

    def mixture(self, xs: np.ndarray, points: np.ndarray, weights: np.ndarray, chunk: int = 512) -> np.ndarray:
        """sum_t k(x | U_t) weights_t at every row of xs, in blocks of `chunk` rows."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.data_dim)
        weights = np.asarray(weights, dtype=float)
        out = np.empty(xs.shape[0])
        for start in range(0, xs.shape[0], chunk):
            out[start:start + chunk] = self.density_matrix(xs[start:start + chunk], points) @ weights
        return out

    def _bind_gaussian_iso(self, points: np.ndarray) -> BoundKernel:
        sigma2 = float(self.sigma2)
        const = (2.0 * math.pi * sigma2) ** (-self.dim / 2.0)

        def k(x: np.ndarray) -> np.ndarray:
            diff = points - np.reshape(x, (1, -1))
            sq = np.einsum("ij,ij->i", diff, diff)
            return const * np.exp(-sq / (2.0 * sigma2))

        return k

    def _bind_bivariate(self, points: np.ndarray) -> BoundKernel:
        m1, m2, s1, s2, rho = points.T
        if np.any(s1 <= 0) or np.any(s2 <= 0) or np.any(np.abs(rho) >= 1):
            raise ValueError("covariance is not positive definite (variances > 0, |rho| < 1 required)")
        sd1, sd2 = np.sqrt(s1), np.sqrt(s2)
        one_minus = 1.0 - rho ** 2
        norm = 1.0 / (2.0 * math.pi * sd1 * sd2 * np.sqrt(one_minus))

        def k(x: np.ndarray) -> np.ndarray:
            z1 = (x[0] - m1) / sd1
            z2 = (x[1] - m2) / sd2
            q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / one_minus
            return norm * np.exp(-0.5 * q)

        return k

    def _bind_angular(self, points: np.ndarray) -> BoundKernel:
        mu = points[:, :3]
        beta = np.full(points.shape[0], self.beta) if self.beta is not None else points[:, 3]
        if np.any(beta <= 0):
            raise ValueError("beta must be positive")
        if np.max(np.abs(np.linalg.norm(mu, axis=1) - 1.0)) > SPHERE_NORM_TOLERANCE:
            raise ValueError("sphere locations must have unit norm")
        beta_sq = beta ** 2
        scale = beta * INV_4PI

        # x^T Sigma^-1 x = 1 + (beta^2 - 1) (mu . x)^2 for Sigma = I + (beta^-2 - 1) mu mu^T
        def k(x: np.ndarray) -> np.ndarray:
            c2 = np.clip((mu @ x) ** 2, 0.0, 1.0)
            return scale * ((1.0 - c2) + beta_sq * c2) ** -1.5

        return k

    def _bind_marked(self, points: np.ndarray) -> BoundKernel:
        if not np.all(_correlations_valid(points)):
            raise ValueError("covariance is not positive definite")
        cov = assemble_marked_covariance(points)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ValueError(f"covariance is not positive definite: {e}") from e
        inv = np.linalg.inv(cov)
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        base = -0.5 * logdet - 1.5 * LOG_2PI
        mu = points[:, :3]
        extent, offset = self.extent, self.mark_offset

        def k(x: np.ndarray) -> np.ndarray:
            y, log_jac = _marked_transform(x, extent, offset)
            d = y[None, :] - mu
            q = np.einsum("ti,tij,tj->t", d, inv, d)
            return np.exp(base - 0.5 * q - log_jac)

        return k

    # -- forward simulation -------------------------------------------------

    def simulate(self, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one observation from k(. | U_t) for each row of points."""
        points = self._check_points(points)
        t = points.shape[0]
        if self.family == KernelFamily.GAUSSIAN_ISO:
            return points + math.sqrt(self.sigma2) * rng.standard_normal((t, self.dim))
        if self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            m1, m2, s1, s2, rho = points.T
            e1, e2 = rng.standard_normal(t), rng.standard_normal(t)
            x1 = m1 + np.sqrt(s1) * e1
            x2 = m2 + np.sqrt(s2) * (rho * e1 + np.sqrt(1.0 - rho ** 2) * e2)
            return np.column_stack([x1, x2])
        if self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE:
            beta = np.full(t, self.beta) if self.beta is not None else points[:, 3]
            return simulate_angular_gaussian(points[:, :3], beta, rng)
        cov = assemble_marked_covariance(points)
        chol = np.linalg.cholesky(cov)
        y = points[:, :3] + np.einsum("tij,tj->ti", chol, rng.standard_normal((t, 3)))
        tiny = 1e-12
        s = self.extent * np.clip(expit(y[:, :2]), tiny, 1.0 - tiny)
        mark = self.mark_offset + np.maximum(np.exp(y[:, 2]), tiny)
        return np.column_stack([s, mark])

    # -- reparametrisation used by the refresh module ----------------------

    def to_unconstrained(self, points: np.ndarray) -> np.ndarray:
        """Map mixing points to coordinates where a Student-t proposal is natural."""
        points = self._check_points(points).copy()
        if self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            points[:, 2:4] = np.log(points[:, 2:4])
        elif self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE and self.beta is None:
            points[:, 3] = np.log(points[:, 3])
        return points

    def from_unconstrained(self, z: np.ndarray) -> np.ndarray:
        """Inverse of to_unconstrained; sphere locations are projected back by normalisation."""
        points = np.atleast_2d(np.asarray(z, dtype=float)).copy()
        if self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            points[:, 2:4] = np.exp(points[:, 2:4])
        elif self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE:
            norms = np.linalg.norm(points[:, :3], axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                points[:, :3] = points[:, :3] / norms
            if self.beta is None:
                points[:, 3] = np.exp(points[:, 3])
        return points

    def valid_mask(self, points: np.ndarray) -> np.ndarray:
        """Rows lying in the kernel's valid parameter region."""
        points = self._check_points(points)
        ok = np.all(np.isfinite(points), axis=1)
        if self.family == KernelFamily.GAUSSIAN_BIVARIATE_FULL:
            ok &= (points[:, 2] > 0) & (points[:, 3] > 0) & (np.abs(points[:, 4]) < 1)
        elif self.family == KernelFamily.ANGULAR_GAUSSIAN_SPHERE:
            ok &= np.abs(np.linalg.norm(points[:, :3], axis=1) - 1.0) <= SPHERE_NORM_TOLERANCE
            if self.beta is None:
                ok &= points[:, 3] > 0
        elif self.family == KernelFamily.MARKED_PP_TRIVARIATE:
            ok &= _correlations_valid(points)
        return ok


def simulate_angular_gaussian(mu: np.ndarray, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw z ~ N(0, Sigma_{mu, beta}) and return z / |z| for each row of mu.

    Uses z = e + (1/beta - 1)(mu . e) mu with e standard normal, whose
    covariance is I + (beta^-2 - 1) mu mu^T.
    """
    mu = np.atleast_2d(mu)
    e = rng.standard_normal(mu.shape)
    proj = np.einsum("ij,ij->i", mu, e)
    z = e + ((1.0 / beta) - 1.0)[:, None] * proj[:, None] * mu
    return z / np.linalg.norm(z, axis=1, keepdims=True)
