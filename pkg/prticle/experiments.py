"""
Experiment runners: simulation studies comparing the particle engine with the
quadrature oracle, the five-parameter bivariate mixture with refresh, and
the marked point process fit.

Every runner is a pure function of its ExperimentConfig: each seed/T cell
owns its random streams, and all emitted tables use a fixed float format.
"""
import math
import time
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd
from loguru import logger
from scipy import stats
from scipy.integrate import trapezoid

from prticle.cache import OracleCache
from prticle.config import ExperimentConfig, Settings, get_settings
from prticle.errors import DataError, DegeneracyError
from prticle.ingest import ingest_longleaf
from prticle.kernels import KernelModel
from prticle.metrics import (
    FunctionEstimate,
    MixingGridEstimate,
    MixtureGridEstimate,
    ParticleMixtureEstimate,
    WeightedKDEEstimate,
    conditional_mark_density,
    empirical_mark_density,
    kl_divergence_mc,
    kl_divergence_quadrature,
    l1_distance,
    total_variation,
    weighted_quantiles,
)
from prticle.models import Dataset, WeightSchedule
from prticle.output import ensure_dir, write_json, write_manifest, write_table
from prticle.prticle_filter import ParticleSet, ess, init_particles, permutation_average, run_prticle
from prticle.quadrature import (
    GridDensity,
    make_grid,
    make_sphere_grid,
    permutation_average_quadrature,
    profile_structural_parameter,
    run_pr_quadrature,
)
from prticle.refresh import run_with_refresh
from prticle.sampling import (
    DATA_STREAM,
    METRIC_STREAM,
    PARTICLE_STREAM,
    TRUTH_STREAM,
    ProductSampler,
    RejectionSampler,
    RngStream,
    SphereLocationMixtureSampler,
    UniformBoxSampler,
    UniformSphereSampler,
    sample_mixture_data,
    stream,
)
from prticle.utils import log_execution_time, median, run_jobs

# Mixing support of the Gaussian location mixtures.
LOCATION_SUPPORT = (0.0, 10.0)
# x-grid for the one-dimensional KL quadrature.
KL_GRID = ((-4.0, 14.0), 2000)

SPHERE_CENTERS = ((0.0, 0.0, 1.0), (math.sqrt(3.0) / 2.0, 0.0, -0.5))
SPHERE_SPREAD = 0.25
SPHERE_POINT_BETA = 0.1
SPHERE_BETA_BOUNDS = (0.0, 0.5)
SPHERE_BETA_CANDIDATES = tuple(np.round(np.linspace(0.05, 0.5, 10), 6))

BIVARIATE_BOX = ((-5.0, 15.0), (0.0, 20.0), (0.0, 6.0), (0.0, 15.0), (0.0, 1.0))
BIVARIATE_NAMES = ["mu1", "mu2", "sigma1_sq", "sigma2_sq", "rho"]
BIVARIATE_TRUTH_DRAWS = 10_000
QUANTILE_PROBS = tuple(np.round(np.arange(1, 10) / 10.0, 1))

MARKED_LOCATIONS = ((81.0, 120.0), (100.0, 100.0), (105.0, 140.0), (185.0, 87.0))
MARKED_MEAN_BOUNDS = (-4.0, 4.0)
MARKED_LOGVAR_BOUNDS = (math.log(0.05), math.log(8.0))
MARKED_CORR_BOUNDS = (-0.9, 0.9)
MARK_GRID = np.linspace(2.0, 80.0, 401)[1:]
NEIGHBOURHOOD_RADIUS = 30.0
LARGE_MARK = 30.0


def location_truth(dim: int) -> ProductSampler:
    """Scaled beta truth on [0, 10]^d: Beta(10, 5) and, for d = 2, Beta(5, 10)."""
    lo, hi = LOCATION_SUPPORT
    marginals = [stats.beta(10, 5, loc=lo, scale=hi - lo), stats.beta(5, 10, loc=lo, scale=hi - lo)]
    return ProductSampler(marginals[:dim])


def bivariate_truth() -> ProductSampler:
    """Independent N(5, 3^2), N(10, 3^2), Gamma(1, 1), Gamma(5, 1), Beta(10, 5)."""
    return ProductSampler(
        [
            stats.norm(5.0, 3.0),
            stats.norm(10.0, 3.0),
            stats.gamma(1.0, scale=1.0),
            stats.gamma(5.0, scale=1.0),
            stats.beta(10.0, 5.0),
        ],
        names=BIVARIATE_NAMES,
    )


def sphere_truth(point_beta: float = SPHERE_POINT_BETA) -> SphereLocationMixtureSampler:
    return SphereLocationMixtureSampler(SPHERE_CENTERS, spread=SPHERE_SPREAD, point_beta=point_beta)


def marked_prior(kernel: KernelModel) -> RejectionSampler:
    """Uniform box on the marked-pp mixing layout with positive-definiteness rejection."""
    bounds = [MARKED_MEAN_BOUNDS] * 3 + [MARKED_LOGVAR_BOUNDS] * 3
    if not kernel.reduced:
        bounds += [MARKED_CORR_BOUNDS] * 3
    return RejectionSampler(UniformBoxSampler(bounds), kernel.valid_mask)


def output_dir(config: ExperimentConfig, settings: Settings) -> Path:
    return ensure_dir(config.output_dir or Path(settings.output_directory) / config.experiment)


def _location_grid(dim: int, resolution: int) -> GridDensity:
    names = ["u1", "u2"][:dim]
    return make_grid([LOCATION_SUPPORT] * dim, resolution, coordinate_names=names)


def _oracle_fit(
    data: Dataset,
    grid: GridDensity,
    schedule: WeightSchedule,
    kernel: KernelModel,
    cache: Optional[OracleCache],
    n_perms: int,
    seed: int,
) -> GridDensity:
    if n_perms > 1:
        return permutation_average_quadrature(data, grid, schedule, kernel, n_perms, seed)
    if cache is not None:
        return cache.run_pr_quadrature(data, grid, schedule, kernel)[0]
    return run_pr_quadrature(data, grid, schedule, kernel)[0]


def _particle_fit(
    data: Dataset,
    sampler,
    T: int,
    schedule: WeightSchedule,
    kernel: KernelModel,
    config: ExperimentConfig,
    path: tuple[int, ...],
) -> ParticleSet:
    state = init_particles(
        sampler,
        T,
        config.seed,
        stream=RngStream(seed=config.seed, stream_id=PARTICLE_STREAM, path=path),
        coordinate_names=kernel.coordinate_names,
    )
    if config.n_perms > 1:
        return permutation_average(data, state, schedule, kernel, config.n_perms, config.seed, min_ess=config.min_ess)
    fitted, _ = run_prticle(data, state, schedule, kernel, min_ess=config.min_ess)
    return fitted


# ---------------------------------------------------------------------------
# Example 1: Gaussian location mixtures, d = 1, 2
# ---------------------------------------------------------------------------

@log_execution_time
def run_example1(
    config: ExperimentConfig,
    settings: Optional[Settings] = None,
    cache: Optional[OracleCache] = None,
) -> dict[str, Any]:
    """
    ESS and K(m_n, m_hat_n) of the particle fit against the quadrature fit
    over the T ladder, with medians over seeds.
    """
    settings = settings or get_settings()
    if config.experiment not in ("example1-d1", "example1-d2"):
        raise ValueError(f"run_example1 cannot run {config.experiment}")
    config = config.with_defaults()
    dim = 1 if config.experiment == "example1-d1" else 2
    out = output_dir(config, settings)
    kernel = KernelModel.gaussian_iso(config.sigma2, dim=dim)
    schedule = WeightSchedule(gamma=config.gamma)
    truth = location_truth(dim)
    prior = UniformBoxSampler([LOCATION_SUPPORT] * dim)

    def seed_job(s: int) -> Callable[[], dict[str, Any]]:
        def run() -> dict[str, Any]:
            data = sample_mixture_data(truth, kernel, config.n, stream(config.seed, DATA_STREAM, s))
            grid = _location_grid(dim, config.grid_resolution)
            oracle = _oracle_fit(data, grid, schedule, kernel, cache, config.n_perms, config.seed)
            reference = MixtureGridEstimate(oracle, kernel)
            if dim == 1:
                x_grid = make_grid([KL_GRID[0]], KL_GRID[1], coordinate_names=["x"])
                ref_values = None
                mc_points = None
            else:
                x_grid = None
                mc_points = reference.sample(config.n_mc, stream(config.seed, METRIC_STREAM, s))
                ref_values = reference.evaluate(mc_points)

            rows = []
            fits = {}
            for T in config.T_list:
                fitted = _particle_fit(data, prior, T, schedule, kernel, config, (s, T))
                approx = ParticleMixtureEstimate(fitted, kernel)
                if dim == 1:
                    kl = kl_divergence_quadrature(reference, approx, x_grid)
                else:
                    # reference values at Z are shared by every T of the ladder
                    kl = kl_divergence_mc(FunctionEstimate(lambda _: ref_values), approx, mc_points, config.n_mc)
                state_ess = ess(fitted)
                rows.append(
                    {"seed_index": s, "T": T, "ess": state_ess, "ess_ratio": state_ess / T,
                     "kl": kl.value, "kl_std_error": kl.std_error, "flagged_points": kl.flagged_points}
                )
                fits[T] = fitted
            logger.info(f"{config.experiment} seed cell {s} done")
            return {"rows": rows, "oracle": oracle, "fits": fits, "x_grid": x_grid}

        return run

    results = run_jobs({s: seed_job(s) for s in range(config.n_seeds)}, max_workers=settings.max_workers)
    cells = pd.DataFrame([row for s in sorted(results) for row in results[s]["rows"]])
    table = (
        cells.groupby("T", sort=True)
        .agg(median_ess=("ess", "median"), median_ess_ratio=("ess_ratio", "median"), median_kl=("kl", "median"))
        .reset_index()
    )
    write_table(cells, out / "cells.csv")
    write_table(table, out / "table.csv")

    # plot-ready mixture densities for the first seed at the largest T
    first = results[0]
    t_max = max(config.T_list)
    reference = MixtureGridEstimate(first["oracle"], kernel)
    approx = ParticleMixtureEstimate(first["fits"][t_max], kernel)
    if dim == 1:
        xs = first["x_grid"].points
        curves = pd.DataFrame({"x": xs[:, 0]})
    else:
        lo, hi = LOCATION_SUPPORT
        axis = np.linspace(lo - 2.0, hi + 2.0, 60)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        xs = np.column_stack([xx.ravel(), yy.ravel()])
        curves = pd.DataFrame({"x1": xs[:, 0], "x2": xs[:, 1]})
    curves["m_pr"] = reference.evaluate(xs)
    curves["m_prticle"] = approx.evaluate(xs)
    write_table(curves, out / "mixture_density.csv")
    first["oracle"].to_csv(out / "oracle_mixing_density.csv")

    return {
        "experiment": config.experiment,
        "n": config.n,
        "sigma2": config.sigma2,
        "table": table.to_dict(orient="records"),
    }


# ---------------------------------------------------------------------------
# Example 2: angular Gaussian mixture on the sphere
# ---------------------------------------------------------------------------

@log_execution_time
def run_example2(config: ExperimentConfig, settings: Optional[Settings] = None) -> dict[str, Any]:
    """
    Particle fit over (mu, beta) against a quadrature fit over mu with beta
    chosen by PR marginal likelihood; densities emitted on a lat-long mesh
    split into hemispheres.

    With `sphere_beta` set, the data's point-mass concentration and both
    fits use that fixed beta; beta = 1 makes every kernel uniform, so the
    fitted density must be 1 / (4 pi) everywhere.
    """
    settings = settings or get_settings()
    config = config.with_defaults()
    out = output_dir(config, settings)
    schedule = WeightSchedule(gamma=config.gamma)
    fixed_beta = config.sphere_beta
    kernel = KernelModel.angular(beta=fixed_beta)
    # the truth carries its concentration as a fourth coordinate
    truth = sphere_truth(SPHERE_POINT_BETA if fixed_beta is None else fixed_beta)
    data = sample_mixture_data(truth, KernelModel.angular(), config.n, stream(config.seed, DATA_STREAM))
    prior = UniformSphereSampler(SPHERE_BETA_BOUNDS if fixed_beta is None else None)

    try:
        if config.refresh_rounds:
            fitted, diagnostics = run_with_refresh(
                data, prior, config.T, schedule, kernel, df=config.refresh_df, inflate=config.refresh_inflate,
                seed=config.seed, rounds=config.refresh_rounds, refresh_T=config.refresh_T, min_ess=config.min_ess,
            )
            refresh = diagnostics.to_dict()
        else:
            fitted = _particle_fit(data, prior, config.T, schedule, kernel, config, ())
            refresh = None
    except DegeneracyError:
        if not config.refresh_rounds:
            logger.error("Sphere fit degenerated; rerun with refresh_rounds: 1 or a larger T")
        raise

    # quadrature comparison: beta is a structural parameter profiled on a grid
    n_theta = max(config.grid_resolution // 2, 2)
    betas = SPHERE_BETA_CANDIDATES if fixed_beta is None else (fixed_beta,)
    candidates = [KernelModel.angular(beta=float(b)) for b in betas]
    best, loglik = profile_structural_parameter(
        data, lambda: make_sphere_grid(n_theta, 2 * n_theta), schedule, candidates
    )
    pr_kernel = candidates[best]
    oracle, _ = run_pr_quadrature(data, make_sphere_grid(n_theta, 2 * n_theta), schedule, pr_kernel)

    mesh = make_sphere_grid(config.grid_resolution, 2 * config.grid_resolution)
    m_prticle = ParticleMixtureEstimate(fitted, kernel).evaluate(mesh.points)
    m_pr = MixtureGridEstimate(oracle, pr_kernel).evaluate(mesh.points)
    frame = pd.DataFrame(mesh.points, columns=["x", "y", "z"])
    frame.insert(0, "phi", np.arctan2(frame["y"], frame["x"]) % (2.0 * math.pi))
    frame.insert(0, "theta", np.arccos(np.clip(frame["z"], -1.0, 1.0)))
    frame["cell_weight"] = mesh.cell_weights
    frame["m_prticle"] = m_prticle
    frame["m_pr"] = m_pr
    write_table(frame[frame["z"] >= 0].reset_index(drop=True), out / "sphere_density_north.csv")
    write_table(frame[frame["z"] < 0].reset_index(drop=True), out / "sphere_density_south.csv")
    fitted.save(out, "particles")

    return {
        "experiment": config.experiment,
        "n": config.n,
        "T": config.T,
        "ess": ess(fitted),
        "ess_ratio": ess(fitted) / fitted.T,
        "prticle_mesh_integral": float(np.sum(m_prticle * mesh.cell_weights)),
        "pr_mesh_integral": float(np.sum(m_pr * mesh.cell_weights)),
        "l1_mixture_on_mesh": float(np.sum(np.abs(m_prticle - m_pr) * mesh.cell_weights)),
        "max_uniform_deviation": float(np.max(np.abs(m_prticle * 4.0 * math.pi - 1.0))),
        "sphere_beta": fixed_beta,
        "pr_beta": pr_kernel.beta,
        "pr_beta_profile": dict(zip([float(b) for b in betas], loglik.tolist())),
        "refresh": refresh,
    }


# ---------------------------------------------------------------------------
# Example 3: five-parameter bivariate Gaussian mixture with refresh
# ---------------------------------------------------------------------------

@log_execution_time
def run_example3(config: ExperimentConfig, settings: Optional[Settings] = None) -> dict[str, Any]:
    """
    Refreshed particle fit over (mu1, mu2, sigma1^2, sigma2^2, rho) per seed:
    ESS of both passes, Monte Carlo KL against the simulated truth, weighted
    quantile tables, and a contour grid of the fitted mixture.
    """
    settings = settings or get_settings()
    config = config.with_defaults()
    out = output_dir(config, settings)
    kernel = KernelModel.bivariate()
    schedule = WeightSchedule(gamma=config.gamma)
    truth = bivariate_truth()
    prior = UniformBoxSampler(BIVARIATE_BOX, open_lower=(2, 3))

    def seed_job(s: int) -> Callable[[], dict[str, Any]]:
        def run() -> dict[str, Any]:
            data = sample_mixture_data(truth, kernel, config.n, stream(config.seed, DATA_STREAM, s))
            fitted, diagnostics = run_with_refresh(
                data, prior, config.T, schedule, kernel, df=config.refresh_df, inflate=config.refresh_inflate,
                seed=config.seed, rounds=config.refresh_rounds, refresh_T=config.refresh_T,
                min_ess=config.min_ess, stream_path=(s,),
            )
            truth_draws = truth.sample(BIVARIATE_TRUTH_DRAWS, stream(config.seed, TRUTH_STREAM, s))
            reference = ParticleMixtureEstimate(
                ParticleSet(particles=truth_draws, deltas=np.ones(BIVARIATE_TRUTH_DRAWS)), kernel
            )
            z = sample_mixture_data(truth, kernel, config.n_mc, stream(config.seed, METRIC_STREAM, s))
            kl = kl_divergence_mc(reference, ParticleMixtureEstimate(fitted, kernel), z, config.n_mc)
            quantiles = []
            true_q = truth.quantiles(QUANTILE_PROBS)
            for j, name in enumerate(BIVARIATE_NAMES):
                est = weighted_quantiles(fitted.particles[:, j], fitted.deltas, QUANTILE_PROBS)
                for p, e, t in zip(QUANTILE_PROBS, est, true_q[name]):
                    quantiles.append({"seed_index": s, "coordinate": name, "prob": p, "prticle": e, "truth": t})
            logger.info(f"example3 seed cell {s}: ESS {diagnostics.ess_pass1:.1f} -> {diagnostics.ess_pass2}, KL {kl.value:.4f}")
            return {"diagnostics": diagnostics, "kl": kl, "quantiles": quantiles, "fitted": fitted, "reference": reference}

        return run

    results = run_jobs({s: seed_job(s) for s in range(config.n_seeds)}, max_workers=settings.max_workers)
    seeds = sorted(results)
    cells = pd.DataFrame(
        [
            {
                "seed_index": s,
                "ess_pass1": results[s]["diagnostics"].ess_pass1,
                "ess_pass2": results[s]["diagnostics"].ess_pass2,
                "kl": results[s]["kl"].value,
                "kl_std_error": results[s]["kl"].std_error,
            }
            for s in seeds
        ]
    )
    write_table(cells, out / "cells.csv")
    quantiles = pd.DataFrame([row for s in seeds for row in results[s]["quantiles"]])
    write_table(quantiles, out / "quantiles.csv")

    first = results[seeds[0]]
    axis1 = np.linspace(-5.0, 15.0, config.grid_resolution)
    axis2 = np.linspace(0.0, 20.0, config.grid_resolution)
    xx, yy = np.meshgrid(axis1, axis2, indexing="ij")
    xs = np.column_stack([xx.ravel(), yy.ravel()])
    contour = pd.DataFrame({"x1": xs[:, 0], "x2": xs[:, 1]})
    contour["m_prticle"] = ParticleMixtureEstimate(first["fitted"], kernel).evaluate(xs)
    contour["m_true"] = first["reference"].evaluate(xs)
    write_table(contour, out / "mixture_contour.csv")
    write_json({s: results[s]["diagnostics"].to_dict() for s in seeds}, out / "refresh_diagnostics.json")

    mu1 = quantiles[quantiles["coordinate"] == "mu1"]
    return {
        "experiment": config.experiment,
        "n": config.n,
        "T": config.T,
        "median_ess_pass1": median(cells["ess_pass1"]),
        "median_ess_pass2": median(cells["ess_pass2"]) if cells["ess_pass2"].notna().all() else None,
        "median_kl": median(cells["kl"]),
        "median_mu1_quantile_error": median((mu1["prticle"] - mu1["truth"]).abs()),
    }


# ---------------------------------------------------------------------------
# Convergence of the particle estimate to the quadrature oracle
# ---------------------------------------------------------------------------

@log_execution_time
def run_convergence_study(
    config: ExperimentConfig,
    settings: Optional[Settings] = None,
    cache: Optional[OracleCache] = None,
) -> dict[str, Any]:
    """L1 between the weighted-KDE particle estimate and the quadrature p_n across the T ladder."""
    settings = settings or get_settings()
    config = config.with_defaults()
    out = output_dir(config, settings)
    kernel = KernelModel.gaussian_iso(config.sigma2, dim=1)
    schedule = WeightSchedule(gamma=config.gamma)
    data = sample_mixture_data(location_truth(1), kernel, config.n, stream(config.seed, DATA_STREAM))
    grid = _location_grid(1, config.grid_resolution)
    oracle = _oracle_fit(data, grid, schedule, kernel, cache, 1, config.seed)
    oracle_estimate = MixingGridEstimate(oracle)
    prior = UniformBoxSampler([LOCATION_SUPPORT])

    def cell_job(T: int, s: int) -> Callable[[], dict[str, Any]]:
        def run() -> dict[str, Any]:
            fitted = _particle_fit(data, prior, T, schedule, kernel, config.model_copy(update={"n_perms": 1}), (s, T))
            l1 = l1_distance(WeightedKDEEstimate(fitted), oracle_estimate, oracle)
            return {"T": T, "seed_index": s, "l1": l1, "ess": ess(fitted)}

        return run

    jobs = {(T, s): cell_job(T, s) for T in config.T_list for s in range(config.n_seeds)}
    results = run_jobs(jobs, max_workers=settings.max_workers)
    cells = pd.DataFrame([results[key] for key in sorted(results)])
    table = cells.groupby("T", sort=True).agg(median_l1=("l1", "median"), median_ess=("ess", "median")).reset_index()
    write_table(cells, out / "cells.csv")
    write_table(table, out / "table.csv")
    oracle.to_csv(out / "oracle_mixing_density.csv")
    return {"experiment": config.experiment, "n": config.n, "table": table.to_dict(orient="records")}


# ---------------------------------------------------------------------------
# Marked point process
# ---------------------------------------------------------------------------

def fit_marked_pp(data: Dataset, config: ExperimentConfig, variant: str) -> tuple[ParticleSet, dict[str, Any]]:
    """Refreshed particle fit of the trivariate marked-pp mixture for one variant."""
    kernel = KernelModel.marked_pp(reduced=variant == "reduced")
    schedule = WeightSchedule(gamma=config.gamma)
    fitted, diagnostics = run_with_refresh(
        data, marked_prior(kernel), config.T, schedule, kernel, df=config.refresh_df,
        inflate=config.refresh_inflate, seed=config.seed, rounds=config.refresh_rounds,
        refresh_T=config.refresh_T, min_ess=config.min_ess,
    )
    return fitted, diagnostics.to_dict()


def mark_mass_above(curve: np.ndarray, threshold: float = LARGE_MARK) -> float:
    """Probability mass of a normalised curve on MARK_GRID above threshold."""
    keep = MARK_GRID >= threshold
    return float(trapezoid(curve[keep], MARK_GRID[keep]))


def location_label(s: tuple[float, float]) -> str:
    return f"{int(s[0])}_{int(s[1])}"


# locations whose large-tree mass is contrasted: a mature stand against a young one
MASS_CONTRAST = (location_label(MARKED_LOCATIONS[1]), location_label(MARKED_LOCATIONS[2]))


def marked_variant_curves(data: Dataset, config: ExperimentConfig, variant: str, out: Path) -> dict[str, Any]:
    """
    Fit one variant and write its conditional mark densities, with the
    radius-30 empirical overlay, for every reference location.
    """
    kernel = KernelModel.marked_pp(reduced=variant == "reduced")
    fitted, diagnostics = fit_marked_pp(data, config, variant)
    fitted.save(out, f"particles_{variant}")

    locations = {}
    for s in MARKED_LOCATIONS:
        curve = conditional_mark_density(s, MARK_GRID, fitted, kernel)
        frame = pd.DataFrame({"mark": MARK_GRID, "density": curve})
        try:
            frame["empirical"] = empirical_mark_density(data, s, NEIGHBOURHOOD_RADIUS, MARK_GRID)
            empirical_mass = mark_mass_above(frame["empirical"].to_numpy())
        except DataError:
            frame["empirical"] = np.nan
            empirical_mass = None
        label = location_label(s)
        write_table(frame, out / f"conditional_{variant}_s{label}.csv")
        locations[label] = {
            "total_variation": total_variation(curve),
            "mass_above_30": mark_mass_above(curve),
            "empirical_mass_above_30": empirical_mass,
            "integral": float(trapezoid(curve, MARK_GRID)),
        }

    return {
        "variant": variant,
        "T": fitted.T,
        "ess": ess(fitted),
        "refresh": diagnostics,
        "prior": marked_prior(kernel).describe(),
        "locations": locations,
    }


def compare_marked_variants(full: dict[str, Any], reduced: dict[str, Any]) -> tuple[pd.DataFrame, dict[str, Any]]:
    """
    Smoothness of the full against the reduced conditional curves, by total
    variation per location, and the large-tree mass contrast between the
    MASS_CONTRAST locations under each variant.

    Returns:
        (one row per location, JSON summary)
    """
    rows = []
    for label, summary in full["locations"].items():
        other = reduced["locations"][label]
        rows.append(
            {
                "location": label,
                "tv_full": summary["total_variation"],
                "tv_reduced": other["total_variation"],
                "mass_above_30_full": summary["mass_above_30"],
                "mass_above_30_reduced": other["mass_above_30"],
            }
        )
    frame = pd.DataFrame(rows)
    first, second = MASS_CONTRAST
    contrast = {}
    for name, fit in (("full", full), ("reduced", reduced)):
        a = fit["locations"][first]["mass_above_30"]
        b = fit["locations"][second]["mass_above_30"]
        contrast[name] = {first: a, second: b, "ordered": bool(a > b)}
    summary = {
        "full_smoother": dict(zip(frame["location"], (frame["tv_full"] < frame["tv_reduced"]).tolist())),
        "full_smoother_everywhere": bool((frame["tv_full"] < frame["tv_reduced"]).all()),
        "mass_contrast": contrast,
    }
    logger.info(
        f"Marked-pp variants: full smoother at {sum(summary['full_smoother'].values())}/{len(frame)} locations, "
        f"mass above {LARGE_MARK:g} at {first} vs {second}: {contrast['full'][first]:.3f} vs {contrast['full'][second]:.3f}"
    )
    return frame, summary


@log_execution_time
def run_marked_pp(config: ExperimentConfig, settings: Optional[Settings] = None) -> dict[str, Any]:
    """
    Conditional mark densities at the four reference locations for the
    configured variant. With `compare_variants`, both variants are fitted on
    the same data and variant_comparison.csv reports their total variation
    and large-tree masses side by side.
    """
    settings = settings or get_settings()
    config = config.with_defaults()
    out = output_dir(config, settings)
    data = ingest_longleaf(config.data_path)
    variants = ["full", "reduced"] if config.compare_variants else [config.variant]

    def variant_job(variant: str) -> Callable[[], dict[str, Any]]:
        return lambda: marked_variant_curves(data, config, variant, out)

    fits = run_jobs({v: variant_job(v) for v in variants}, max_workers=settings.max_workers)
    primary = fits[config.variant]
    results = {
        "experiment": config.experiment,
        "variant": config.variant,
        "n": data.n,
        "lambda_hat": data.n,
        "ingestion": data.source,
        "T": config.T,
        "ess": primary["ess"],
        "refresh": primary["refresh"],
        "prior": primary["prior"],
        "locations": primary["locations"],
    }
    if config.compare_variants:
        frame, summary = compare_marked_variants(fits["full"], fits["reduced"])
        write_table(frame, out / "variant_comparison.csv")
        results["variants"] = {v: fits[v] for v in variants}
        results["comparison"] = summary
    return results


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, settings: Optional[Settings] = None) -> dict[str, Any]:
    """
    Run the configured experiment and write results.json plus manifest.json
    to its output directory.
    """
    settings = settings or get_settings()
    config = config.with_defaults()
    start = time.perf_counter()
    cache = OracleCache(settings.cache_directory, enabled=settings.use_oracle_cache)
    try:
        if config.experiment in ("example1-d1", "example1-d2"):
            results = run_example1(config, settings, cache)
        elif config.experiment == "example2-sphere":
            results = run_example2(config, settings)
        elif config.experiment == "example3-5dim":
            results = run_example3(config, settings)
        elif config.experiment == "convergence-study":
            results = run_convergence_study(config, settings, cache)
        else:
            results = run_marked_pp(config, settings)
    finally:
        cache.close()
    out = output_dir(config, settings)
    write_json(results, out / "results.json")
    # sampler choices that are not config fields go into the manifest too
    extra = {"prior": results["prior"]} if "prior" in results else None
    write_manifest(out, config.manifest_dict(), time.perf_counter() - start, extra)
    return results
