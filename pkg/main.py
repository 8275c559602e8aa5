"""
PRticle command line interface.

Runs the predictive recursion experiments from a flat YAML config and/or
flags, writing results.json, manifest.json and plot-ready CSVs to the
output directory. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical degeneracy.
"""

import sys
from functools import wraps
from typing import Any, Callable, Optional

import click
from loguru import logger

from prticle import __version__
from prticle.config import get_settings, load_experiment_config
from prticle.errors import PRticleError
from prticle.experiments import run_experiment
from prticle.utils import configure_logging


def common_options(func: Callable) -> Callable:
    """Flags shared by every experiment command; they override config file values."""

    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Flat YAML config")
    @click.option("--seed", type=int, default=None, help="Master seed")
    @click.option("--out", "output_dir", type=click.Path(file_okay=False), default=None, help="Output directory")
    @click.option("--T", "T", type=int, default=None, help="Particle count")
    @wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)

    return wrapper


def execute(experiment: Optional[str], config_path: Optional[str], **overrides: Any) -> None:
    """Load the config, run it, and map library errors onto exit codes."""
    settings = get_settings()
    configure_logging(
        log_level=settings.log_level,
        rotation=settings.log_rotation,
        retention=settings.log_retention,
        directory=settings.log_directory,
        to_file=settings.log_to_file,
    )
    if experiment is not None:
        overrides["experiment"] = experiment
    try:
        config = load_experiment_config(config_path, overrides)
        logger.info(f"Running {config.experiment} (seed={config.seed})")
        results = run_experiment(config, settings)
    except PRticleError as e:
        logger.error(
            f"{type(e).__name__}: {e}"
            + (f" | diagnostics={e.diagnostics}" if getattr(e, "diagnostics", None) else "")
        )
        sys.exit(e.exit_code)
    click.echo(f"{config.experiment} finished: {sorted(results)}")


@click.group()
@click.version_option(__version__, prog_name="prticle")
def cli() -> None:
    """Predictive recursion with quadrature and particle-filter engines."""


@cli.command()
@common_options
@click.option("--variant", type=click.Choice(["full", "reduced"]), default=None)
def fit(config_path, seed, output_dir, T, variant):
    """Run whichever experiment the config file names."""
    if config_path is None:
        raise click.UsageError("fit needs --config")
    execute(None, config_path, seed=seed, output_dir=output_dir, T=T, variant=variant)


@cli.command()
@common_options
@click.option("--dim", type=click.Choice(["1", "2"]), default="1", show_default=True)
def example1(config_path, seed, output_dir, T, dim):
    """Gaussian location mixtures in one or two dimensions."""
    execute(f"example1-d{dim}", config_path, seed=seed, output_dir=output_dir, T=T)


@cli.command()
@common_options
@click.option("--beta", "sphere_beta", type=float, default=None, help="Fix the concentration; 1 is the uniform sanity run")
def example2(config_path, seed, output_dir, T, sphere_beta):
    """Angular Gaussian mixture on the unit sphere."""
    execute("example2-sphere", config_path, seed=seed, output_dir=output_dir, T=T, sphere_beta=sphere_beta)


@cli.command()
@common_options
def example3(config_path, seed, output_dir, T):
    """Five-parameter bivariate Gaussian mixture with refresh."""
    execute("example3-5dim", config_path, seed=seed, output_dir=output_dir, T=T)


@cli.command()
@common_options
def convergence(config_path, seed, output_dir, T):
    """L1 convergence of the particle estimate to the quadrature oracle."""
    execute("convergence-study", config_path, seed=seed, output_dir=output_dir, T=T)


@cli.command()
@common_options
@click.option("--variant", type=click.Choice(["full", "reduced"]), default=None)
@click.option("--data", "data_path", type=click.Path(dir_okay=False), default=None, help="Longleaf CSV (x,y,diameter)")
@click.option("--compare", is_flag=True, default=False, help="Fit both variants and compare them")
def markedpp(config_path, seed, output_dir, T, variant, data_path, compare):
    """Marked point process fit with conditional mark densities."""
    execute(
        "marked-pp", config_path, seed=seed, output_dir=output_dir, T=T, variant=variant, data_path=data_path,
        compare_variants=compare or None,
    )


if __name__ == "__main__":
    cli()
