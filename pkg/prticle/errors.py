"""Exception hierarchy shared by the engines and the CLI."""

from typing import Any, Optional


class PRticleError(Exception):
    """Base class for all library errors. `exit_code` is used by the CLI."""

    exit_code: int = 1


class ConfigError(PRticleError):
    """Invalid experiment configuration."""

    exit_code = 2


class DataError(PRticleError):
    """Malformed or out-of-domain input data."""

    exit_code = 3


class LocationOutsideSupportError(DataError):
    """Every mixture component has negligible location density at the query point."""


class DegeneracyError(PRticleError):
    """
    Numerical degeneracy of a PR run.

    Raised when the normalizing constant underflows or the particle cloud
    collapses. Carries the 1-based step index at which it happened, the
    permutation index when raised inside permutation averaging, and any
    diagnostics gathered before the failure.
    """

    exit_code = 4

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        permutation: Optional[int] = None,
        diagnostics: Optional[dict[str, Any]] = None,
    ):
        self.message = message
        self.step = step
        self.permutation = permutation
        self.diagnostics = diagnostics or {}
        details = []
        if step is not None:
            details.append(f"step={step}")
        if permutation is not None:
            details.append(f"permutation={permutation}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class SamplerExhaustedError(DegeneracyError):
    """Rejection sampling ran out of its retry budget."""


class RefreshError(DegeneracyError):
    """The refreshed (second-pass) run degenerated or the moments were unusable."""
