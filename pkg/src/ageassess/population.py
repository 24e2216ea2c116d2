"""Discretized population age profiles.

Ages are discretized onto a grid placed at equal quantile spacing of a target
distribution F, so that a uniform weight vector over the grid represents F
itself.  Weights carry a symmetric Dirichlet prior whose concentration
controls how far profiles may wander from the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .errors import DataError

__all__ = [
    "AgeGrid",
    "ProfilePrior",
    "truncated_shifted_gamma_cdf",
    "build_grid",
    "default_grid",
    "uniform_profile",
    "validate_profile",
    "sample_prior_profile",
    "profile_quantile_bands",
    "BandTable",
]


@dataclass(frozen=True)
class AgeGrid:
    """Ordered ages x_1 < ... < x_T with a record of the target CDF.

    When built from a distribution family, F(x_i) = i/T for the stated F and
    x_T sits on the upper truncation bound.
    """

    ages: tuple
    descriptor: str = "custom"

    def __post_init__(self):
        ages = tuple(float(a) for a in self.ages)
        if len(ages) < 2:
            raise DataError("an age grid needs at least two ages")
        if any(b <= a for a, b in zip(ages, ages[1:])):
            raise DataError("grid ages must be strictly increasing")
        object.__setattr__(self, "ages", ages)

    @property
    def size(self) -> int:
        return len(self.ages)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ages, dtype=float)

    def shifted(self, offset: float) -> "AgeGrid":
        return AgeGrid(
            tuple(a + offset for a in self.ages),
            descriptor=f"{self.descriptor} shifted by {offset:g}",
        )


def truncated_shifted_gamma_cdf(shape: float, rate: float, shift: float,
                                lower: float, upper: float):
    """CDF of shift + Gamma(shape, rate) truncated to [lower, upper].

    Computed as (G(x - shift) - G(lower - shift)) / (G(upper - shift) -
    G(lower - shift)) with G the unshifted Gamma CDF.
    """
    if upper <= lower:
        raise DataError("upper truncation bound must exceed the lower bound")
    g_lo = gammainc(shape, max(lower - shift, 0.0) * rate)
    g_hi = gammainc(shape, (upper - shift) * rate)
    span = g_hi - g_lo
    if span <= 0:
        raise DataError("truncation interval carries no Gamma mass")

    def cdf(x):
        x = np.asarray(x, dtype=float)
        inner = gammainc(shape, np.clip(x - shift, 0.0, None) * rate)
        return np.clip((inner - g_lo) / span, 0.0, 1.0)

    return cdf


def build_grid(cdf, lower: float, upper: float, size: int,
               descriptor: str = "custom", tol: float = 1e-10) -> AgeGrid:
    """Place ``size`` ages so that cdf(x_i) = i/size, by bisection.

    ``cdf`` must be monotone on [lower, upper] with cdf(lower) = 0 and
    cdf(upper) = 1.  Bisection runs until the CDF value is within ``tol`` of
    its target; the last age is pinned to the upper bound.
    """
    if size < 2:
        raise DataError("grid size must be at least 2")
    ages = np.empty(size)
    for i in range(1, size):
        target = i / size
        lo, hi = lower, upper
        x = 0.5 * (lo + hi)
        for _ in range(200):
            x = 0.5 * (lo + hi)
            f = float(cdf(x))
            if abs(f - target) <= tol:
                break
            if f < target:
                lo = x
            else:
                hi = x
        else:
            raise DataError(f"bisection failed to localize quantile {target}")
        ages[i - 1] = x
    ages[size - 1] = upper
    if not np.all(np.diff(ages) > 0):
        raise DataError("quantile grid is not strictly increasing; "
                        "is the target CDF continuous on the interval?")
    return AgeGrid(tuple(ages), descriptor=descriptor)


def default_grid(size: int = 100) -> AgeGrid:
    """The standard grid: Gamma(4, 1) + 15 truncated to [15, 30].

    With ``size`` = 100 this puts about 35 ages below 18.
    """
    cdf = truncated_shifted_gamma_cdf(4.0, 1.0, 15.0, 15.0, 30.0)
    return build_grid(
        cdf, 15.0, 30.0, size,
        descriptor=f"gamma(shape=4, rate=1) + 15, truncated to [15, 30], T={size}",
    )


@dataclass(frozen=True)
class ProfilePrior:
    """Symmetric Dirichlet(alpha/T, ..., alpha/T) prior over grid weights."""

    concentration: float
    grid: AgeGrid

    def __post_init__(self):
        if not self.concentration > 0:
            raise DataError("Dirichlet concentration must be positive")

    @property
    def per_cell(self) -> float:
        return self.concentration / self.grid.size


def uniform_profile(grid: AgeGrid) -> np.ndarray:
    """The starting-point profile: uniform weights on the quantile grid,
    i.e. the target distribution itself."""
    return np.full(grid.size, 1.0 / grid.size)


def validate_profile(weights, grid: AgeGrid, tol: float = 1e-12) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (grid.size,):
        raise DataError(f"profile length {weights.shape} does not match grid size {grid.size}")
    if np.any(weights < 0):
        raise DataError("profile weights must be nonnegative")
    if abs(weights.sum() - 1.0) > tol:
        raise DataError(f"profile weights sum to {weights.sum()!r}, not 1")
    return weights


def sample_prior_profile(prior: ProfilePrior, rng: np.random.Generator) -> np.ndarray:
    """One draw from the Dirichlet prior."""
    return rng.dirichlet(np.full(prior.grid.size, prior.per_cell))


@dataclass(frozen=True)
class BandTable:
    """Pointwise quantile bands of cumulative population curves.

    ``values[q, j]`` is the ``levels[q]`` quantile, across samples, of the
    cumulative weight up to grid age ``ages[j]``.  Bands are pointwise per
    age, not simultaneous.
    """

    ages: np.ndarray
    levels: tuple
    values: np.ndarray

    def level_curve(self, level: float) -> np.ndarray:
        return self.values[self.levels.index(level)]

    @property
    def median_curve(self) -> np.ndarray:
        return self.level_curve(0.5)


def profile_quantile_bands(samples, grid: AgeGrid,
                           probs=(0.025, 0.25, 0.75, 0.975)) -> BandTable:
    """Quantile bands of cumulative profiles across posterior/prior samples.

    Parameters
    ----------
    samples : array-like, shape (n_samples, T)
        Profile weight vectors.
    probs : sequence of float
        Quantile levels to report; the median is always included.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise DataError("no profile samples given")
    if samples.shape[1] != grid.size:
        raise DataError("profile samples do not match the grid size")
    levels = tuple(sorted(set(float(p) for p in probs) | {0.5}))
    if any(not 0 < p < 1 for p in levels):
        raise DataError("quantile levels must lie strictly inside (0, 1)")
    cumulative = np.cumsum(samples, axis=1)
    values = np.quantile(cumulative, levels, axis=0)
    return BandTable(ages=grid.as_array(), levels=levels, values=values)
