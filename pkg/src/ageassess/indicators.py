"""Per-indicator observation models.

An age indicator (third-molar stage, distal-femur epiphysis stage) is reduced
to three observable states: immature, mature, or missing ("not assessible").
Given a chronological age x, the model is

    P(missing | x) = missing_at_20 + missing_slope * (x - 20)
    P(mature  | x) = (1 - P(missing | x)) * Phi((x - location) / scale)
    P(immature| x) = remainder

with Phi the standard normal CDF.  The missingness line must stay inside
[0, 1] on every age of the grid in use; parameters violating that are
rejected, never clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .errors import ModelError

__all__ = [
    "IndicatorState",
    "STATE_ORDER",
    "IndicatorParams",
    "IndicatorPrior",
    "PRIOR_PRESETS",
    "prob_missing",
    "prob_state",
    "prob_vector",
    "state_probs",
    "prior_logdensity",
]


class IndicatorState(Enum):
    """Observable state of one age indicator."""

    IMMATURE = 0
    MATURE = 1
    MISSING = 2


#: Canonical state ordering used for all vectorized tables.
STATE_ORDER = (IndicatorState.IMMATURE, IndicatorState.MATURE, IndicatorState.MISSING)


@dataclass(frozen=True)
class IndicatorParams:
    """Parameters of one indicator model.

    Attributes
    ----------
    location : float
        Age (years) at which half of the population with data is mature.
    scale : float
        Spread (years) of the maturation curve; must be positive.
    missing_at_20 : float
        Probability that the indicator is not assessible at age 20.
    missing_slope : float
        Change of the missing probability per year of age.
    """

    location: float
    scale: float
    missing_at_20: float = 0.0
    missing_slope: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ModelError(f"scale must be positive, got {self.scale}")

    def missing_prob(self, age):
        return self.missing_at_20 + self.missing_slope * (age - 20.0)

    def missingness_valid_on(self, ages) -> bool:
        """True if the missingness line stays inside [0, 1] over ``ages``.

        The line is monotone in age, so checking the two extremes of the
        grid suffices.
        """
        ages = np.asarray(ages, dtype=float)
        lo = self.missing_prob(ages.min())
        hi = self.missing_prob(ages.max())
        return 0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0

    def validate_on(self, ages) -> "IndicatorParams":
        if not self.missingness_valid_on(ages):
            raise ModelError(
                "missingness line leaves [0, 1] on the age grid: "
                f"intercept={self.missing_at_20}, slope={self.missing_slope}"
            )
        return self

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.location, self.scale, self.missing_at_20, self.missing_slope]
        )

    @classmethod
    def from_array(cls, values) -> "IndicatorParams":
        loc, scale, m20, slope = (float(v) for v in values)
        return cls(loc, scale, m20, slope)


def prob_missing(params: IndicatorParams, age: float) -> float:
    """Probability that the indicator cannot be assessed at ``age``.

    Raises
    ------
    ModelError
        If the linear form leaves [0, 1] at this age; values are never
        clamped.
    """
    p = params.missing_prob(age)
    if not 0.0 <= p <= 1.0:
        raise ModelError(
            f"missing probability {p:.4f} outside [0, 1] at age {age}"
        )
    return p


def prob_state(params: IndicatorParams, age: float, state: IndicatorState) -> float:
    """Probability of observing ``state`` at chronological age ``age``.

    The three state probabilities sum to one exactly: mature and missing are
    computed directly and immature takes the remainder.
    """
    p_miss = prob_missing(params, age)
    if state is IndicatorState.MISSING:
        return p_miss
    p_mat = (1.0 - p_miss) * float(ndtr((age - params.location) / params.scale))
    if state is IndicatorState.MATURE:
        return p_mat
    return 1.0 - p_miss - p_mat


def prob_vector(all_params, age: float, states) -> float:
    """Joint probability of one state per indicator, assuming conditional
    independence given age.

    Accepts any number of indicators >= 1; ``states`` must align with
    ``all_params``.
    """
    if len(all_params) != len(states):
        raise ValueError(
            f"{len(all_params)} parameter sets but {len(states)} states"
        )
    out = 1.0
    for params, state in zip(all_params, states):
        out *= prob_state(params, age, state)
    return out


def state_probs(params: IndicatorParams, ages: np.ndarray) -> np.ndarray:
    """State probabilities over an age vector.

    Returns a (3, len(ages)) array with rows ordered as ``STATE_ORDER``
    (immature, mature, missing).  No validity check is performed here; this
    is the hot path and callers guarantee grid validity.
    """
    ages = np.asarray(ages, dtype=float)
    p_miss = params.missing_at_20 + params.missing_slope * (ages - 20.0)
    p_mat = (1.0 - p_miss) * ndtr((ages - params.location) / params.scale)
    return np.stack([1.0 - p_miss - p_mat, p_mat, p_miss])


@dataclass(frozen=True)
class IndicatorPrior:
    """Prior over (location, scale): a product of two normal densities,
    truncated to positive scale, flat over the missingness parameters.

    The densities are not renormalized after truncation; Metropolis ratios
    are unaffected and truncation is handled by rejecting non-positive
    scales.
    """

    label: str
    location_mean: float
    location_sd: float
    scale_mean: float
    scale_sd: float

    def __post_init__(self):
        if not (self.location_sd > 0 and self.scale_sd > 0):
            raise ModelError(f"prior standard deviations must be positive: {self}")


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _normal_logpdf(x: float, mean: float, sd: float) -> float:
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


def prior_logdensity(prior: IndicatorPrior, params: IndicatorParams) -> float:
    """Log prior density of ``params`` (up to the truncation constant).

    Returns ``-inf`` for non-positive scale.  The missingness coordinates
    contribute nothing (flat prior).
    """
    if params.scale <= 0:
        return -math.inf
    return _normal_logpdf(
        params.location, prior.location_mean, prior.location_sd
    ) + _normal_logpdf(params.scale, prior.scale_mean, prior.scale_sd)


#: Built-in priors.  The narrow ones are centered on published-study estimates
#: with sd 0.2 (95% interval = center +/- 0.4); the wide ones quadruple the sd.
PRIOR_PRESETS = {
    "Lucas": IndicatorPrior("Lucas", 18.6, 0.2, 0.7, 0.2),
    "Mincer": IndicatorPrior("Mincer", 20.0, 0.2, 3.2, 0.2),
    "WideTeeth": IndicatorPrior("WideTeeth", 19.3, 0.8, 2.0, 0.8),
    "Ottow": IndicatorPrior("Ottow", 18.5, 0.2, 1.5, 0.2),
    "WideKnees": IndicatorPrior("WideKnees", 18.5, 0.8, 1.5, 0.8),
    "OttowIIIc": IndicatorPrior("OttowIIIc", 17.8, 0.2, 1.7, 0.2),
}
