"""Classification rules and posterior classification error rates.

The operational rule classifies a person as 18-or-over iff at least one
indicator is mature.  Given posterior samples of indicator parameters and the
population profile, each indicator combination gets a posterior probability
of being at/over the age threshold, from which per-cell error rates with
credibility intervals follow.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from .indicators import IndicatorParams, IndicatorState, state_probs
from .inference import ChainOutput, joint_state_probs, state_combinations
from .population import AgeGrid

__all__ = [
    "AgeClass",
    "ClassificationRule",
    "rmv_rule",
    "classify",
    "prob_over_threshold",
    "probs_over_threshold",
    "probs_over_threshold_latent",
    "credibility_interval",
    "ErrorRateRow",
    "ErrorRateTable",
    "error_rate_table",
    "TABLE_CELL_ORDER",
    "cell_label",
]


class AgeClass(Enum):
    OVER_18 = "over18"
    UNDER_18 = "under18"


@dataclass(frozen=True)
class ClassificationRule:
    """Total mapping from (teeth state, knee state) to an age class."""

    name: str
    decisions: dict

    def __post_init__(self):
        combos = set(state_combinations(2))
        if set(self.decisions) != combos:
            raise DataError("a classification rule must cover all 9 combinations")

    def decision(self, teeth: IndicatorState, knee: IndicatorState) -> AgeClass:
        return self.decisions[(teeth, knee)]


def rmv_rule(double_missing_over18: bool = False) -> ClassificationRule:
    """Over-18 iff teeth or knee is mature.

    The combination with both indicators missing carries no evidence either
    way; it defaults to under-18 but can be flipped.
    """
    decisions = {}
    for teeth, knee in state_combinations(2):
        over = (teeth is IndicatorState.MATURE) or (knee is IndicatorState.MATURE)
        decisions[(teeth, knee)] = AgeClass.OVER_18 if over else AgeClass.UNDER_18
    if double_missing_over18:
        decisions[(IndicatorState.MISSING, IndicatorState.MISSING)] = AgeClass.OVER_18
    name = "rmv" + ("+missing-over" if double_missing_over18 else "")
    return ClassificationRule(name, decisions)


def classify(teeth: IndicatorState, knee: IndicatorState,
             rule: ClassificationRule | None = None) -> AgeClass:
    """Apply a classification rule (the either-indicator-mature rule by
    default) to one combination."""
    return (rule or rmv_rule()).decision(teeth, knee)


_STATE_SYMBOL = {
    IndicatorState.MATURE: "+",
    IndicatorState.IMMATURE: "-",
    IndicatorState.MISSING: "0",
}

#: Row order used for reports: over-18 cells first, knee before teeth in the
#: labels.  States are (teeth, knee) tuples.
TABLE_CELL_ORDER = (
    (IndicatorState.MATURE, IndicatorState.MATURE),
    (IndicatorState.IMMATURE, IndicatorState.MATURE),
    (IndicatorState.MISSING, IndicatorState.MATURE),
    (IndicatorState.MATURE, IndicatorState.IMMATURE),
    (IndicatorState.MATURE, IndicatorState.MISSING),
    (IndicatorState.IMMATURE, IndicatorState.IMMATURE),
    (IndicatorState.MISSING, IndicatorState.IMMATURE),
    (IndicatorState.IMMATURE, IndicatorState.MISSING),
    (IndicatorState.MISSING, IndicatorState.MISSING),
)


def cell_label(states) -> str:
    teeth, knee = states
    return f"K{_STATE_SYMBOL[knee]},T{_STATE_SYMBOL[teeth]}"


def prob_over_threshold(params_list, weights, grid: AgeGrid, states,
                        threshold: float) -> float:
    """Probability that a person with the given indicator combination is at
    or over ``threshold``, computed from exact cell probabilities rather
    than sampled counts.

    Returns NaN when the combination has zero probability (undefined
    conditional).
    """
    ages = grid.as_array()
    row = np.asarray(weights, dtype=float).copy()
    for params, state in zip(params_list, states):
        row *= state_probs(params, ages)[state.value]
    total = row.sum()
    if total <= 0.0:
        return float("nan")
    return float(row[ages >= threshold].sum() / total)


def probs_over_threshold(chain: ChainOutput, threshold: float = 18.0) -> np.ndarray:
    """Per-sample over-threshold probabilities for every combination.

    Returns an (S, V) array.  Uses the exact conditional expectation given
    each retained (parameters, profile) sample; this is the low-variance
    estimator.  Cells with zero probability in a sample are NaN there.
    """
    grid = chain.grid
    ages = grid.as_array()
    over_mask = ages >= threshold
    n_samples = chain.n_samples
    n_combos = 3 ** chain.config.n_indicators
    out = np.empty((n_samples, n_combos))
    for s in range(n_samples):
        params = [IndicatorParams.from_array(chain.params[s, k])
                  for k in range(chain.config.n_indicators)]
        cells = joint_state_probs(params, grid) * chain.weights[s][None, :]
        totals = cells.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[s] = np.where(totals > 0, cells[:, over_mask].sum(axis=1) / totals,
                              np.nan)
    return out


def probs_over_threshold_latent(chain: ChainOutput,
                                threshold: float = 18.0) -> np.ndarray:
    """Noisier alternative estimator from the sampled latent counts; requires
    a chain run with ``keep_latents=True``."""
    if chain.latents is None:
        raise DataError("chain was run without keep_latents=True")
    over_mask = chain.grid.as_array() >= threshold
    totals = chain.latents.sum(axis=2).astype(float)
    over = chain.latents[:, :, over_mask].sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, over / totals, np.nan)


def credibility_interval(samples, level: float = 0.95):
    """Equal-tailed interval from empirical quantiles (linear interpolation,
    numpy's default convention)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise DataError("cannot form an interval from no samples")
    if not 0.0 < level < 1.0:
        raise DataError(f"interval level must be in (0, 1), got {level}")
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(samples, [tail, 1.0 - tail])
    return float(low), float(high)


@dataclass(frozen=True)
class ErrorRateRow:
    states: tuple                 # (teeth, knee)
    label: str
    n_observed: int
    classification: AgeClass
    mean_rate: float
    interval_low: float
    interval_high: float
    n_samples: int

    def percent(self):
        """Point estimate and interval in whole percent, as presented."""
        return (
            int(round(100 * self.mean_rate)),
            int(round(100 * self.interval_low)),
            int(round(100 * self.interval_high)),
        )


@dataclass(frozen=True)
class ErrorRateTable:
    rows: tuple
    threshold: float
    level: float
    estimator: str

    def row(self, states) -> ErrorRateRow:
        for r in self.rows:
            if r.states == tuple(states):
                return r
        raise DataError(f"no row for states {states}")

    def format(self) -> str:
        lines = [f"{'cell':<8}{'N':>6}  {'classified':<10}"
                 f"{'error%':>7}  {int(self.level * 100)}% interval"]
        for r in self.rows:
            pt, lo, hi = r.percent()
            side = "over18" if r.classification is AgeClass.OVER_18 else "under18"
            lines.append(f"{r.label:<8}{r.n_observed:>6}  {side:<10}{pt:>7}  {lo}--{hi}")
        return "\n".join(lines)


def error_rate_table(chain: ChainOutput, rule: ClassificationRule | None = None,
                     threshold: float = 18.0, level: float = 0.95,
                     estimator: str = "exact") -> ErrorRateTable:
    """Posterior classification error rates per indicator combination.

    For a cell classified over-18 the error rate of a posterior sample is
    the probability of being under the threshold, and vice versa.  Reports
    the posterior mean and an equal-tailed credibility interval across
    samples.

    ``estimator`` selects "exact" cell probabilities (default) or the
    "latent"-count fractions for comparison.
    """
    if chain.config.n_indicators != 2:
        raise DataError("error-rate tables are defined for the two-indicator setup")
    if chain.n_samples == 0:
        raise DataError("chain output holds no samples")
    rule = rule or rmv_rule()
    if estimator == "exact":
        p_over = probs_over_threshold(chain, threshold)
    elif estimator == "latent":
        p_over = probs_over_threshold_latent(chain, threshold)
    else:
        raise DataError(f"unknown estimator {estimator!r}")

    combos = state_combinations(2)
    index_of = {states: i for i, states in enumerate(combos)}
    rows = []
    for states in TABLE_CELL_ORDER:
        decision = rule.decision(*states)
        column = p_over[:, index_of[states]]
        errors = 1.0 - column if decision is AgeClass.OVER_18 else column
        valid = errors[~np.isnan(errors)]
        if valid.size == 0:
            rows.append(ErrorRateRow(states, cell_label(states),
                                     chain.observed.cell(states), decision,
                                     float("nan"), float("nan"), float("nan"), 0))
            continue
        low, high = credibility_interval(valid, level)
        rows.append(ErrorRateRow(
            states=states,
            label=cell_label(states),
            n_observed=chain.observed.cell(states),
            classification=decision,
            mean_rate=float(valid.mean()),
            interval_low=low,
            interval_high=high,
            n_samples=int(valid.size),
        ))
    return ErrorRateTable(tuple(rows), threshold, level, estimator)
