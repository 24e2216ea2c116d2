"""Fixed-parameter goodness of fit.

Given fixed maturity parameters and a fixed population profile, the free
missingness lines are fitted by maximum likelihood, a table of predicted
combination counts is produced, and a parametric bootstrap of the Pearson
chi-square discrepancy gives a p-value against the observed table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .errors import DataError, FitError
from .indicators import IndicatorParams, state_probs
from .inference import ObservedTable, cell_prob_matrix
from .population import AgeGrid

__all__ = [
    "PredictedTable",
    "predicted_table",
    "MissingnessFit",
    "fit_missingness_mle",
    "chi_square_statistic",
    "BootstrapResult",
    "bootstrap_pvalue",
    "bootstrap_pvalue_blocked",
]


@dataclass(frozen=True)
class PredictedTable:
    """Expected combination counts under fixed parameters and profile."""

    expected: np.ndarray
    n_indicators: int = 2

    def __post_init__(self):
        expected = np.asarray(self.expected, dtype=float)
        if expected.shape != (3 ** self.n_indicators,):
            raise DataError("predicted table has the wrong number of cells")
        if np.any(expected < 0):
            raise DataError("expected counts must be nonnegative")
        expected.flags.writeable = False
        object.__setattr__(self, "expected", expected)

    @property
    def total(self) -> float:
        return float(self.expected.sum())


def predicted_table(params_list, weights, grid: AgeGrid,
                    total: float) -> PredictedTable:
    """Expected counts per indicator combination for ``total`` persons."""
    cell_fracs = cell_prob_matrix(params_list, weights, grid).sum(axis=1)
    return PredictedTable(total * cell_fracs, n_indicators=len(params_list))


class MissingnessFit(NamedTuple):
    params: tuple            # IndicatorParams per indicator, fitted missingness
    loglik: float
    boundary_hits: tuple     # names of constraints active at the solution


def _missingness_cell_fracs(x, maturity_fracs, weights, ages):
    """Combination probabilities as a function of the stacked missingness
    coordinates (intercept, slope per indicator)."""
    offset = ages - 20.0
    out = None
    for k, mat in enumerate(maturity_fracs):
        miss = x[2 * k] + x[2 * k + 1] * offset
        block = np.stack([(1.0 - miss) * (1.0 - mat), (1.0 - miss) * mat, miss])
        out = block if out is None else (out[:, None, :] * block[None, :, :]).reshape(-1, ages.size)
    return (out * weights[None, :]).sum(axis=1)


def fit_missingness_mle(observed: ObservedTable, maturity_params, weights,
                        grid: AgeGrid, start=None) -> MissingnessFit:
    """Maximize the multinomial likelihood of the observed table over the
    missingness lines, holding maturity parameters and the profile fixed.

    The lines are constrained to stay inside [0, 1] at the ends of the
    grid; any constraint active at the optimum is reported in
    ``boundary_hits``.
    """
    if len(maturity_params) != observed.n_indicators:
        raise DataError("one maturity parameter pair per indicator is required")
    ages = grid.as_array()
    weights = np.asarray(weights, dtype=float)
    maturity_fracs = []
    for p in maturity_params:
        base = IndicatorParams(p.location, p.scale) if isinstance(p, IndicatorParams) \
            else IndicatorParams(p[0], p[1])
        maturity_fracs.append(state_probs(base, ages)[1])

    counts = observed.counts.astype(float)

    def negloglik(x):
        q = _missingness_cell_fracs(x, maturity_fracs, weights, ages)
        if np.any(q[counts > 0] <= 0):
            return 1e12
        mask = counts > 0
        return -float((counts[mask] * np.log(q[mask])).sum())

    n_ind = observed.n_indicators
    if start is None:
        start = []
        for k in range(n_ind):
            start.extend([observed.missing_share(k), 0.0])
    start = np.asarray(start, dtype=float)

    lo_off, hi_off = ages[0] - 20.0, ages[-1] - 20.0
    constraints = []
    for k in range(n_ind):
        for off, end in ((lo_off, "low"), (hi_off, "high")):
            constraints.append({
                "type": "ineq", "fun": (lambda x, k=k, off=off: x[2 * k] + x[2 * k + 1] * off),
                "name": f"indicator{k}:{end}:>=0",
            })
            constraints.append({
                "type": "ineq", "fun": (lambda x, k=k, off=off: 1.0 - x[2 * k] - x[2 * k + 1] * off),
                "name": f"indicator{k}:{end}:<=1",
            })

    res = minimize(negloglik, start, method="SLSQP",
                   constraints=[{k: v for k, v in c.items() if k != "name"}
                                for c in constraints],
                   options={"maxiter": 500, "ftol": 1e-12})
    if not res.success:
        raise FitError(f"missingness fit failed: {res.message}")
    hits = tuple(c["name"] for c in constraints if abs(c["fun"](res.x)) < 1e-7)

    fitted = []
    for k, p in enumerate(maturity_params):
        loc, scale = (p.location, p.scale) if isinstance(p, IndicatorParams) else (p[0], p[1])
        fitted.append(IndicatorParams(loc, scale, float(res.x[2 * k]),
                                      float(res.x[2 * k + 1])))
    return MissingnessFit(tuple(fitted), -float(res.fun), hits)


def chi_square_statistic(counts, expected) -> float:
    """Pearson chi-square over cells.  Empty expected cells contribute
    nothing when also empty in ``counts`` and +inf otherwise."""
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    zero = expected == 0
    if np.any(counts[zero] > 0):
        return math.inf
    live = ~zero
    diff = counts[live] - expected[live]
    return float((diff * diff / expected[live]).sum())


class BootstrapResult(NamedTuple):
    p_value: float
    statistic: float
    exceedances: int
    replicates: int


def bootstrap_pvalue(observed: ObservedTable, predicted: PredictedTable,
                     replicates: int, rng: np.random.Generator,
                     chunk: int = 100_000) -> BootstrapResult:
    """Parametric-bootstrap p-value of the chi-square discrepancy.

    ``replicates`` tables of the observed total are simulated from the
    predicted cell probabilities; p = (1 + #{simulated >= observed}) /
    (1 + replicates).
    """
    if replicates < 1:
        raise DataError("need at least one bootstrap replicate")
    if abs(predicted.total - observed.total) > 1e-6 * max(observed.total, 1):
        raise DataError("predicted table total does not match the observed total")
    expected = predicted.expected
    stat_obs = chi_square_statistic(observed.counts, expected)
    probs = expected / predicted.total if predicted.total > 0 else expected
    live = expected > 0

    exceed = 0
    done = 0
    while done < replicates:
        m = min(chunk, replicates - done)
        sims = rng.multinomial(observed.total, probs, size=m)
        diff = sims[:, live] - expected[live]
        stats = (diff * diff / expected[live]).sum(axis=1)
        exceed += int((stats >= stat_obs).sum())
        done += m
    p = (1 + exceed) / (1 + replicates)
    return BootstrapResult(p, stat_obs, exceed, replicates)


def bootstrap_pvalue_blocked(observed: ObservedTable, predicted: PredictedTable,
                             replicates: int, seed: int, jobs: int = 1,
                             block: int = 20_000) -> BootstrapResult:
    """Bootstrap with a fixed block structure of spawned RNG streams, so the
    result depends only on ``seed``, never on ``jobs``."""
    n_blocks = (replicates + block - 1) // block
    sizes = [block] * (n_blocks - 1) + [replicates - block * (n_blocks - 1)]
    streams = np.random.SeedSequence(seed).spawn(n_blocks)

    def one(i):
        rng = np.random.default_rng(streams[i])
        return bootstrap_pvalue(observed, predicted, sizes[i], rng)

    if jobs <= 1:
        parts = [one(i) for i in range(n_blocks)]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_blocked_worker,
                                  [(observed, predicted, sizes[i], streams[i])
                                   for i in range(n_blocks)]))
    exceed = sum(p.exceedances for p in parts)
    stat = parts[0].statistic
    return BootstrapResult((1 + exceed) / (1 + replicates), stat, exceed, replicates)


def _blocked_worker(args):
    observed, predicted, size, stream = args
    return bootstrap_pvalue(observed, predicted, size, np.random.default_rng(stream))
