"""Metropolis-within-Gibbs sampling over latent age counts, indicator
parameters, and the population profile, conditioned on an observed
classification count table.

The observed data is a table of counts over the V = 3^K combinations of
indicator states.  The model augments it with a latent V x T table of counts
per (combination, grid age).  One cycle updates, in order,

    1. the latent table, row-wise exact multinomial draws,
    2. each indicator's parameters, a joint random-walk Metropolis step,
    3. the profile weights, an exact Dirichlet draw.

Chains are deterministic given their seed.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, ModelError
from .indicators import (
    STATE_ORDER,
    IndicatorParams,
    IndicatorPrior,
    IndicatorState,
    prior_logdensity,
    prob_vector,
    state_probs,
)
from .population import AgeGrid, ProfilePrior, uniform_profile

__all__ = [
    "ObservedTable",
    "ChainState",
    "ChainConfig",
    "ChainOutput",
    "DiagnosticsReport",
    "state_combinations",
    "combination_index",
    "joint_state_probs",
    "cell_prob_matrix",
    "cell_prob",
    "sample_latent_counts",
    "latent_marginal",
    "latent_age_totals",
    "mh_update_params",
    "gibbs_update_profile",
    "run_chain",
    "run_chains",
    "diagnostics",
]


def state_combinations(n_indicators: int):
    """All indicator-state combinations in canonical order (the first
    indicator varies slowest)."""
    return list(itertools.product(STATE_ORDER, repeat=n_indicators))


def combination_index(states) -> int:
    idx = 0
    for s in states:
        idx = idx * 3 + s.value
    return idx


@dataclass(frozen=True)
class ObservedTable:
    """Counts over all indicator-state combinations.

    ``counts`` follows the canonical combination order of
    ``state_combinations(n_indicators)``.
    """

    counts: np.ndarray
    n_indicators: int = 2

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (3 ** self.n_indicators,):
            raise DataError(
                f"expected {3 ** self.n_indicators} combination counts, "
                f"got shape {counts.shape}"
            )
        if np.any(counts < 0):
            raise DataError("combination counts must be nonnegative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_cells(cls, cells: dict, n_indicators: int = 2) -> "ObservedTable":
        """Build from a mapping of state tuples to counts; absent cells are 0."""
        counts = np.zeros(3 ** n_indicators, dtype=np.int64)
        for states, value in cells.items():
            counts[combination_index(states)] = value
        return cls(counts, n_indicators)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell(self, states) -> int:
        return int(self.counts[combination_index(states)])

    def missing_share(self, indicator: int) -> float:
        """Fraction of observations where ``indicator`` is missing."""
        if self.total == 0:
            return 0.0
        combos = state_combinations(self.n_indicators)
        hit = sum(
            int(c)
            for c, combo in zip(self.counts, combos)
            if combo[indicator] is IndicatorState.MISSING
        )
        return hit / self.total


@dataclass(frozen=True)
class ChainState:
    """One sampler state: indicator params, profile weights, latent table."""

    params: tuple
    weights: np.ndarray
    latent: np.ndarray


def joint_state_probs(params_list, grid: AgeGrid) -> np.ndarray:
    """P(combination | age) for every combination and grid age, as a
    (V, T) array under conditional independence given age."""
    ages = grid.as_array()
    out = state_probs(params_list[0], ages)
    for params in params_list[1:]:
        nxt = state_probs(params, ages)
        out = (out[:, None, :] * nxt[None, :, :]).reshape(-1, ages.size)
    return out


def cell_prob_matrix(params_list, weights, grid: AgeGrid) -> np.ndarray:
    """Joint probability of (combination, age) cells, a (V, T) array that
    sums to one over all cells."""
    return joint_state_probs(params_list, grid) * np.asarray(weights)[None, :]


def cell_prob(state: ChainState, states, age_index: int, grid: AgeGrid) -> float:
    """Probability that a person lands in grid cell (``states``,
    ``age_index``) under the given chain state."""
    age = grid.ages[age_index]
    return float(state.weights[age_index]) * prob_vector(state.params, age, states)


def sample_latent_counts(observed: ObservedTable, params_list, weights,
                         grid: AgeGrid, rng: np.random.Generator) -> np.ndarray:
    """Exact conditional draw of the latent (V, T) count table.

    Each observed combination count is spread over grid ages by an
    independent multinomial with the normalized cell probabilities of its
    row.

    Raises
    ------
    ModelError
        If a combination has observations but zero probability everywhere
        on the grid: the current parameters cannot explain the data.
    """
    probs = cell_prob_matrix(params_list, weights, grid)
    latent = np.zeros(probs.shape, dtype=np.int64)
    for i, y in enumerate(observed.counts):
        if y == 0:
            continue
        row = probs[i]
        total = row.sum()
        if total <= 0.0:
            combo = state_combinations(observed.n_indicators)[i]
            names = ", ".join(s.name.lower() for s in combo)
            raise ModelError(
                f"combination ({names}) has {y} observations but zero "
                "probability under the current parameters"
            )
        latent[i] = rng.multinomial(y, row / total)
    return latent


def latent_marginal(latent: np.ndarray, indicator: int,
                    n_indicators: int) -> np.ndarray:
    """Counts per (state of one indicator, age): a (3, T) array obtained by
    summing the latent table over all other indicators' states."""
    t = latent.shape[1]
    cube = latent.reshape((3,) * n_indicators + (t,))
    axes = tuple(a for a in range(n_indicators) if a != indicator)
    return cube.sum(axis=axes)


def latent_age_totals(latent: np.ndarray) -> np.ndarray:
    """Counts per grid age, summed over all combinations."""
    return latent.sum(axis=0)


def _count_loglik(params: IndicatorParams, counts: np.ndarray,
                  ages: np.ndarray) -> float:
    """Log likelihood of per-(state, age) counts under one indicator model.
    Zero-probability cells with positive counts give -inf."""
    probs = state_probs(params, ages)
    mask = counts > 0
    with np.errstate(divide="ignore"):
        logs = np.log(probs[mask])
    return float((counts[mask] * logs).sum())


def _proposal_valid(vec: np.ndarray, age_lo: float, age_hi: float) -> bool:
    if not vec[1] > 0.0:
        return False
    m_lo = vec[2] + vec[3] * (age_lo - 20.0)
    m_hi = vec[2] + vec[3] * (age_hi - 20.0)
    return 0.0 <= m_lo <= 1.0 and 0.0 <= m_hi <= 1.0


def mh_update_params(params_list, latent, priors, step_sds, grid: AgeGrid,
                     rng: np.random.Generator):
    """One random-walk Metropolis step per indicator.

    All four coordinates of an indicator are perturbed jointly with
    independent normal steps.  Proposals with non-positive scale or a
    missingness line leaving [0, 1] on the grid are rejected outright.

    Returns the (possibly updated) parameter list and a boolean acceptance
    flag per indicator.
    """
    ages = grid.as_array()
    age_lo, age_hi = ages[0], ages[-1]
    n_ind = len(params_list)
    new_params = list(params_list)
    accepted = np.zeros(n_ind, dtype=bool)
    for k in range(n_ind):
        noise = rng.normal(size=4)
        u = rng.random()
        log_u = math.log(u) if u > 0.0 else -math.inf
        current = new_params[k]
        proposal_vec = current.as_array() + noise * step_sds[k]
        if not _proposal_valid(proposal_vec, age_lo, age_hi):
            continue
        proposal = IndicatorParams.from_array(proposal_vec)
        marg = latent_marginal(latent, k, n_ind)
        cur_post = _count_loglik(current, marg, ages) + prior_logdensity(priors[k], current)
        prop_post = _count_loglik(proposal, marg, ages) + prior_logdensity(priors[k], proposal)
        if log_u < prop_post - cur_post:
            new_params[k] = proposal
            accepted[k] = True
    return new_params, accepted


def gibbs_update_profile(latent, prior: ProfilePrior,
                         rng: np.random.Generator) -> np.ndarray:
    """Exact Dirichlet draw of the profile given the latent age totals."""
    return rng.dirichlet(latent_age_totals(latent) + prior.per_cell)


_DEFAULT_STEP_SDS = (0.1, 0.1, 0.004, 0.0015)


@dataclass(frozen=True)
class ChainConfig:
    """Sampler configuration.

    ``proposal_sds`` holds one 4-vector of random-walk step sizes per
    indicator; a zero entry freezes that coordinate.  During burn-in the
    step vectors are rescaled (jointly per indicator) towards
    ``adapt_target`` acceptance and frozen afterwards.  ``fix_params``
    skips the Metropolis step entirely, sampling only the latent table and
    the profile; useful for fixed-parameter diagnostics.
    """

    priors: tuple
    profile_prior: ProfilePrior
    cycles: int = 1_000_000
    burn_in: int = 20_000
    thinning: int = 100
    seed: int = 0
    proposal_sds: tuple | None = None
    adapt_target: float = 0.15
    adapt_interval: int = 100
    fix_params: bool = False
    keep_latents: bool = False
    indicator_names: tuple | None = None

    def __post_init__(self):
        if not self.priors:
            raise DataError("at least one indicator prior is required")
        if not 0 <= self.burn_in < self.cycles:
            raise DataError("burn-in must be shorter than the cycle count")
        if self.thinning < 1:
            raise DataError("thinning must be >= 1")
        if not 0 < self.adapt_target < 1:
            raise DataError("adaptation target must be in (0, 1)")
        sds = self.proposal_sds
        if sds is None:
            sds = tuple(np.array(_DEFAULT_STEP_SDS) for _ in self.priors)
        else:
            sds = tuple(np.asarray(s, dtype=float).copy() for s in sds)
            if len(sds) != len(self.priors):
                raise DataError("one step-size vector per indicator is required")
            for s in sds:
                if s.shape != (4,) or np.any(s < 0):
                    raise DataError("step sizes must be four nonnegative values")
        object.__setattr__(self, "proposal_sds", sds)
        names = self.indicator_names
        if names is None:
            names = ("teeth", "knee") if len(self.priors) == 2 else tuple(
                f"indicator{k + 1}" for k in range(len(self.priors))
            )
        if len(names) != len(self.priors):
            raise DataError("one indicator name per prior is required")
        object.__setattr__(self, "indicator_names", tuple(names))

    @property
    def n_indicators(self) -> int:
        return len(self.priors)

    @property
    def grid(self) -> AgeGrid:
        return self.profile_prior.grid


@dataclass(frozen=True)
class ChainOutput:
    """Thinned post-burn-in samples plus bookkeeping for one chain."""

    config: ChainConfig
    observed: ObservedTable
    cycle_index: np.ndarray        # (S,)
    params: np.ndarray             # (S, K, 4)
    weights: np.ndarray            # (S, T)
    accepted: np.ndarray           # (cycles, K) bool, every cycle
    final_step_sds: tuple          # per indicator (4,)
    latents: np.ndarray | None = None   # (S, V, T) if kept
    wall_time: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.params.shape[0]

    @property
    def grid(self) -> AgeGrid:
        return self.config.grid

    @property
    def acceptance_rates(self) -> np.ndarray:
        """Post-burn-in acceptance rate per indicator."""
        post = self.accepted[self.config.burn_in:]
        return post.mean(axis=0)

    def running_acceptance(self, window: int = 1000) -> np.ndarray:
        """Trailing-window acceptance rates, one row per window."""
        n = (self.accepted.shape[0] // window) * window
        blocks = self.accepted[:n].reshape(-1, window, self.accepted.shape[1])
        return blocks.mean(axis=1)

    def cumulative_weights(self) -> np.ndarray:
        return np.cumsum(self.weights, axis=1)

    def parameter_names(self):
        coords = ("location", "scale", "missing_at_20", "missing_slope")
        return [
            f"{name}_{coord}"
            for name in self.config.indicator_names
            for coord in coords
        ]

    def parameter_matrix(self) -> np.ndarray:
        """Samples flattened to (S, 4K), columns per ``parameter_names``."""
        return self.params.reshape(self.n_samples, -1)


def _initial_params(config: ChainConfig, observed: ObservedTable):
    """Start each indicator at its prior means with a flat empirical
    missingness line."""
    params = []
    for k, prior in enumerate(config.priors):
        share = observed.missing_share(k)
        params.append(IndicatorParams(prior.location_mean, prior.scale_mean,
                                      share, 0.0))
    return params


def run_chain(observed: ObservedTable, config: ChainConfig,
              rng: np.random.Generator | None = None) -> ChainOutput:
    """Run one chain; deterministic given ``config.seed``.

    Parameters
    ----------
    rng : numpy Generator, optional
        Normally derived from ``config.seed``; pass an explicit generator
        to control stream splitting across chains.
    """
    if observed.n_indicators != config.n_indicators:
        raise DataError("observed table and priors disagree on the number of indicators")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    grid = config.grid
    t_start = time.perf_counter()

    params = _initial_params(config, observed)
    weights = uniform_profile(grid)
    latent = sample_latent_counts(observed, params, weights, grid, rng)

    n_ind = config.n_indicators
    n_keep = (config.cycles - config.burn_in + config.thinning - 1) // config.thinning
    kept_cycles = np.empty(n_keep, dtype=np.int64)
    kept_params = np.empty((n_keep, n_ind, 4))
    kept_weights = np.empty((n_keep, grid.size))
    kept_latents = (
        np.empty((n_keep, latent.shape[0], grid.size), dtype=np.int64)
        if config.keep_latents else None
    )
    accepted = np.zeros((config.cycles, n_ind), dtype=bool)

    step_sds = [np.asarray(s, dtype=float).copy() for s in config.proposal_sds]
    window_hits = np.zeros(n_ind)
    window_index = 0

    kept = 0
    for cycle in range(config.cycles):
        latent = sample_latent_counts(observed, params, weights, grid, rng)
        if not config.fix_params:
            params, acc = mh_update_params(params, latent, config.priors,
                                           step_sds, grid, rng)
            accepted[cycle] = acc
            window_hits += acc
        weights = gibbs_update_profile(latent, config.profile_prior, rng)

        in_burn_in = cycle < config.burn_in
        if (not config.fix_params and in_burn_in
                and (cycle + 1) % config.adapt_interval == 0):
            rates = window_hits / config.adapt_interval
            gain = 2.0 / (1.0 + window_index) ** 0.55
            for k in range(n_ind):
                step_sds[k] *= math.exp(gain * (rates[k] - config.adapt_target))
            window_hits[:] = 0.0
            window_index += 1

        if not in_burn_in and (cycle - config.burn_in) % config.thinning == 0:
            kept_cycles[kept] = cycle
            for k in range(n_ind):
                kept_params[kept, k] = params[k].as_array()
            kept_weights[kept] = weights
            if kept_latents is not None:
                kept_latents[kept] = latent
            kept += 1

    return ChainOutput(
        config=config,
        observed=observed,
        cycle_index=kept_cycles[:kept],
        params=kept_params[:kept],
        weights=kept_weights[:kept],
        accepted=accepted,
        final_step_sds=tuple(s.copy() for s in step_sds),
        latents=None if kept_latents is None else kept_latents[:kept],
        wall_time=time.perf_counter() - t_start,
    )


def run_chains(observed: ObservedTable, config: ChainConfig, n_chains: int,
               jobs: int = 1):
    """Run several chains with independent RNG streams spawned from the
    master seed.

    Chain i always receives the i-th spawned stream, so results do not
    depend on ``jobs``.
    """
    if n_chains < 1:
        raise DataError("need at least one chain")
    if n_chains == 1:
        return [run_chain(observed, config)]
    streams = np.random.SeedSequence(config.seed).spawn(n_chains)
    if jobs <= 1:
        return [
            run_chain(observed, config, rng=np.random.default_rng(s))
            for s in streams
        ]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(run_chain, observed, config, np.random.default_rng(s))
            for s in streams
        ]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-parameter trace summaries and between-chain agreement."""

    parameter_names: tuple
    chain_means: np.ndarray        # (C, P)
    chain_sds: np.ndarray          # (C, P)
    chain_low: np.ndarray          # (C, P) 2.5% quantiles
    chain_high: np.ndarray         # (C, P) 97.5% quantiles
    acceptance_rates: np.ndarray   # (C, K)
    indicator_names: tuple
    n_samples: tuple
    scale_reduction: np.ndarray | None = None  # (P,) when >= 2 chains

    def format(self) -> str:
        lines = []
        header = f"{'parameter':<28}" + "".join(
            f"chain{i:<2} mean (2.5%, 97.5%)    " for i in range(len(self.n_samples))
        )
        if self.scale_reduction is not None:
            header += "R-hat"
        lines.append(header)
        for p, name in enumerate(self.parameter_names):
            row = f"{name:<28}"
            for c in range(len(self.n_samples)):
                row += (f"{self.chain_means[c, p]:8.4f} "
                        f"({self.chain_low[c, p]:7.4f}, {self.chain_high[c, p]:7.4f})  ")
            if self.scale_reduction is not None:
                row += f"{self.scale_reduction[p]:6.4f}"
            lines.append(row)
        for c, rates in enumerate(self.acceptance_rates):
            pairs = ", ".join(
                f"{name}={rate:.3f}" for name, rate in zip(self.indicator_names, rates)
            )
            lines.append(f"chain{c} acceptance rates: {pairs}")
        return "\n".join(lines)


def diagnostics(outputs) -> DiagnosticsReport:
    """Summarize one or more chains; adds a potential-scale-reduction style
    statistic when at least two chains are given."""
    if not outputs:
        raise DataError("no chain outputs to diagnose")
    names = outputs[0].parameter_names()
    mats = [o.parameter_matrix() for o in outputs]
    means = np.stack([m.mean(axis=0) for m in mats])
    sds = np.stack([m.std(axis=0, ddof=1) for m in mats])
    lows = np.stack([np.quantile(m, 0.025, axis=0) for m in mats])
    highs = np.stack([np.quantile(m, 0.975, axis=0) for m in mats])
    rates = np.stack([o.acceptance_rates for o in outputs])

    reduction = None
    if len(outputs) >= 2 and len({m.shape[0] for m in mats}) == 1:
        n = mats[0].shape[0]
        within = np.mean(np.stack([m.var(axis=0, ddof=1) for m in mats]), axis=0)
        between = n * np.var(means, axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            var_plus = (n - 1) / n * within + between / n
            reduction = np.sqrt(np.where(within > 0, var_plus / within, 1.0))

    return DiagnosticsReport(
        parameter_names=tuple(names),
        chain_means=means,
        chain_sds=sds,
        chain_low=lows,
        chain_high=highs,
        acceptance_rates=rates,
        indicator_names=outputs[0].config.indicator_names,
        n_samples=tuple(m.shape[0] for m in mats),
        scale_reduction=reduction,
    )
