"""Reconstruction of individual-level cohorts from published study summaries,
and probit maximum likelihood on the result.

Published maturity studies rarely ship raw data.  Two summary shapes are
supported: per-age-bin mature counts (each person is placed at the bin
midpoint) and per-stage five-number age summaries (ages are rebuilt through a
piecewise-linear map from standard-normal quantiles).  Both are deliberately
simple reconstructions; the bundled data files are inputs to them, not ground
truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr, ndtri

from .errors import DataError, FitError

__all__ = [
    "AgeBin",
    "BinnedStudy",
    "StageGroup",
    "QuantileStudy",
    "RawCohort",
    "ProbitFit",
    "reconstruct_binned",
    "reconstruct_quantiles",
    "reassign_stage_fraction",
    "fit_probit_mle",
    "probit_standard_errors",
    "read_binned_study",
    "read_quantile_study",
]


@dataclass(frozen=True)
class AgeBin:
    """One age interval [lo, hi) with its total and mature head counts."""

    lo: float
    hi: float
    n_total: int
    n_mature: int

    def __post_init__(self):
        if self.hi <= self.lo:
            raise DataError(f"empty age interval [{self.lo}, {self.hi})")
        if not 0 <= self.n_mature <= self.n_total:
            raise DataError(
                f"bin [{self.lo}, {self.hi}): {self.n_mature} mature of {self.n_total}"
            )

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class BinnedStudy:
    name: str
    bins: tuple

    def __post_init__(self):
        if not self.bins:
            raise DataError(f"study {self.name!r} has no bins")
        spans = sorted((b.lo, b.hi) for b in self.bins)
        for (_, hi), (lo, _) in zip(spans, spans[1:]):
            if lo < hi:
                raise DataError(f"study {self.name!r} has overlapping age bins")


@dataclass(frozen=True)
class StageGroup:
    """One indicator stage with its size and five-number age summary."""

    stage: str
    n: int
    summary: tuple  # (min, q25, median, q75, max)
    mature: bool

    def __post_init__(self):
        if self.n <= 0:
            raise DataError(f"stage {self.stage!r} has size {self.n}")
        if len(self.summary) != 5:
            raise DataError(f"stage {self.stage!r} needs a five-number summary")
        s = tuple(float(v) for v in self.summary)
        if any(b < a for a, b in zip(s, s[1:])):
            raise DataError(f"stage {self.stage!r} quantiles are not nondecreasing")
        object.__setattr__(self, "summary", s)


@dataclass(frozen=True)
class QuantileStudy:
    name: str
    groups: tuple
    age_floor: float
    age_ceiling: float

    def __post_init__(self):
        if not self.groups:
            raise DataError(f"study {self.name!r} has no stage groups")
        if self.age_ceiling <= self.age_floor:
            raise DataError(f"study {self.name!r}: floor/ceiling out of order")

    def group(self, stage: str) -> StageGroup:
        for g in self.groups:
            if g.stage == stage:
                return g
        raise DataError(f"study {self.name!r} has no stage {stage!r}")


@dataclass(frozen=True)
class RawCohort:
    """Reconstructed individual records: one age and maturity flag each."""

    ages: np.ndarray
    mature: np.ndarray

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=float)
        mature = np.asarray(self.mature, dtype=bool)
        if ages.shape != mature.shape or ages.ndim != 1:
            raise DataError("ages and maturity flags must be aligned 1-d arrays")
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "mature", mature)

    @property
    def size(self) -> int:
        return self.ages.size


def reconstruct_binned(study: BinnedStudy) -> RawCohort:
    """Midpoint reconstruction: every person in a bin gets the bin's middle
    age; the recorded number of them are flagged mature."""
    ages, flags = [], []
    for b in study.bins:
        ages.extend([b.midpoint] * b.n_total)
        flags.extend([True] * b.n_mature + [False] * (b.n_total - b.n_mature))
    return RawCohort(np.array(ages), np.array(flags, dtype=bool))


def _group_ages(group: StageGroup, floor: float, ceiling: float) -> np.ndarray:
    """Ages for one stage group via the quantile map.

    Standard-normal scores at probabilities (r - 0.5)/n are pushed through a
    piecewise-linear map whose knots send the normal quantiles at
    probabilities (0.5/n, 0.25, 0.5, 0.75, 1 - 0.5/n) to the group's
    five-number summary, then clipped to the study's age limits.  The
    extreme knots sit exactly on the first and last score, so the group's
    reported minimum and maximum are reproduced.
    """
    n = group.n
    p_edge = 0.5 / n
    knot_probs = [p_edge, 0.25, 0.5, 0.75, 1.0 - p_edge]
    knots = {}
    for p, v in zip(knot_probs, group.summary):
        # Tiny groups can collide the edge knots with the quartiles; merge.
        knots.setdefault(p, []).append(v)
    z_knots = np.array([ndtri(p) for p in sorted(knots)])
    v_knots = np.array([float(np.mean(knots[p])) for p in sorted(knots)])
    scores = ndtri((np.arange(1, n + 1) - 0.5) / n)
    ages = np.interp(scores, z_knots, v_knots)
    return np.clip(ages, floor, ceiling)


def reconstruct_quantiles(study: QuantileStudy) -> RawCohort:
    """Rebuild a cohort from per-stage five-number summaries."""
    ages, flags = [], []
    for g in study.groups:
        a = _group_ages(g, study.age_floor, study.age_ceiling)
        ages.append(a)
        flags.append(np.full(g.n, g.mature, dtype=bool))
    return RawCohort(np.concatenate(ages), np.concatenate(flags))


def reassign_stage_fraction(study: QuantileStudy, stage: str,
                            fraction: float) -> QuantileStudy:
    """Re-flag the oldest ``fraction`` of one stage as mature.

    The stage group is split on its reconstructed ages: the upper
    round(fraction * n) members form a new mature group, the rest keep the
    original flag.  Each part is summarized by its own empirical five-number
    summary.  Maturity correlates with age, so the old end of the group is
    the natural half to move.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DataError(f"fraction must be in [0, 1], got {fraction}")
    group = study.group(stage)
    n_move = int(math.floor(fraction * group.n + 0.5))
    if n_move == 0:
        return study
    if n_move == group.n:
        groups = tuple(
            StageGroup(g.stage, g.n, g.summary, True) if g.stage == stage else g
            for g in study.groups
        )
        return QuantileStudy(study.name, groups, study.age_floor, study.age_ceiling)

    ages = np.sort(_group_ages(group, study.age_floor, study.age_ceiling))
    parts = [
        (f"{stage}(lower)", ages[: group.n - n_move], group.mature),
        (f"{stage}(upper)", ages[group.n - n_move:], True),
    ]
    new_groups = []
    for g in study.groups:
        if g.stage != stage:
            new_groups.append(g)
            continue
        for label, part, flag in parts:
            summary = (
                float(part.min()),
                float(np.quantile(part, 0.25)),
                float(np.quantile(part, 0.5)),
                float(np.quantile(part, 0.75)),
                float(part.max()),
            )
            new_groups.append(StageGroup(label, part.size, summary, flag))
    return QuantileStudy(study.name, tuple(new_groups), study.age_floor,
                         study.age_ceiling)


class ProbitFit(NamedTuple):
    location: float
    scale: float


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _probit_pieces(x, ages, mature, hessian=False):
    """Negative Bernoulli-probit log likelihood in (location, log scale)
    coordinates, with gradient and optionally the 2x2 Hessian."""
    loc, log_scale = x
    scale = math.exp(log_scale)
    z = (ages - loc) / scale
    log_p = log_ndtr(z)
    log_q = log_ndtr(-z)
    ll = log_p[mature].sum() + log_q[~mature].sum()
    log_phi = -0.5 * z * z - _LOG_SQRT_2PI
    # d loglik / dz per record: inverse Mills ratio with the right sign
    a = np.exp(log_phi - log_p)
    b = np.exp(log_phi - log_q)
    dz = np.where(mature, a, -b)
    grad = np.array([-dz.sum() / scale, -(dz * z).sum()])
    if not hessian:
        return -ll, -grad
    d2z = np.where(mature, -z * a - a * a, z * b - b * b)
    h_mm = d2z.sum() / scale ** 2
    h_ms = (d2z * z).sum() / scale + dz.sum() / scale
    h_ss = (d2z * z * z).sum() + (dz * z).sum()
    hess = -np.array([[h_mm, h_ms], [h_ms, h_ss]])
    return -ll, -grad, hess


def _probit_negloglik(x, ages, mature):
    return _probit_pieces(x, ages, mature)


def fit_probit_mle(cohort: RawCohort, gtol: float = 1e-8) -> ProbitFit:
    """Maximum likelihood fit of P(mature | age) = Phi((age - loc)/scale).

    Optimizes in (location, log scale) with the analytic gradient via BFGS,
    starting from the cohort's age mean and standard deviation, then
    polishes with damped Newton steps until the gradient norm drops below
    ``gtol``.

    Raises
    ------
    DataError
        If the cohort does not contain both mature and immature records.
    FitError
        On perfect separation (some age threshold splits the classes
        exactly) or failure to reach the gradient tolerance.
    """
    mature = cohort.mature
    if mature.all() or not mature.any():
        raise DataError("probit fit needs both mature and immature records")
    if cohort.ages[~mature].max() < cohort.ages[mature].min():
        raise FitError("perfect separation: a threshold age splits the classes; "
                       "the probit likelihood has no finite maximizer")
    start = np.array([cohort.ages.mean(), math.log(max(cohort.ages.std(), 1e-3))])
    res = minimize(_probit_negloglik, start, args=(cohort.ages, mature),
                   jac=True, method="BFGS", options={"gtol": gtol, "maxiter": 500})
    x = res.x
    f, g = _probit_negloglik(x, cohort.ages, mature)
    for _ in range(50):
        if np.max(np.abs(g)) < gtol:
            break
        _, _, hess = _probit_pieces(x, cohort.ages, mature, hessian=True)
        try:
            step = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-8:
            f_new, g_new = _probit_negloglik(x + t * step, cohort.ages, mature)
            if f_new <= f:
                break
            t *= 0.5
        else:
            break
        x, f, g = x + t * step, f_new, g_new
    if np.max(np.abs(g)) > gtol:
        raise FitError(f"probit fit did not converge: |grad| = {np.abs(g).max():.2e}")
    loc, log_scale = x
    return ProbitFit(float(loc), float(math.exp(log_scale)))


def probit_standard_errors(cohort: RawCohort, fit: ProbitFit):
    """Asymptotic standard errors of a probit fit, from the observed
    information in (location, log scale) mapped back to (location, scale)."""
    x = np.array([fit.location, math.log(fit.scale)])
    _, _, info = _probit_pieces(x, cohort.ages, cohort.mature, hessian=True)
    cov = np.linalg.inv(info)
    se_loc = math.sqrt(cov[0, 0])
    se_scale = fit.scale * math.sqrt(cov[1, 1])
    return se_loc, se_scale


# --- study file readers ------------------------------------------------------
#
# Plain CSV with a header row; lines starting with '#' are comments.  Quantile
# studies must declare '# age_floor: <years>' and '# age_ceiling: <years>'.


def _read_rows(path):
    meta = {}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if ":" in body:
                    key, _, value = body.partition(":")
                    meta[key.strip()] = value.strip()
                continue
            rows.append(line)
    if not rows:
        raise DataError(f"{path}: no tabular content")
    parsed = list(csv.DictReader(rows))
    if not parsed:
        raise DataError(f"{path}: header only, no data rows")
    return meta, parsed


def read_binned_study(path, name: str | None = None) -> BinnedStudy:
    """Read a binned study file (columns age_lo, age_hi, n_total, n_mature)."""
    _, rows = _read_rows(path)
    try:
        bins = tuple(
            AgeBin(float(r["age_lo"]), float(r["age_hi"]),
                   int(r["n_total"]), int(r["n_mature"]))
            for r in rows
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed binned study file ({exc})") from exc
    return BinnedStudy(name or str(path), bins)


def read_quantile_study(path, name: str | None = None) -> QuantileStudy:
    """Read a stage-summary study file (columns stage, n, min, q25, median,
    q75, max, mature)."""
    meta, rows = _read_rows(path)
    try:
        floor = float(meta["age_floor"])
        ceiling = float(meta["age_ceiling"])
    except KeyError as exc:
        raise DataError(f"{path}: missing '# age_floor:'/'# age_ceiling:' comments") from exc
    try:
        groups = tuple(
            StageGroup(
                r["stage"],
                int(r["n"]),
                (float(r["min"]), float(r["q25"]), float(r["median"]),
                 float(r["q75"]), float(r["max"])),
                r["mature"].strip().lower() in ("1", "true", "yes"),
            )
            for r in rows
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed quantile study file ({exc})") from exc
    return QuantileStudy(name or str(path), groups, floor, ceiling)
