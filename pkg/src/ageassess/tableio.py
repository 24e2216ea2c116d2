"""Delimited-text and JSON input/output: observed tables, chain sample
files, error-rate tables, and population band tables.

All tabular files are comma-separated with a header row; lines starting
with '#' are comments.  Floats are written with full round-trip precision
so that re-reading a file reproduces the values bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .assessment import AgeClass, ErrorRateTable
from .errors import DataError
from .indicators import IndicatorPrior, IndicatorState
from .inference import ChainConfig, ChainOutput, ObservedTable
from .population import AgeGrid, BandTable, ProfilePrior

__all__ = [
    "read_observed_table",
    "write_observed_table",
    "write_predicted_table",
    "write_chain",
    "read_chain",
    "write_error_rate_files",
    "write_band_table",
]

_TEETH_ROWS = ("teeth_mature", "teeth_immature", "teeth_missing")
_KNEE_COLS = ("knee_mature", "knee_immature", "knee_missing")
_ROW_STATE = {
    "teeth_mature": IndicatorState.MATURE,
    "teeth_immature": IndicatorState.IMMATURE,
    "teeth_missing": IndicatorState.MISSING,
}
_COL_STATE = {
    "knee_mature": IndicatorState.MATURE,
    "knee_immature": IndicatorState.IMMATURE,
    "knee_missing": IndicatorState.MISSING,
}


def _data_lines(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip() and not line.startswith("#")]
    if not lines:
        raise DataError(f"{path}: no tabular content")
    return lines


def read_observed_table(path) -> ObservedTable:
    """Read a 3x3 classification count table.

    Layout: teeth states as rows, knee states as columns.  A trailing SUM
    row/column is optional but validated when present.
    """
    rows = list(csv.reader(_data_lines(path)))
    header = [h.strip() for h in rows[0]]
    if header[1:4] != list(_KNEE_COLS):
        raise DataError(
            f"{path}: expected columns {_KNEE_COLS}, got {header[1:4]}"
        )
    has_sum_col = len(header) > 4 and header[4].upper() == "SUM"
    cells = {}
    col_totals = np.zeros(3)
    stated_col_totals = None
    for row in rows[1:]:
        label = row[0].strip()
        if label.upper() == "SUM":
            stated_col_totals = [int(v) for v in row[1:4]]
            continue
        if label not in _ROW_STATE:
            raise DataError(f"{path}: unexpected row label {label!r}")
        values = [int(v) for v in row[1:4]]
        if any(v < 0 for v in values):
            raise DataError(f"{path}: negative count in row {label!r}")
        if has_sum_col and row[4].strip() != "":
            if int(row[4]) != sum(values):
                raise DataError(
                    f"{path}: row {label!r} sums to {sum(values)}, "
                    f"stated {row[4]}"
                )
        col_totals += values
        for col_label, value in zip(_KNEE_COLS, values):
            cells[(_ROW_STATE[label], _COL_STATE[col_label])] = value
    if len(cells) != 9:
        raise DataError(f"{path}: table must have all three teeth rows")
    if stated_col_totals is not None and list(col_totals) != stated_col_totals:
        raise DataError(
            f"{path}: column sums {list(map(int, col_totals))} do not match "
            f"stated totals {stated_col_totals}"
        )
    return ObservedTable.from_cells(cells)


def _format_table(values, float_fmt=False) -> str:
    """Render the 3x3 layout (teeth rows, knee columns) with SUM margins."""
    grid = np.asarray(values, dtype=float).reshape(3, 3)
    # canonical order is (immature, mature, missing); table layout leads
    # with the mature row/column
    order = [1, 0, 2]
    grid = grid[np.ix_(order, order)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([""] + list(_KNEE_COLS) + ["SUM"])

    def fmt(x):
        return repr(float(x)) if float_fmt else str(int(round(x)))

    for label, row in zip(_TEETH_ROWS, grid):
        writer.writerow([label] + [fmt(v) for v in row] + [fmt(row.sum())])
    writer.writerow(["SUM"] + [fmt(v) for v in grid.sum(axis=0)]
                    + [fmt(grid.sum())])
    return out.getvalue()


def write_observed_table(path, table: ObservedTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_format_table(table.counts))


def write_predicted_table(path, predicted) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_format_table(predicted.expected, float_fmt=True))


# --- chain sample files -------------------------------------------------


def _prior_dict(prior: IndicatorPrior) -> dict:
    return {
        "label": prior.label,
        "location_mean": prior.location_mean,
        "location_sd": prior.location_sd,
        "scale_mean": prior.scale_mean,
        "scale_sd": prior.scale_sd,
    }


def chain_metadata(output: ChainOutput) -> dict:
    """Deterministic run description: full config echo plus acceptance
    rates.  Wall time is deliberately kept out (see timing.log)."""
    config = output.config
    return {
        "format": "ageassess-chain-v1",
        "package_version": __version__,
        "config": {
            "cycles": config.cycles,
            "burn_in": config.burn_in,
            "thinning": config.thinning,
            "seed": config.seed,
            "adapt_target": config.adapt_target,
            "adapt_interval": config.adapt_interval,
            "fix_params": config.fix_params,
            "indicator_names": list(config.indicator_names),
            "priors": [_prior_dict(p) for p in config.priors],
            "profile_concentration": config.profile_prior.concentration,
            "proposal_sds": [list(map(float, s)) for s in config.proposal_sds],
        },
        "grid": {
            "descriptor": config.grid.descriptor,
            "ages": [repr(a) for a in config.grid.ages],
        },
        "observed_counts": [int(c) for c in output.observed.counts],
        "acceptance_rates": [float(r) for r in output.acceptance_rates],
        "final_step_sds": [list(map(float, s)) for s in output.final_step_sds],
        "n_samples": output.n_samples,
    }


def write_chain(directory, output: ChainOutput) -> None:
    """Write samples.csv and metadata.json into ``directory``.

    One sample row per line: cycle index, the four parameters of each
    indicator, then the cumulative profile at every grid age.  Both files
    are bit-identical across runs with the same seed.
    """
    os.makedirs(directory, exist_ok=True)
    names = output.parameter_names()
    t = output.grid.size
    with open(os.path.join(directory, "samples.csv"), "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cycle"] + names + [f"cum_{j + 1:03d}" for j in range(t)])
        cumulative = output.cumulative_weights()
        flat = output.parameter_matrix()
        for s in range(output.n_samples):
            writer.writerow(
                [int(output.cycle_index[s])]
                + [repr(float(v)) for v in flat[s]]
                + [repr(float(v)) for v in cumulative[s]]
            )
    with open(os.path.join(directory, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(chain_metadata(output), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_chain(directory) -> ChainOutput:
    """Rebuild a chain object from samples.csv + metadata.json.

    Per-cycle acceptance flags are not stored in the files; the rebuilt
    object carries everything the reporting layer needs (samples, grid,
    config echo, observed table).
    """
    meta_path = os.path.join(directory, "metadata.json")
    samples_path = os.path.join(directory, "samples.csv")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"{directory}: missing metadata.json") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON ({exc})") from exc
    if meta.get("format") != "ageassess-chain-v1":
        raise DataError(f"{meta_path}: not a chain metadata file")

    conf = meta["config"]
    grid = AgeGrid(tuple(float(a) for a in meta["grid"]["ages"]),
                   descriptor=meta["grid"]["descriptor"])
    priors = tuple(
        IndicatorPrior(p["label"], p["location_mean"], p["location_sd"],
                       p["scale_mean"], p["scale_sd"])
        for p in conf["priors"]
    )
    config = ChainConfig(
        priors=priors,
        profile_prior=ProfilePrior(conf["profile_concentration"], grid),
        cycles=conf["cycles"],
        burn_in=conf["burn_in"],
        thinning=conf["thinning"],
        seed=conf["seed"],
        proposal_sds=tuple(np.asarray(s) for s in conf["proposal_sds"]),
        adapt_target=conf["adapt_target"],
        adapt_interval=conf["adapt_interval"],
        fix_params=conf["fix_params"],
        indicator_names=tuple(conf["indicator_names"]),
    )
    observed = ObservedTable(np.asarray(meta["observed_counts"], dtype=np.int64),
                             n_indicators=len(priors))

    n_ind = len(priors)
    try:
        raw = np.genfromtxt(samples_path, delimiter=",", skip_header=1)
    except OSError as exc:
        raise DataError(f"{directory}: missing samples.csv") from exc
    raw = np.atleast_2d(raw)
    expected_cols = 1 + 4 * n_ind + grid.size
    if raw.shape[1] != expected_cols:
        raise DataError(
            f"{samples_path}: expected {expected_cols} columns, got {raw.shape[1]}"
        )
    cycles = raw[:, 0].astype(np.int64)
    params = raw[:, 1:1 + 4 * n_ind].reshape(-1, n_ind, 4)
    cumulative = raw[:, 1 + 4 * n_ind:]
    weights = np.diff(np.concatenate(
        [np.zeros((cumulative.shape[0], 1)), cumulative], axis=1), axis=1)
    return ChainOutput(
        config=config,
        observed=observed,
        cycle_index=cycles,
        params=params,
        weights=weights,
        accepted=np.zeros((config.cycles, n_ind), dtype=bool),
        final_step_sds=tuple(np.asarray(s) for s in meta["final_step_sds"]),
    )


# --- report files ---------------------------------------------------------


def write_error_rate_files(base_path, table: ErrorRateTable,
                           model_name: str = "") -> None:
    """Write <base>.csv (raw rates) and <base>.json (presentation layout,
    whole percent, mirroring the published table shape)."""
    with open(str(base_path) + ".csv", "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell", "teeth_state", "knee_state", "n_observed",
                         "classification", "error_rate", "interval_low",
                         "interval_high", "n_samples"])
        for r in table.rows:
            teeth, knee = r.states
            writer.writerow([
                r.label, teeth.name.lower(), knee.name.lower(), r.n_observed,
                "over18" if r.classification is AgeClass.OVER_18 else "under18",
                repr(r.mean_rate), repr(r.interval_low), repr(r.interval_high),
                r.n_samples,
            ])
    doc = {
        "model": model_name,
        "threshold_years": table.threshold,
        "interval_level": table.level,
        "estimator": table.estimator,
        "units": "percent, rounded to nearest integer",
        "sections": [
            {
                "classified_as": section,
                "cells": [
                    {
                        "cell": r.label,
                        "n": r.n_observed,
                        "error_rate": r.percent()[0],
                        "interval": [r.percent()[1], r.percent()[2]],
                    }
                    for r in table.rows
                    if (r.classification is AgeClass.OVER_18) == (section == "over18")
                ],
            }
            for section in ("over18", "under18")
        ],
    }
    with open(str(base_path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_band_table(path, bands: BandTable) -> None:
    """Cumulative quantile bands as CSV: age, then one column per level.
    Bands are pointwise per age."""
    with open(path, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["age"] + [f"cum_q{level:g}" for level in bands.levels])
        for j, age in enumerate(bands.ages):
            writer.writerow([repr(float(age))]
                            + [repr(float(v)) for v in bands.values[:, j]])
