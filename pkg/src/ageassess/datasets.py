"""Access to the bundled data files (observed table, study summaries,
model presets)."""

from __future__ import annotations

import csv
from importlib import resources

from .errors import DataError
from .studies import BinnedStudy, QuantileStudy, read_binned_study, read_quantile_study

__all__ = [
    "data_path",
    "load_observed_table",
    "load_lucas_study",
    "load_mincer_study",
    "load_ottow_study",
    "load_model_presets",
]


def data_path(name: str):
    """Filesystem path of a bundled data file."""
    path = resources.files("ageassess").joinpath("data", name)
    if not path.is_file():
        raise DataError(f"no bundled data file named {name!r}")
    return path


def load_observed_table():
    from .tableio import read_observed_table

    return read_observed_table(data_path("table1.csv"))


def load_lucas_study() -> BinnedStudy:
    return read_binned_study(data_path("lucas_bins.csv"), name="lucas")


def load_mincer_study() -> QuantileStudy:
    return read_quantile_study(data_path("mincer_groups.csv"), name="mincer")


def load_ottow_study() -> QuantileStudy:
    return read_quantile_study(data_path("ottow_groups.csv"), name="ottow")


def load_model_presets() -> dict:
    """Preset name -> (teeth prior label, knee prior label)."""
    out = {}
    with open(data_path("model_presets.csv"), newline="", encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    for row in csv.DictReader(rows):
        out[row["name"]] = (row["teeth_prior"], row["knee_prior"])
    if not out:
        raise DataError("model preset file is empty")
    return out
