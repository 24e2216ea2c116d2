"""Model presets: named prior combinations and the fixed-parameter models
used by the goodness-of-fit check."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .datasets import load_model_presets
from .errors import DataError
from .indicators import PRIOR_PRESETS, IndicatorPrior

__all__ = ["ModelPreset", "get_model_preset", "preset_names",
           "FIXED_TEETH_MATURITY", "FIXED_KNEE_MATURITY"]


@dataclass(frozen=True)
class ModelPreset:
    name: str
    teeth_prior: IndicatorPrior
    knee_prior: IndicatorPrior

    @property
    def priors(self):
        return (self.teeth_prior, self.knee_prior)


@lru_cache(maxsize=1)
def _catalog() -> dict:
    out = {}
    for name, (teeth_label, knee_label) in load_model_presets().items():
        try:
            out[name] = ModelPreset(name, PRIOR_PRESETS[teeth_label],
                                    PRIOR_PRESETS[knee_label])
        except KeyError as exc:
            raise DataError(f"preset {name!r} references unknown prior {exc}") from exc
    return out


def preset_names():
    return sorted(_catalog())


def get_model_preset(name: str) -> ModelPreset:
    try:
        return _catalog()[name]
    except KeyError:
        raise DataError(
            f"unknown model preset {name!r}; available: {', '.join(preset_names())}"
        ) from None


#: Maturity (location, scale) values of the fixed-parameter models checked
#: against the observed table: the study probit estimates the priors are
#: centered on.
FIXED_TEETH_MATURITY = {"lucas": (18.6, 0.7), "mincer": (20.0, 3.2)}
FIXED_KNEE_MATURITY = {"ottow": (18.5, 1.5)}
