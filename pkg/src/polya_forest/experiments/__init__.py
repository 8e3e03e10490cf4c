"""Synthetic truths, rate studies and numerical lemma checks."""

from .lemmas import verify_lemmas
from .rates import RateResult, RateSettings, rate_experiment, spline_approx_oracle
from .truths import HolderTruth, holder_density, sample_data

__all__ = [
    "HolderTruth",
    "RateResult",
    "RateSettings",
    "holder_density",
    "rate_experiment",
    "sample_data",
    "spline_approx_oracle",
    "verify_lemmas",
]
