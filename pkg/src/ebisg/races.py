"""Canonical race categories and probability-vector helpers.

Every probability distribution over race in this toolkit is a length-6
float64 vector in the fixed order below. The order is serialized into
every artifact file so that tables and models can never silently disagree
about which column is which.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

# Fixed global category order. Asian includes Native Hawaiian and Other
# Pacific Islander; "other" absorbs multi-race categories from source data.
RACES: tuple[str, ...] = ("white", "black", "hispanic", "asian", "aian", "other")

N_RACES = len(RACES)

RACE_INDEX: dict[str, int] = {race: i for i, race in enumerate(RACES)}

# Tolerance for the sum-to-one invariant on stored distributions.
SUM_TOL = 1e-9


def as_distribution(values, *, where: str = "distribution") -> np.ndarray:
    """Validate and return a race probability vector as float64.

    Raises DataError if the vector is not length 6, has negative or
    non-finite entries, or does not sum to 1 within SUM_TOL.
    """
    p = np.asarray(values, dtype=np.float64)
    if p.shape != (N_RACES,):
        raise DataError(f"{where}: expected {N_RACES} probabilities, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DataError(f"{where}: non-finite probability")
    if np.any(p < 0):
        raise DataError(f"{where}: negative probability {p.min()}")
    total = float(p.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise DataError(f"{where}: probabilities sum to {total!r}, expected 1")
    return p


def is_distribution(p: np.ndarray) -> bool:
    """True iff p satisfies the race-distribution invariants."""
    return (
        p.shape == (N_RACES,)
        and bool(np.all(np.isfinite(p)))
        and bool(np.all(p >= 0))
        and abs(float(p.sum()) - 1.0) <= SUM_TOL
    )


def renormalize(raw, *, where: str = "row") -> np.ndarray:
    """Scale a non-negative vector to sum 1; raises DataError on all-zero input."""
    p = np.asarray(raw, dtype=np.float64)
    if p.shape != (N_RACES,):
        raise DataError(f"{where}: expected {N_RACES} values, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise DataError(f"{where}: negative or non-finite proportion")
    total = float(p.sum())
    if total <= 0.0:
        raise DataError(f"{where}: proportions are all zero")
    return p / total


def race_index(label: str, *, where: str = "race") -> int:
    """Map a canonical race label to its column index."""
    try:
        return RACE_INDEX[label]
    except KeyError:
        raise DataError(f"{where}: unknown race label {label!r}; expected one of {RACES}") from None


def one_hot(label: str) -> np.ndarray:
    """One-hot distribution for a canonical race label."""
    v = np.zeros(N_RACES)
    v[race_index(label)] = 1.0
    return v
