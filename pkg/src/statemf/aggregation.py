"""Measurement rows encoding intertemporal and cross-sectional restrictions.

Each constraint is a linear row over lags of latent high-frequency growth
rates.  Intertemporal rows are exact (zero noise variance); cross-sectional
adding-up rows carry a Gaussian slack with variance sigma2_cs.

Weight patterns follow the triangle rule for aggregating k sub-periods:
(1/k, 2/k, ..., k/k, ..., 2/k, 1/k) over 2k-1 lags, which sums to k.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# month-of-year activation schedules
SCHEDULE_MONTHLY = frozenset(range(1, 13))
SCHEDULE_QUARTER_END = frozenset({3, 6, 9, 12})
SCHEDULE_YEAR_END = frozenset({12})


def triangle_weights(k: int) -> np.ndarray:
    """Aggregation weights (1/k .. k/k .. 1/k) over lags 0..2k-2."""
    up = np.arange(1, k + 1) / k
    return np.concatenate([up, up[-2::-1]])


@dataclass(frozen=True)
class ConstraintRow:
    """One measurement row: target = sum of weight * latent[id] at lag + noise."""

    target: str
    weights: tuple  # of (latent_id, lag, weight)
    variance: float
    schedule: frozenset  # months of the year at which the row is active

    def max_lag(self) -> int:
        return max(lag for _, lag, _ in self.weights)

    def evaluate(self, paths: dict, t: int) -> float:
        """Noise-free row value given latent paths (id -> array) at index t."""
        return float(sum(w * paths[lid][t - lag] for lid, lag, w in self.weights))


def _check_ids(*ids):
    for i in ids:
        if not isinstance(i, str) or not i:
            raise ValueError(f"invalid series id {i!r}")


def quarterly_monthly_row(target: str, latent: str) -> ConstraintRow:
    """Quarterly growth as the 5-lag triangle over latent monthly growth."""
    _check_ids(target, latent)
    w = triangle_weights(3)
    return ConstraintRow(
        target=target,
        weights=tuple((latent, lag, float(w[lag])) for lag in range(5)),
        variance=0.0,
        schedule=SCHEDULE_QUARTER_END,
    )


def annual_monthly_row(target: str, latent: str) -> ConstraintRow:
    """Annual growth as the 23-lag triangle over latent monthly growth."""
    _check_ids(target, latent)
    w = triangle_weights(12)
    return ConstraintRow(
        target=target,
        weights=tuple((latent, lag, float(w[lag])) for lag in range(23)),
        variance=0.0,
        schedule=SCHEDULE_YEAR_END,
    )


def annual_quarterly_row(target: str, latent: str) -> ConstraintRow:
    """Annual growth as the 7-lag triangle over latent quarterly growth.

    Lags here are quarterly; the schedule marks the year-end month of the
    fourth quarter.
    """
    _check_ids(target, latent)
    w = triangle_weights(4)
    return ConstraintRow(
        target=target,
        weights=tuple((latent, lag, float(w[lag])) for lag in range(7)),
        variance=0.0,
        schedule=SCHEDULE_YEAR_END,
    )


def cross_sectional_row(target: str, states, variance: float,
                        quarterly: bool = False) -> ConstraintRow:
    """National growth as the share-weighted sum of state growths plus slack.

    `states` is a list of (series_id, weight).  The monthly variant is
    active every month; with quarterly=True it is active at quarter ends.
    """
    _check_ids(target)
    states = list(states)
    if not states:
        raise ValueError("empty state list")
    if variance <= 0:
        raise ValueError("cross-sectional variance must be positive")
    for sid, w in states:
        _check_ids(sid)
        if w <= 0:
            raise ValueError(f"non-positive weight for {sid}")
    return ConstraintRow(
        target=target,
        weights=tuple((sid, 0, float(w)) for sid, w in states),
        variance=float(variance),
        schedule=SCHEDULE_QUARTER_END if quarterly else SCHEDULE_MONTHLY,
    )


def write_constraints_csv(rows, path) -> None:
    """Audit dump: target,latent,lag,weight,variance."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target", "latent", "lag", "weight", "variance"])
        for row in rows:
            for lid, lag, wt in row.weights:
                w.writerow([row.target, lid, lag, repr(wt), repr(row.variance)])
