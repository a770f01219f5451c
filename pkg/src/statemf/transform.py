"""Stationarity transformations, their inversion, backcasting, and state weights.

All sequences are 1-d float arrays with NaN as the missing marker.  The
transformation codes are:

    1  no transformation
    2  first difference
    3  second difference
    4  log
    5  first difference of log
    6  second difference of log
    7  second difference of the period growth rate x_t/x_{t-1} - 1
    8  period growth rate x_t/x_{t-1} - 1
"""

from __future__ import annotations

import numpy as np

VALID_TCODES = frozenset(range(1, 9))

# number of leading observations a transform consumes
_CONSUMED = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 3, 8: 1}


class TransformError(ValueError):
    pass


def tcode_initial_count(tcode: int) -> int:
    """Number of leading level values needed to invert a transform."""
    if tcode not in VALID_TCODES:
        raise TransformError(f"invalid tcode {tcode}")
    return _CONSUMED[tcode]


def apply_tcode(series, tcode: int) -> np.ndarray:
    """Apply transformation `tcode` to a level series.

    Leading entries consumed by differencing come back as NaN.  Raises
    TransformError for non-positive values under a log/growth tcode or a
    series shorter than the transform needs.
    """
    x = np.asarray(series, dtype=float)
    if tcode not in VALID_TCODES:
        raise TransformError(f"invalid tcode {tcode}")
    need = _CONSUMED[tcode] + 1
    if x.size < need:
        raise TransformError(f"series of length {x.size} too short for tcode {tcode}")
    if tcode in (4, 5, 6) and np.any(x[np.isfinite(x)] <= 0):
        raise TransformError("non-positive value under a log transformation")
    if tcode in (7, 8) and np.any(x[np.isfinite(x)] == 0):
        raise TransformError("zero value under a growth-rate transformation")

    out = np.full_like(x, np.nan)
    if tcode == 1:
        out[:] = x
    elif tcode == 2:
        out[1:] = np.diff(x)
    elif tcode == 3:
        out[2:] = np.diff(x, 2)
    elif tcode == 4:
        out[:] = np.log(x)
    elif tcode == 5:
        out[1:] = np.diff(np.log(x))
    elif tcode == 6:
        out[2:] = np.diff(np.log(x), 2)
    elif tcode == 7:
        g = x[1:] / x[:-1] - 1.0
        out[3:] = np.diff(g, 2)
    elif tcode == 8:
        out[1:] = x[1:] / x[:-1] - 1.0
    return out


def invert_tcode(transformed, tcode: int, initial) -> np.ndarray:
    """Reconstruct the level series from its transform.

    `initial` supplies the leading level observations that differencing
    consumed (see tcode_initial_count).  The returned series has length
    len(initial) + len(transformed) for differencing tcodes and
    len(transformed) otherwise, so apply_tcode(invert_tcode(z)) drops its
    leading NaNs onto z again.
    """
    z = np.asarray(transformed, dtype=float)
    init = np.asarray(initial, dtype=float)
    need = tcode_initial_count(tcode)
    if init.size != need:
        raise TransformError(f"tcode {tcode} needs {need} initial values, got {init.size}")

    if tcode == 1:
        return z.copy()
    if tcode == 4:
        return np.exp(z)
    if tcode == 2:
        return np.concatenate([init, init[-1] + np.cumsum(z)])
    if tcode == 3:
        d = np.concatenate([[init[1] - init[0]], np.zeros(0)])
        first_diffs = d[-1] + np.cumsum(z)
        return np.concatenate([init, init[-1] + np.cumsum(first_diffs)])
    if tcode == 5:
        return np.concatenate([init, init[-1] * np.exp(np.cumsum(z))])
    if tcode == 6:
        dlog0 = np.log(init[1]) - np.log(init[0])
        dlogs = dlog0 + np.cumsum(z)
        logs = np.log(init[-1]) + np.cumsum(dlogs)
        return np.concatenate([init, np.exp(logs)])
    if tcode == 8:
        return np.concatenate([init, init[-1] * np.cumprod(1.0 + z)])
    # tcode 7: z = second difference of growth rates; initial = 3 levels
    g0 = init[1] / init[0] - 1.0
    g1 = init[2] / init[1] - 1.0
    dg = (g1 - g0) + np.cumsum(z)
    growths = g1 + np.cumsum(dg)
    return np.concatenate([init, init[-1] * np.cumprod(1.0 + growths)])


def backcast_by_national_growth(state_series, national_series) -> np.ndarray:
    """Fill a leading gap by extrapolating backwards with national YoY growth.

    The first observed state value is carried backwards via
    x_{t-12} = x_t / (nat_t / nat_{t-12}); observed values are untouched.
    """
    x = np.asarray(state_series, dtype=float).copy()
    nat = np.asarray(national_series, dtype=float)
    if x.shape != nat.shape:
        raise TransformError("state and national series must share the time axis")
    observed = np.isfinite(x)
    if not observed.any():
        raise TransformError("state series has no observed values")
    t0 = int(np.argmax(observed))
    if t0 == 0:
        return x
    if not np.all(np.isfinite(nat[: t0 + 12])):
        raise TransformError("national series missing inside the backcast gap")
    for t in range(t0 - 1, -1, -1):
        if nat[t + 12] == 0:
            raise TransformError("zero national value in growth-rate backcast")
        x[t] = x[t + 12] / (nat[t + 12] / nat[t])
    return x


def backcast_by_ols(state_series, national_series) -> np.ndarray:
    """Fill a leading gap with fitted values of state ~ a + b * national.

    Coefficients are estimated on the overlap where both series are
    observed; the fit is in levels.
    """
    x = np.asarray(state_series, dtype=float).copy()
    nat = np.asarray(national_series, dtype=float)
    if x.shape != nat.shape:
        raise TransformError("state and national series must share the time axis")
    overlap = np.isfinite(x) & np.isfinite(nat)
    if overlap.sum() < 3:
        raise TransformError("overlap shorter than 3 observations")
    ns, xs = nat[overlap], x[overlap]
    if np.ptp(ns) == 0:
        raise TransformError("degenerate regressor: national series constant in overlap")
    slope, intercept = np.polyfit(ns, xs, 1)
    gap = ~np.isfinite(x)
    if np.any(gap & ~np.isfinite(nat)):
        raise TransformError("national series missing inside the gap")
    x[gap] = intercept + slope * nat[gap]
    return x


def fill_exogenous_ragged_edge(series, horizon: int) -> np.ndarray:
    """Replace trailing NaNs and extend `horizon` months with AR(1) forecasts.

    An AR(1) with intercept is fit by OLS on the observed prefix; forecasts
    are iterated forward.  The series must already be stationary-transformed.
    """
    x = np.asarray(series, dtype=float)
    observed = np.isfinite(x)
    if not observed.any():
        raise TransformError("series is entirely missing")
    last = int(np.flatnonzero(observed)[-1])
    head = x[: last + 1]
    if not np.all(np.isfinite(head)):
        raise TransformError("internal gaps not supported; only a ragged tail")
    n_tail = x.size - (last + 1)
    if horizon < 0:
        raise TransformError("horizon must be >= 0")
    n_fore = n_tail + horizon
    if n_fore == 0:
        return x.copy()
    if head.size < 10:
        raise TransformError("need at least 10 observations to fit the AR(1)")
    yy, yl = head[1:], head[:-1]
    X = np.column_stack([np.ones_like(yl), yl])
    (c, rho), *_ = np.linalg.lstsq(X, yy, rcond=None)
    out = np.empty(x.size + horizon)
    out[: last + 1] = head
    prev = head[-1]
    for t in range(n_fore):
        prev = c + rho * prev
        out[last + 1 + t] = prev
    return out


def compute_state_weights(state_levels, national_levels, annual: bool = False) -> np.ndarray:
    """Per-state output shares from annual levels.

    `state_levels` is (n_states, n_years), `national_levels` is (n_years,).
    Default is the full-sample average share per state; with annual=True the
    (n_states, n_years) matrix of per-year shares is returned instead.
    """
    sl = np.asarray(state_levels, dtype=float)
    nl = np.asarray(national_levels, dtype=float)
    if sl.ndim != 2 or nl.ndim != 1 or sl.shape[1] != nl.size:
        raise TransformError("state_levels must be (n_states, n_years) matching national_levels")
    if np.any(sl <= 0) or np.any(nl <= 0):
        raise TransformError("levels must be strictly positive")
    shares = sl / nl
    if annual:
        return shares
    return shares.mean(axis=1)
