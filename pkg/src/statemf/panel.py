"""Data model and ingestion for mixed-frequency, ragged-edge, vintage panels.

A panel holds every series on a common monthly axis.  Quarterly values sit
at the last month of their quarter (months 3, 6, 9, 12), annual values at
month 12.  Missingness is an explicit boolean mask, never a sentinel value.
Panels are immutable after construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

FREQUENCIES = ("monthly", "quarterly", "annual")
ROLES = ("endogenous", "exogenous")


class PanelError(ValueError):
    pass


def month_index(label: str) -> np.datetime64:
    """Parse an ISO-8601 month label ('1964-03') to datetime64[M]."""
    try:
        return np.datetime64(label.strip(), "M")
    except ValueError as exc:
        raise PanelError(f"bad month label {label!r}") from exc


def month_of_year(m: np.datetime64) -> int:
    """Calendar month 1..12 of a datetime64[M]."""
    return int(m.astype("datetime64[M]").astype(int) % 12) + 1


@dataclass(frozen=True)
class SeriesMeta:
    id: str
    frequency: str
    role: str
    scope: str  # "national" or a state id
    tcode: int
    release_lag_months: int
    break_month: np.datetime64 | None = None  # annual -> quarterly observability switch

    def __post_init__(self):
        if self.frequency not in FREQUENCIES:
            raise PanelError(f"{self.id}: unknown frequency {self.frequency!r}")
        if self.role not in ROLES:
            raise PanelError(f"{self.id}: unknown role {self.role!r}")
        if not 1 <= int(self.tcode) <= 8:
            raise PanelError(f"{self.id}: tcode must be in 1..8, got {self.tcode}")
        if self.release_lag_months < 0:
            raise PanelError(f"{self.id}: negative release lag")
        if self.frequency == "annual" and not (
            self.role == "endogenous" and self.scope != "national"
        ):
            raise PanelError(f"{self.id}: annual frequency allowed only for "
                             "endogenous state-level series")

    def allowed_month(self, m: np.datetime64) -> bool:
        """Whether the series may carry an observation in calendar month m."""
        moy = month_of_year(m)
        if self.frequency == "monthly":
            return True
        if self.frequency == "quarterly":
            return moy in (3, 6, 9, 12)
        # annual, possibly with a quarterly observability break
        if self.break_month is not None and m >= self.break_month:
            return moy in (3, 6, 9, 12)
        return moy == 12


@dataclass(frozen=True)
class MixedFrequencyPanel:
    months: np.ndarray          # (T,) datetime64[M], consecutive
    metas: tuple                # of SeriesMeta, panel row order
    values: np.ndarray          # (n_series, T) float, NaN where unobserved
    vintage: str = "unversioned"

    def __post_init__(self):
        if self.values.shape != (len(self.metas), self.months.size):
            raise PanelError("values shape does not match metas/months")
        self.values.setflags(write=False)
        self.months.setflags(write=False)

    @property
    def mask(self) -> np.ndarray:
        """(n_series, T) observability mask."""
        return np.isfinite(self.values)

    @property
    def ids(self) -> tuple:
        return tuple(m.id for m in self.metas)

    def meta(self, series_id: str) -> SeriesMeta:
        for m in self.metas:
            if m.id == series_id:
                return m
        raise PanelError(f"unknown series id {series_id!r}")

    def series(self, series_id: str) -> np.ndarray:
        return self.values[self.ids.index(series_id)]

    def index_of(self, month) -> int:
        m = month if isinstance(month, np.datetime64) else month_index(month)
        idx = int((m - self.months[0]).astype(int))
        if not 0 <= idx < self.months.size:
            raise PanelError(f"month {m} outside the panel axis")
        return idx


@dataclass(frozen=True)
class ReleaseCalendar:
    """Per-series release lags, with optional per-month overrides.

    `lags` maps series id -> lag in months; `overrides` maps
    (series_id, estimation month) -> last observable month.
    """

    lags: dict
    overrides: dict = None

    def last_observable(self, series_id: str, as_of: np.datetime64) -> np.datetime64:
        if self.overrides and (series_id, as_of) in self.overrides:
            return self.overrides[(series_id, as_of)]
        if series_id not in self.lags:
            raise PanelError(f"calendar missing series {series_id!r}")
        return as_of - np.timedelta64(int(self.lags[series_id]), "M")


def load_schema(path) -> list:
    """Read a schema CSV: series_id,frequency,role,scope,tcode,release_lag_months
    with an optional break_month column."""
    metas = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            brk = row.get("break_month") or None
            metas.append(SeriesMeta(
                id=row["series_id"].strip(),
                frequency=row["frequency"].strip(),
                role=row["role"].strip(),
                scope=row["scope"].strip(),
                tcode=int(row["tcode"]),
                release_lag_months=int(row["release_lag_months"]),
                break_month=month_index(brk) if brk else None,
            ))
    return metas


def load_calendar(path) -> ReleaseCalendar:
    """Read a calendar CSV: series_id,release_lag_months plus optional
    override rows series_id,month,last_period."""
    lags, overrides = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sid = row["series_id"].strip()
            if row.get("month") and row.get("last_period"):
                overrides[(sid, month_index(row["month"]))] = month_index(row["last_period"])
            else:
                lags[sid] = int(row["release_lag_months"])
    return ReleaseCalendar(lags=lags, overrides=overrides or None)


def load_panel(path, schema, vintage: str = "unversioned") -> MixedFrequencyPanel:
    """Read a long-format CSV `date,series_id,value` into a panel.

    The monthly axis spans the earliest to the latest date in the file.
    Rows that violate a series' frequency placement are rejected.
    """
    metas = {m.id: m for m in schema}
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:3]] != [
            "date", "series_id", "value"
        ]:
            raise PanelError(f"{path}: expected header date,series_id,value")
        for row in reader:
            sid = row["series_id"].strip()
            if sid not in metas:
                raise PanelError(f"unknown series id {sid!r}")
            m = month_index(row["date"])
            val = row["value"].strip()
            records.append((m, sid, float(val) if val else np.nan))
    if not records:
        raise PanelError(f"{path}: no data rows")

    start = min(r[0] for r in records)
    stop = max(r[0] for r in records)
    T = int((stop - start).astype(int)) + 1
    months = start + np.arange(T).astype("timedelta64[M]")

    order = list(metas)
    values = np.full((len(order), T), np.nan)
    seen = set()
    for m, sid, val in records:
        if (m, sid) in seen:
            raise PanelError(f"duplicate ({m}, {sid}) pair")
        seen.add((m, sid))
        if np.isnan(val):
            continue
        meta = metas[sid]
        if not meta.allowed_month(m):
            if meta.frequency == "annual":
                raise PanelError(f"{sid}: annual value outside December at {m}")
            raise PanelError(f"{sid}: {meta.frequency} value at forbidden month {m}")
        values[order.index(sid), int((m - start).astype(int))] = val

    return MixedFrequencyPanel(
        months=months, metas=tuple(metas.values()), values=values, vintage=vintage
    )


def write_panel(panel: MixedFrequencyPanel, path) -> None:
    """Write the observed cells of a panel back to date,series_id,value CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "series_id", "value"])
        for i, meta in enumerate(panel.metas):
            for t in np.flatnonzero(panel.mask[i]):
                w.writerow([str(panel.months[t]), meta.id, repr(float(panel.values[i, t]))])


def truncate_to_vintage(panel: MixedFrequencyPanel, calendar: ReleaseCalendar,
                        as_of) -> MixedFrequencyPanel:
    """Mask every series past its last observable month at `as_of`.

    The time axis itself is cut at `as_of`, producing the ragged edge a
    real-time estimator would face.
    """
    as_of_m = as_of if isinstance(as_of, np.datetime64) else month_index(as_of)
    cut = panel.index_of(as_of_m)
    values = panel.values[:, : cut + 1].copy()
    months = panel.months[: cut + 1].copy()
    for i, meta in enumerate(panel.metas):
        last = calendar.last_observable(meta.id, as_of_m)
        hide = months > last
        values[i, hide] = np.nan
    return replace(panel, months=months, values=values, vintage=str(as_of_m))
