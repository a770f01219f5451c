"""Synthetic multi-state growth worlds for testing and benchmarking.

The generator draws latent monthly state growth from a stable VAR with
cross-state spillovers, defines national growth as the exact
share-weighted sum of state growth, and emits the observables a
real-data panel would contain: noisy monthly indicators, quarterly
national output growth, and state output growth that switches from
annual to quarterly observability at a configurable break month.  All
low-frequency observations are built with the same triangle weights the
estimator imposes, so aggregation constraints hold exactly in truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import (
    ConstraintRow,
    SCHEDULE_QUARTER_END,
    annual_quarterly_row,
    cross_sectional_row,
    quarterly_monthly_row,
    triangle_weights,
)
from .evaluation import ModelDefinition
from .mfvar import McmcSettings, ModelSpec, aggregate_monthly_to_quarterly
from .panel import (
    MixedFrequencyPanel,
    ReleaseCalendar,
    SeriesMeta,
    month_index,
    month_of_year,
)


class SimulationError(ValueError):
    pass


# shrinkage-scale truncation for models built on simulated worlds: the
# exact cross-sectional identity makes designs near-collinear, so an
# unbounded local scale lets weakly identified coefficient directions
# draw explosive dynamics and the state paths diverge.  The cap keeps
# the conditional prior standard deviation within one order of magnitude
# of the equation noise.
SCALE_BOUNDS = (1e-8, 10.0)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the synthetic multi-state data-generating process."""

    n_states: int = 3
    start: str = "1994-01"
    n_months: int = 360
    break_month: str | None = "2009-01"   # annual -> quarterly switch
    ar: float = 0.4
    spill: float = 0.15
    drift: float = 0.2
    shock_scale: float = 0.5
    state_indicator_noise: float = 0.35
    national_indicator_noise: float = 0.05
    weights: tuple | None = None

    def __post_init__(self):
        if self.n_states < 1:
            raise SimulationError("need at least one state")
        if self.n_months < 24:
            raise SimulationError("need at least 24 months")
        if self.shock_scale <= 0:
            raise SimulationError("shock scale must be positive")
        if self.weights is not None and len(self.weights) != self.n_states:
            raise SimulationError("one weight per state required")

    def share_weights(self) -> np.ndarray:
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
        else:
            w = np.arange(1, self.n_states + 1, dtype=float)
        if np.any(w <= 0):
            raise SimulationError("weights must be positive")
        return w / w.sum()

    def transition(self) -> np.ndarray:
        """Own persistence plus a one-step ring of spillovers."""
        Phi = self.ar * np.eye(self.n_states)
        if self.n_states > 1:
            for i in range(self.n_states):
                Phi[i, (i + 1) % self.n_states] += self.spill
        if np.max(np.abs(np.linalg.eigvals(Phi))) >= 1.0:
            raise SimulationError("configured dynamics are explosive")
        return Phi


@dataclass
class SimulatedWorld:
    """A synthetic panel plus the monthly truth behind it."""

    config: DgpConfig
    panel: MixedFrequencyPanel
    calendar: ReleaseCalendar
    truth: dict = field(default_factory=dict)   # series id -> monthly growth
    weights: np.ndarray = None

    def state_ids(self) -> tuple:
        return tuple(f"s{i + 1}" for i in range(self.config.n_states))


def _annual_from_monthly(g: np.ndarray, moy: np.ndarray) -> np.ndarray:
    """Year-over-year growth at year-end months via the 23-lag triangle."""
    t23 = triangle_weights(12)
    out = np.full(g.size, np.nan)
    for t in range(22, g.size):
        if moy[t] == 12:
            out[t] = float(t23 @ g[t - 22:t + 1][::-1])
    return out


def simulate_world(config: DgpConfig, seed: int = 0) -> SimulatedWorld:
    """Draw one synthetic world: truth, observables, release calendar."""
    rng = np.random.default_rng(seed)
    n, T = config.n_states, config.n_months
    months = month_index(config.start) + np.arange(T).astype("timedelta64[M]")
    moy = np.array([month_of_year(m) for m in months])
    w = config.share_weights()
    Phi = config.transition()

    g = np.zeros((T, n))
    c = (np.eye(n) - Phi) @ np.full(n, config.drift)
    for t in range(1, T):
        g[t] = c + Phi @ g[t - 1] + config.shock_scale * rng.standard_normal(n)
    g_us = g @ w                        # exact cross-sectional identity

    qsel = np.isin(moy, (3, 6, 9, 12))
    break_m = (month_index(config.break_month)
               if config.break_month is not None else months[0])

    series, metas, lags = {}, [], {}

    def add(sid, freq, scope, values, lag):
        series[sid] = values
        metas.append(SeriesMeta(id=sid, frequency=freq, role="endogenous",
                                scope=scope, tcode=1,
                                release_lag_months=lag))
        lags[sid] = lag

    us_ind = g_us + config.national_indicator_noise * rng.standard_normal(T)
    add("us_ind", "monthly", "national", us_ind, 1)
    us_q = aggregate_monthly_to_quarterly(g_us)
    us_q[~qsel] = np.nan
    add("us_gdp_q", "quarterly", "national", us_q, 1)

    for i in range(n):
        sid = f"s{i + 1}"
        ind = g[:, i] + config.state_indicator_noise * rng.standard_normal(T)
        add(f"{sid}_ind", "monthly", sid, ind, 1)
        sq = aggregate_monthly_to_quarterly(g[:, i])
        sq[~qsel | (months < break_m)] = np.nan
        add(f"{sid}_gdp_q", "quarterly", sid, sq, 3)
        sa = _annual_from_monthly(g[:, i], moy)
        sa[months >= break_m] = np.nan
        add(f"{sid}_gdp_a", "annual", sid, sa, 4)

    values = np.vstack([series[m.id] for m in metas])
    panel = MixedFrequencyPanel(months=months, metas=tuple(metas),
                                values=values)
    truth = {"us_gdp_m": g_us}
    truth.update({f"s{i + 1}_gdp_m": g[:, i] for i in range(n)})
    return SimulatedWorld(config=config, panel=panel,
                          calendar=ReleaseCalendar(lags=lags),
                          truth=truth, weights=w)


def _identity_row(target: str, latent: str) -> ConstraintRow:
    """Pin a latent quarterly variable to its observed counterpart."""
    return ConstraintRow(target=target, weights=((latent, 0, 1.0),),
                         variance=0.0, schedule=SCHEDULE_QUARTER_END)


def quarterly_spec(world: SimulatedWorld, p: int = 2) -> ModelSpec:
    """First-stage quarterly system carrying the annual constraints."""
    sids = world.state_ids()
    constraints = []
    for sid in sids:
        constraints.append(_identity_row(f"{sid}_gdp_q", f"{sid}_gdp_qlat"))
        constraints.append(
            annual_quarterly_row(f"{sid}_gdp_a", f"{sid}_gdp_qlat"))
    return ModelSpec(
        observed=("us_gdp_q", "us_ind") + tuple(f"{s}_ind" for s in sids),
        latent=tuple(f"{s}_gdp_qlat" for s in sids),
        constraints=tuple(constraints),
        p=p, frequency="quarterly", init_scale=1.0,
        scale_bounds=SCALE_BOUNDS, stationary=True)


def monthly_spec(world: SimulatedWorld, p: int = 5,
                 cs_variance: float = 1e-4) -> ModelSpec:
    """Second-stage monthly system with the cross-sectional identity."""
    sids = world.state_ids()
    constraints = [quarterly_monthly_row("us_gdp_q", "us_gdp_m")]
    for sid in sids:
        constraints.append(quarterly_monthly_row(f"{sid}_gdp_q",
                                                 f"{sid}_gdp_m"))
    constraints.append(cross_sectional_row(
        "us_gdp_m",
        [(f"{sid}_gdp_m", float(wt)) for sid, wt in zip(sids, world.weights)],
        cs_variance))
    return ModelSpec(
        observed=("us_ind",) + tuple(f"{s}_ind" for s in sids),
        latent=("us_gdp_m",) + tuple(f"{s}_gdp_m" for s in sids),
        constraints=tuple(constraints),
        p=p, frequency="monthly", init_scale=1.0,
        scale_bounds=SCALE_BOUNDS, stationary=True)


def benchmark_spec(world: SimulatedWorld, p: int = 5) -> ModelSpec:
    """State-only system: no national block, no cross-sectional identity."""
    sids = world.state_ids()
    return ModelSpec(
        observed=tuple(f"{s}_ind" for s in sids),
        latent=tuple(f"{s}_gdp_m" for s in sids),
        constraints=tuple(quarterly_monthly_row(f"{s}_gdp_q", f"{s}_gdp_m")
                          for s in sids),
        p=p, frequency="monthly", init_scale=1.0,
        scale_bounds=SCALE_BOUNDS, stationary=True)


def pseudo_targets(world: SimulatedWorld) -> dict:
    return {f"{s}_gdp_q": f"{s}_gdp_qlat" for s in world.state_ids()}


def full_model_definition(world: SimulatedWorld, mcmc: McmcSettings,
                          mcmc_quarterly: McmcSettings | None = None,
                          p: int = 5, p_quarterly: int = 2,
                          two_step: bool = True) -> ModelDefinition:
    """Complete model: quarterly pre-stage feeding the monthly system."""
    return ModelDefinition(
        monthly_spec=monthly_spec(world, p=p),
        mcmc=mcmc,
        quarterly_spec=quarterly_spec(world, p=p_quarterly) if two_step
        else None,
        pseudo_targets=pseudo_targets(world) if two_step else None,
        mcmc_quarterly=mcmc_quarterly)


def benchmark_definition(world: SimulatedWorld, mcmc: McmcSettings,
                         p: int = 5) -> ModelDefinition:
    """Benchmark without cross-state aggregation or national information."""
    return ModelDefinition(monthly_spec=benchmark_spec(world, p=p), mcmc=mcmc)


def nowcast_targets(world: SimulatedWorld,
                    include_national: bool = False) -> dict:
    """Latent monthly variable -> observed quarterly outturn series."""
    out = {f"{s}_gdp_m": f"{s}_gdp_q" for s in world.state_ids()}
    if include_national:
        out["us_gdp_m"] = "us_gdp_q"
    return out
