"""Mixed-frequency Bayesian VAR with shrinkage priors and aggregation rows.

The model is a structural VAR over high-frequency growth rates

    A y_t = B_0 + B_1 y_{t-1} + ... + B_p y_{t-p} + Gamma x_t + Sigma^{1/2} e_t

with A unit lower triangular and Sigma diagonal, so parameters are drawn
equation by equation under horseshoe shrinkage.  Some variables are never
observed at high frequency; they are tied to observed low-frequency data
through linear aggregation rows (exact) and to each other through
cross-sectional adding-up rows (Gaussian slack).

Estimation runs in two passes: a quarterly-frequency model turns annual
observations into quarterly latent draws, and a monthly-frequency model
consumes those draws as pseudo-observed quarterly data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .aggregation import (
    ConstraintRow,
    annual_quarterly_row,
    quarterly_monthly_row,
    triangle_weights,
)
from .panel import MixedFrequencyPanel, month_of_year
from .prior import (
    EquationDesign,
    HorseshoeState,
    SamplerError,
    VarParameters,
    draw_coefficients,
    draw_shrinkage_scales,
    draw_sigma2,
    draw_sigma_cs,
)
from .statespace import StateSpaceSystem, simulation_smoother

QUARTER_END_MONTHS = frozenset({3, 6, 9, 12})


@dataclass(frozen=True)
class McmcSettings:
    burn: int = 5000
    keep: int = 5000
    thin: int = 5

    def __post_init__(self):
        if self.burn < 0 or self.keep < 0 or self.thin < 1:
            raise ValueError("invalid MCMC settings")

    @property
    def sweeps(self) -> int:
        return self.burn + self.keep * self.thin


@dataclass(frozen=True)
class MeasurementRow:
    """One row of the measurement equation.

    kind: 'series' (a directly observed high-frequency variable),
    'constraint' (observed low-frequency value = weighted latent lags),
    or 'cross' (adding-up row observing zero with Gaussian slack).
    """

    kind: str
    target: str | None
    entries: tuple            # ((variable_id, lag, weight), ...)
    schedule: frozenset       # calendar months where the row can be active
    variance_key: str         # 'exact' | 'cs_monthly' | 'cs_quarterly'


@dataclass(frozen=True)
class ModelSpec:
    """Variable ordering, lag length, and measurement structure.

    `observed` holds the high-frequency observed endogenous ids (first
    block); `latent` the never-directly-observed ids (national before
    states).  `constraints` mixes aggregation rows (target = a
    low-frequency observed series id) and cross-sectional rows (target =
    a latent id).
    """

    observed: tuple
    latent: tuple
    constraints: tuple
    p: int = 5
    exog: dict = field(default_factory=dict)
    frequency: str = "monthly"
    init_scale: float = 10.0
    sigma_prior: tuple | None = None
    scale_bounds: tuple | None = None
    # truncate the coefficient posterior to stable dynamics (rejection
    # sampling); without it a single explosive draw overflows the
    # unconditional simulation inside the mean-correction smoother
    stationary: bool = False

    def __post_init__(self):
        if self.frequency not in ("monthly", "quarterly"):
            raise ValueError(f"unknown model frequency {self.frequency!r}")
        if self.p < 1:
            raise ValueError("lag length must be positive")
        if set(self.observed) & set(self.latent):
            raise ValueError("a variable cannot be both observed and latent")
        for sid in self.exog:
            if sid not in self.variables:
                raise ValueError(f"exogenous map references unknown id {sid!r}")

    @property
    def variables(self) -> tuple:
        return tuple(self.observed) + tuple(self.latent)

    @property
    def n_vars(self) -> int:
        return len(self.observed) + len(self.latent)

    def column(self, vid: str) -> int:
        try:
            return self.variables.index(vid)
        except ValueError:
            raise ValueError(f"unknown variable id {vid!r}") from None

    def measurement_rows(self) -> tuple:
        rows = [
            MeasurementRow("series", vid, ((vid, 0, 1.0),),
                           frozenset(range(1, 13)), "exact")
            for vid in self.observed
        ]
        for c in self.constraints:
            rows.append(self._expand(c))
        return tuple(rows)

    def _expand(self, c: ConstraintRow) -> MeasurementRow:
        for vid, _, _ in c.weights:
            if vid not in self.variables:
                raise ValueError(f"constraint references unknown id {vid!r}")
        if c.target in self.latent:
            # adding-up row: 0 = target - sum(weights) + slack
            quarterly = c.schedule == QUARTER_END_MONTHS
            if self.frequency == "monthly" and quarterly:
                # spread both sides over the quarter with triangle weights
                t3 = triangle_weights(3)
                entries = [(c.target, l, t3[l]) for l in range(5)]
                for vid, lag, w in c.weights:
                    if lag != 0:
                        raise ValueError("cross-sectional weights must be lag 0")
                    entries += [(vid, l, -w * t3[l]) for l in range(5)]
                key = "cs_quarterly"
            else:
                entries = [(c.target, 0, 1.0)]
                entries += [(vid, lag, -w) for vid, lag, w in c.weights]
                key = "cs_quarterly" if quarterly else "cs_monthly"
                if self.frequency == "quarterly":
                    key = "cs_quarterly"
            return MeasurementRow("cross", c.target, tuple(entries),
                                  c.schedule, key)
        return MeasurementRow("constraint", c.target, tuple(c.weights),
                              c.schedule, "exact")

    @property
    def n_state_blocks(self) -> int:
        maxlag = 0
        for row in self.measurement_rows():
            maxlag = max(maxlag, max(l for _, l, _ in row.entries))
        # one extra block so the completed path always carries p lags for
        # every in-sample regression row
        return max(self.p + 1, maxlag + 1)


def default_params(spec: ModelSpec) -> VarParameters:
    N = spec.n_vars
    exog = {spec.column(sid): np.zeros(len(ids))
            for sid, ids in spec.exog.items()}
    return VarParameters(A=np.eye(N), B0=np.zeros(N),
                         B=np.zeros((spec.p, N, N)), sigma2=np.ones(N),
                         exog=exog)


def sample_params_from_prior(spec: ModelSpec,
                             rng: np.random.Generator) -> VarParameters:
    """Draw VarParameters from the shrinkage prior.

    Requires a proper residual-variance prior (`spec.sigma_prior`); scale
    bounds, when set, truncate the half-Cauchy scales exactly as the
    Gibbs updates do.  Used by sampler-validation harnesses.  With
    `spec.stationary`, draws are rejected until the companion spectral
    radius is below STATIONARY_RADIUS.
    """
    if spec.sigma_prior is None:
        raise ValueError("prior sampling needs a proper sigma prior")
    a0, b0 = spec.sigma_prior
    for _ in range(_MAX_STATIONARY_TRIES):
        params = _sample_params_once(spec, rng, a0, b0)
        if not spec.stationary or spectral_radius(params) < STATIONARY_RADIUS:
            return params
    raise SamplerError("could not draw stable parameters from the prior")


def _sample_params_once(spec, rng, a0, b0):
    from .prior import SCALE_MAX, sample_scales_from_prior

    N, p = spec.n_vars, spec.p
    A = np.eye(N)
    B0 = np.zeros(N)
    B = np.zeros((p, N, N))
    sigma2 = np.zeros(N)
    exog_coef = {}
    for i in range(N):
        n_ex = len(spec.exog.get(spec.variables[i], ()))
        k = i + 1 + N * p + n_ex
        scales = sample_scales_from_prior(k, rng, bounds=spec.scale_bounds)
        sigma2[i] = b0 / rng.gamma(a0)
        sd = np.sqrt(sigma2[i] * np.clip(scales.prior_variances(), None, SCALE_MAX))
        theta = rng.normal(0.0, 1.0, k) * sd
        A[i, :i] = -theta[:i]
        B0[i] = theta[i]
        for l in range(p):
            B[l, i, :] = theta[i + 1 + l * N:i + 1 + (l + 1) * N]
        if n_ex:
            exog_coef[i] = theta[i + 1 + p * N:]
    csm = 0.01 / rng.gamma(10.0)
    csq = 0.01 / rng.gamma(10.0)
    return VarParameters(A=A, B0=B0, B=B, sigma2=sigma2, exog=exog_coef,
                         sigma2_cs_monthly=csm, sigma2_cs_quarterly=csq)


def build_system(spec: ModelSpec, params: VarParameters,
                 exog_effect: np.ndarray | None = None) -> StateSpaceSystem:
    """Assemble the state-space form for given parameters.

    The state stacks the current values of all variables and enough lags
    to serve both the VAR and the deepest aggregation row.  Every
    measurement row is present in Z; which rows bind at a given period is
    encoded by NaNs in the observation matrix, not by time-varying
    matrices.  `exog_effect` (T, N) holds the structural exogenous
    contribution Gamma x_t per equation and makes the state intercept
    time-varying.
    """
    N, q = spec.n_vars, spec.n_state_blocks
    if params.n_vars != N or params.n_lags != spec.p:
        raise ValueError("parameter dimensions do not match the spec")
    ns = N * q
    rows = spec.measurement_rows()
    n_cross = sum(1 for r in rows if r.kind == "cross")
    neps = N + n_cross

    Phi0, Phi, _ = params.reduced_form()
    Ainv = np.linalg.inv(params.A)

    T = np.zeros((ns, ns))
    for l in range(spec.p):
        T[:N, l * N:(l + 1) * N] = Phi[l]
    T[N:, :-N] = np.eye(ns - N)

    H = np.zeros((ns, neps))
    H[:N, :N] = Ainv * np.sqrt(params.sigma2)

    if exog_effect is None:
        D = np.zeros(ns)
        D[:N] = Phi0
    else:
        D = np.zeros((exog_effect.shape[0], ns))
        D[:, :N] = Phi0 + exog_effect @ Ainv.T

    Z = np.zeros((len(rows), ns))
    G = np.zeros((len(rows), neps))
    cs_var = {"cs_monthly": params.sigma2_cs_monthly,
              "cs_quarterly": params.sigma2_cs_quarterly}
    j_cross = 0
    for r_idx, row in enumerate(rows):
        for vid, lag, w in row.entries:
            if lag >= q:
                raise ValueError(f"row lag {lag} exceeds state depth {q}")
            Z[r_idx, lag * N + spec.column(vid)] += w
        if row.kind == "cross":
            G[r_idx, N + j_cross] = np.sqrt(cs_var[row.variance_key])
            j_cross += 1

    return StateSpaceSystem(Z=Z, T=T, H=H, G=G, D=D)


def build_observations(spec: ModelSpec, series: dict,
                       moy: np.ndarray) -> np.ndarray:
    """(T, n_rows) observation matrix; NaN marks an inactive row.

    `series` maps every 'series'/'constraint' target id to a length-T
    array aligned with the model's period axis (NaN where unobserved).
    """
    Tn = moy.size
    rows = spec.measurement_rows()
    obs = np.full((Tn, len(rows)), np.nan)
    for r_idx, row in enumerate(rows):
        active = np.isin(moy, list(row.schedule))
        if row.kind == "cross":
            obs[active, r_idx] = 0.0
        else:
            if row.target not in series:
                raise ValueError(f"no data supplied for {row.target!r}")
            vals = np.asarray(series[row.target], dtype=float)
            if vals.shape != (Tn,):
                raise ValueError(f"{row.target!r}: series length mismatch")
            take = active & np.isfinite(vals)
            obs[take, r_idx] = vals[take]
    return obs


@dataclass
class PosteriorDrawSet:
    """Retained Gibbs output: parameters and completed variable paths.

    `paths` has shape (n_keep, T + q - 1, N): pre-sample lags first, then
    periods 1..T, columns in spec.variables order.  `pseudo` optionally
    records the pseudo-observed values each retained sweep conditioned on.
    """

    spec: ModelSpec
    months: np.ndarray
    params: list
    scales: list
    paths: np.ndarray
    mcmc: McmcSettings
    pseudo: list | None = None

    @property
    def n_keep(self) -> int:
        return len(self.params)

    def insample_paths(self) -> np.ndarray:
        """(n_keep, T, N) paths restricted to periods 1..T."""
        q = self.spec.n_state_blocks
        return self.paths[:, q - 1:, :]


def _extract_paths(states: np.ndarray, N: int, q: int) -> np.ndarray:
    """Full variable history (T + q - 1, N) from the smoothed state path."""
    pre = states[0].reshape(q, N)[::-1]
    return np.vstack([pre[:-1], states[:, :N]])


def _exog_matrix(spec: ModelSpec, series: dict, Tn: int):
    """Per-equation exogenous data blocks, or None when no exogenous vars."""
    if not spec.exog:
        return None
    out = {}
    for sid, ids in spec.exog.items():
        cols = []
        for xid in ids:
            x = np.asarray(series[xid], dtype=float)
            if x.shape != (Tn,) or not np.all(np.isfinite(x)):
                raise ValueError(f"exogenous series {xid!r} must be complete")
            cols.append(x)
        out[spec.column(sid)] = np.column_stack(cols)
    return out


STATIONARY_RADIUS = 0.999
_MAX_STATIONARY_TRIES = 100


def spectral_radius(params: VarParameters) -> float:
    """Largest companion-matrix eigenvalue modulus of the reduced form."""
    _, Phi, _ = params.reduced_form()
    p, N = Phi.shape[0], Phi.shape[1]
    comp = np.zeros((N * p, N * p))
    for l in range(p):
        comp[:N, l * N:(l + 1) * N] = Phi[l]
    if p > 1:
        comp[N:, :-N] = np.eye(N * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _draw_equations(spec, Yf, exog_data, params, scales, rng):
    """One horseshoe pass over all structural equations.

    Regression rows cover in-sample periods 1..T; their lags come from
    the completed path, including smoothed pre-sample values.

    With `spec.stationary`, the joint (theta, sigma2) conditional is
    truncated to stable dynamics by redrawing until the companion
    spectral radius falls below STATIONARY_RADIUS; the shrinkage scales
    are then updated once from the accepted draw.  Each equation's
    coefficient draw depends only on its own scales, so deferring the
    scale updates leaves every conditional unchanged.
    """
    N, p, q = spec.n_vars, spec.p, spec.n_state_blocks
    Tn = Yf.shape[0] - (q - 1)
    cur = Yf[q - 1:]
    lags = np.column_stack(
        [Yf[q - 1 - l:q - 1 - l + Tn] for l in range(1, p + 1)])

    designs = []
    for i in range(N):
        X_parts = [cur[:, :i], np.ones((Tn, 1)), lags]
        if exog_data is not None and i in exog_data:
            X_parts.append(exog_data[i])
        designs.append(EquationDesign(y=cur[:, i], X=np.hstack(X_parts)))

    def one_pass(update_scales):
        A = np.eye(N)
        B0 = np.zeros(N)
        B = np.zeros((p, N, N))
        sigma2 = np.zeros(N)
        exog_coef = {}
        thetas = []
        for i in range(N):
            design = designs[i]
            theta = draw_coefficients(design, scales[i], params.sigma2[i],
                                      rng)
            s2 = draw_sigma2(design, theta, scales[i], rng,
                             prior=spec.sigma_prior)
            if update_scales:
                scales[i] = draw_shrinkage_scales(theta, s2, scales[i], rng,
                                                  bounds=spec.scale_bounds)
            A[i, :i] = -theta[:i]
            B0[i] = theta[i]
            for l in range(p):
                B[l, i, :] = theta[i + 1 + l * N:i + 1 + (l + 1) * N]
            if exog_data is not None and i in exog_data:
                exog_coef[i] = theta[i + 1 + p * N:]
            sigma2[i] = s2
            thetas.append(theta)
        out = VarParameters(A=A, B0=B0, B=B, sigma2=sigma2, exog=exog_coef,
                            sigma2_cs_monthly=params.sigma2_cs_monthly,
                            sigma2_cs_quarterly=params.sigma2_cs_quarterly)
        return out, thetas

    if not spec.stationary:
        out, _ = one_pass(update_scales=True)
        return out

    for _ in range(_MAX_STATIONARY_TRIES):
        out, thetas = one_pass(update_scales=False)
        if spectral_radius(out) < STATIONARY_RADIUS:
            for i in range(N):
                scales[i] = draw_shrinkage_scales(thetas[i], out.sigma2[i],
                                                  scales[i], rng,
                                                  bounds=spec.scale_bounds)
            return out
    # extremely unlikely once the chain has settled; keep the previous
    # (stable) parameters rather than accept an explosive draw
    return params


def _draw_cs_variances(spec, params, states, moy, rng):
    """Update the adding-up slack variances from the drawn latent paths."""
    rows = spec.measurement_rows()
    N, q = spec.n_vars, spec.n_state_blocks
    resid = {"cs_monthly": [], "cs_quarterly": []}
    any_cs = False
    for row in rows:
        if row.kind != "cross":
            continue
        any_cs = True
        z = np.zeros(N * q)
        for vid, lag, w in row.entries:
            z[lag * N + spec.column(vid)] += w
        active = np.isin(moy, list(row.schedule))
        resid[row.variance_key].extend(states[active] @ z)
    if not any_cs:
        return params
    out = replace(params)
    if resid["cs_monthly"]:
        out.sigma2_cs_monthly = draw_sigma_cs(resid["cs_monthly"], rng)
    if resid["cs_quarterly"]:
        out.sigma2_cs_quarterly = draw_sigma_cs(resid["cs_quarterly"], rng)
    return out


def _exog_effect(spec, params, exog_data, Tn):
    if exog_data is None:
        return None
    eff = np.zeros((Tn, spec.n_vars))
    for i, Xi in exog_data.items():
        coef = params.exog.get(i)
        if coef is not None and len(coef):
            eff[:, i] = Xi @ coef
    return eff


def run_gibbs(spec: ModelSpec, series: dict, moy: np.ndarray,
              mcmc: McmcSettings, rng: np.random.Generator,
              obs_override=None, init_params: VarParameters | None = None,
              update_params: bool = True) -> PosteriorDrawSet:
    """Generic Gibbs driver over (latent paths, parameters).

    `obs_override(sweep, obs)` may mutate the observation matrix in place
    before the latent draw (used to cycle pseudo-observed data); it
    returns a record stored alongside retained sweeps, or None.
    `update_params=False` freezes the parameters at `init_params`
    (cycled if a list) and only re-draws latent paths.
    """
    if mcmc.keep == 0:
        raise ValueError("no retained draws requested")
    N, q = spec.n_vars, spec.n_state_blocks
    Tn = moy.size
    exog_data = _exog_matrix(spec, series, Tn)
    obs_base = build_observations(spec, series, moy)
    ns = N * q
    init_mean = np.zeros(ns)
    init_cov = spec.init_scale * np.eye(ns)

    param_cycle = None
    if isinstance(init_params, list):
        param_cycle = init_params
        params = init_params[0]
    else:
        params = init_params if init_params is not None else default_params(spec)
    scales = None

    keep_params, keep_scales, keep_paths, keep_pseudo = [], [], [], []
    for sweep in range(mcmc.sweeps):
        if param_cycle is not None:
            params = param_cycle[sweep % len(param_cycle)]
        obs = obs_base
        record = None
        if obs_override is not None:
            obs = obs_base.copy()
            record = obs_override(sweep, obs)
        system = build_system(spec, params,
                              _exog_effect(spec, params, exog_data, Tn))
        states = simulation_smoother(system, obs, init_mean, init_cov, rng)
        if not np.all(np.isfinite(states)):
            raise SamplerError(f"non-finite latent draw at sweep {sweep}")
        Yf = _extract_paths(states, N, q)
        if update_params:
            if scales is None:
                scales = [HorseshoeState.initial(
                    i + 1 + N * spec.p +
                    (exog_data[i].shape[1] if exog_data and i in exog_data else 0))
                    for i in range(N)]
            params = _draw_equations(spec, Yf, exog_data, params, scales, rng)
            params = _draw_cs_variances(spec, params, states, moy, rng)
        if sweep >= mcmc.burn and (sweep - mcmc.burn) % mcmc.thin == 0:
            keep_params.append(params)
            keep_scales.append([s.copy() for s in scales] if scales else [])
            keep_paths.append(Yf)
            keep_pseudo.append(record)
            if len(keep_params) == mcmc.keep:
                break

    return PosteriorDrawSet(
        spec=spec, months=np.array([]), params=keep_params,
        scales=keep_scales, paths=np.array(keep_paths), mcmc=mcmc,
        pseudo=keep_pseudo if obs_override is not None else None,
    )


def panel_series(panel: MixedFrequencyPanel) -> dict:
    return dict(zip(panel.ids, panel.values))


def aggregate_monthly_to_quarterly(x: np.ndarray) -> np.ndarray:
    """Quarterly growth implied by monthly growth via the triangle weights.

    Output is aligned with the monthly axis; only quarter-end positions
    carry values downstream.  Entries needing unavailable lags are NaN.
    """
    t3 = triangle_weights(3)
    out = np.full(x.size, np.nan)
    for t in range(4, x.size):
        window = x[t - 4:t + 1][::-1]
        if np.all(np.isfinite(window)):
            out[t] = float(t3 @ window)
    return out


def quarterly_view(panel: MixedFrequencyPanel):
    """Quarter-end month axis plus per-series quarterly-aligned values.

    Monthly series are aggregated to quarterly growth; quarterly and
    annual series keep their values at their placement months.
    """
    moy_m = np.array([month_of_year(m) for m in panel.months])
    sel = np.isin(moy_m, (3, 6, 9, 12))
    months_q = panel.months[sel]
    series = {}
    for meta, row in zip(panel.metas, panel.values):
        if meta.frequency == "monthly":
            series[meta.id] = aggregate_monthly_to_quarterly(row)[sel]
        else:
            series[meta.id] = row[sel]
    return months_q, series


def run_step1_quarterly(panel: MixedFrequencyPanel, spec: ModelSpec,
                        mcmc: McmcSettings,
                        rng: np.random.Generator,
                        init_params=None,
                        update_params: bool = True) -> PosteriorDrawSet:
    """Estimate the quarterly-frequency model on the annualised panel.

    With `update_params=False` and a list of `init_params`, the sampler
    only re-draws latent paths, cycling the supplied parameter draws.
    """
    if spec.frequency != "quarterly":
        raise ValueError("step 1 requires a quarterly-frequency spec")
    months_q, series = quarterly_view(panel)
    moy = np.array([month_of_year(m) for m in months_q])
    out = run_gibbs(spec, series, moy, mcmc, rng,
                    init_params=init_params, update_params=update_params)
    out.months = months_q
    return out


def run_step2_monthly(panel: MixedFrequencyPanel, spec: ModelSpec,
                      quarterly_draws: PosteriorDrawSet | None,
                      pseudo_targets: dict | None,
                      mcmc: McmcSettings,
                      rng: np.random.Generator,
                      init_params=None,
                      update_params: bool = True) -> PosteriorDrawSet:
    """Estimate the monthly-frequency model, cycling quarterly draws.

    `pseudo_targets` maps a quarterly observed series id (the target of
    an aggregation row in `spec`) to the corresponding latent variable id
    of the quarterly model.  At scheduled quarters where the panel has no
    observation, the pseudo value from the cycled quarterly draw fills
    the observation matrix.
    """
    if spec.frequency != "monthly":
        raise ValueError("step 2 requires a monthly-frequency spec")
    series = panel_series(panel)
    moy = np.array([month_of_year(m) for m in panel.months])

    override = None
    if quarterly_draws is not None and pseudo_targets:
        q1 = quarterly_draws.spec.n_state_blocks
        qpaths = quarterly_draws.paths[:, q1 - 1:, :]   # (n1, Tq, Nq)
        qmonths = quarterly_draws.months
        rows = spec.measurement_rows()
        fills = []  # (row_idx, time_idx, latent_col, q_time_idx)
        for r_idx, row in enumerate(rows):
            if row.kind != "constraint" or row.target not in pseudo_targets:
                continue
            lcol = quarterly_draws.spec.column(pseudo_targets[row.target])
            vals = np.asarray(series[row.target], dtype=float)
            for t in range(moy.size):
                if moy[t] in row.schedule and not np.isfinite(vals[t]):
                    qt = np.flatnonzero(qmonths == panel.months[t])
                    if qt.size:
                        fills.append((r_idx, t, lcol, int(qt[0])))
        n1 = qpaths.shape[0]

        def override(sweep, obs):
            draw = qpaths[sweep % n1]
            rec = []
            for r_idx, t, lcol, qt in fills:
                obs[t, r_idx] = draw[qt, lcol]
                rec.append((r_idx, t, float(draw[qt, lcol])))
            return rec

    out = run_gibbs(spec, series, moy, mcmc, rng, obs_override=override,
                    init_params=init_params, update_params=update_params)
    out.months = panel.months
    return out


@dataclass
class NowcastDistribution:
    """Predictive sample for one (series, target quarter) pair."""

    series: str
    quarter_end: np.datetime64
    samples: np.ndarray


def nowcast(panel: MixedFrequencyPanel, spec: ModelSpec,
            draws: PosteriorDrawSet, targets: list,
            rng: np.random.Generator,
            exog_extension: dict | None = None,
            allow_observed: bool = False) -> list:
    """Predictive distributions of quarterly growth for latent variables.

    `targets` lists (latent_id, quarter_end_month) pairs.  For each
    retained draw the monthly path is re-drawn conditional on the vintage
    panel (extended with missing months through the latest target), the
    pseudo-observations recorded with that draw are re-imposed, and the
    triangle weights aggregate the drawn monthly values.
    `exog_extension` supplies complete exogenous series on the extended
    axis when the spec uses exogenous variables.
    """
    if spec.frequency != "monthly":
        raise ValueError("nowcasting requires the monthly-frequency model")
    targets = [(sid, t if isinstance(t, np.datetime64) else np.datetime64(t, "M"))
               for sid, t in targets]
    horizon = max(t for _, t in targets)
    n_extra = max(0, int((horizon - panel.months[-1]).astype(int)))
    months = np.concatenate(
        [panel.months,
         panel.months[-1] + np.arange(1, n_extra + 1).astype("timedelta64[M]")])
    moy = np.array([month_of_year(m) for m in months])
    series = {
        sid: np.concatenate([row, np.full(n_extra, np.nan)])
        for sid, row in panel_series(panel).items()
    }
    if exog_extension:
        series.update(exog_extension)
    rows = spec.measurement_rows()
    for sid, t in targets:
        if sid not in spec.latent:
            raise ValueError(f"nowcast target {sid!r} is not a latent variable")
        if t not in months:
            raise ValueError(f"target quarter end {t} outside reachable horizon")
        if not allow_observed and t in panel.months:
            t_idx = int((t - panel.months[0]).astype(int))
            for row in rows:
                if (row.kind == "constraint"
                        and any(v == sid for v, _, _ in row.entries)
                        and month_of_year(t) in row.schedule
                        and np.isfinite(series[row.target][t_idx])):
                    raise ValueError(
                        f"target quarter {t} already observed for {sid!r}")

    Tn = months.size
    exog_data = _exog_matrix(spec, series, Tn)
    obs_base = build_observations(spec, series, moy)
    N, q = spec.n_vars, spec.n_state_blocks
    init_mean = np.zeros(N * q)
    init_cov = spec.init_scale * np.eye(N * q)
    t3 = triangle_weights(3)

    out = {(sid, t): np.empty(draws.n_keep) for sid, t in targets}
    for d in range(draws.n_keep):
        params = draws.params[d]
        obs = obs_base
        if draws.pseudo is not None and draws.pseudo[d]:
            obs = obs_base.copy()
            for r_idx, t_idx, val in draws.pseudo[d]:
                if np.isnan(obs[t_idx, r_idx]):
                    obs[t_idx, r_idx] = val
        system = build_system(spec, params,
                              _exog_effect(spec, params, exog_data, Tn))
        states = simulation_smoother(system, obs, init_mean, init_cov, rng)
        Yf = _extract_paths(states, N, q)
        for sid, tq in targets:
            j = q - 1 + int((tq - months[0]).astype(int))
            col = spec.column(sid)
            out[(sid, tq)][d] = float(t3 @ Yf[j - 4:j + 1, col][::-1])
    return [NowcastDistribution(sid, tq, out[(sid, tq)]) for sid, tq in targets]


def reestimate_states(panel: MixedFrequencyPanel, spec: ModelSpec,
                      draws: PosteriorDrawSet,
                      rng: np.random.Generator) -> PosteriorDrawSet:
    """Re-draw latent paths on new data keeping parameter draws fixed."""
    series = panel_series(panel)
    moy = np.array([month_of_year(m) for m in panel.months])
    mcmc = McmcSettings(burn=0, keep=draws.n_keep, thin=1)
    override = None
    if draws.pseudo is not None:
        pseudo = draws.pseudo

        def override(sweep, obs):
            rec = pseudo[sweep % len(pseudo)]
            if rec:
                for r_idx, t_idx, val in rec:
                    if t_idx < obs.shape[0] and np.isnan(obs[t_idx, r_idx]):
                        obs[t_idx, r_idx] = val
            return rec

    out = run_gibbs(spec, series, moy, mcmc, rng, obs_override=override,
                    init_params=list(draws.params), update_params=False)
    out.months = panel.months
    out.scales = draws.scales
    if out.pseudo is None:
        out.pseudo = draws.pseudo
    return out


@dataclass(frozen=True)
class FreezePolicy:
    """Months at which recursive re-estimation reuses old parameter draws."""

    windows: tuple = ()

    def frozen(self, month: np.datetime64) -> bool:
        return any(a <= month <= b for a, b in self.windows)


def freeze_parameters(draws: PosteriorDrawSet, window) -> FreezePolicy:
    """Policy freezing parameters at `draws` over `window` = (start, end)."""
    a, b = (np.datetime64(window[0], "M"), np.datetime64(window[1], "M"))
    if b < a:
        raise ValueError("empty freeze window")
    return FreezePolicy(windows=((a, b),))
