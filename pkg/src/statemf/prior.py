"""Horseshoe prior state and per-equation Gibbs updates.

The regression model for one equation is

    y = X theta + e,   e ~ N(0, sigma2 I),
    theta_j | lam_j, tau, sigma ~ N(0, sigma2 * tau2 * lam2_j),
    tau, lam_j ~ half-Cauchy(0, 1).

Scale updates use the inverse-CDF slice scheme on eta = 1/lam2 and
xi = 1/tau2; one slice step per Gibbs sweep.  All scales are clamped to
[SCALE_MIN, SCALE_MAX] and clamp events are counted on the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

SCALE_MIN = 1e-12
SCALE_MAX = 1e12


class SamplerError(RuntimeError):
    pass


@dataclass
class EquationDesign:
    """Response and regressors for one structural VAR equation.

    X stacks the contemporaneous block (minus the responses of earlier
    equations), the intercept, the lag block, and any exogenous columns.
    """

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.size:
            raise ValueError("design shapes inconsistent")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise SamplerError("non-finite design")

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]


@dataclass
class HorseshoeState:
    """Shrinkage scales for one equation: global tau2 and local lam2."""

    tau2: float
    lam2: np.ndarray
    clamp_count: int = 0

    @classmethod
    def initial(cls, n_coef: int) -> "HorseshoeState":
        return cls(tau2=1.0, lam2=np.ones(n_coef))

    def prior_variances(self) -> np.ndarray:
        """Lambda_star diagonal: tau2 * lam2 (variance relative to sigma2)."""
        return self.tau2 * self.lam2

    def copy(self) -> "HorseshoeState":
        return HorseshoeState(self.tau2, self.lam2.copy(), self.clamp_count)


@dataclass
class VarParameters:
    """Structural MF-VAR parameters.

    A is unit lower triangular; B holds (B_1..B_p) stacked (p, N, N);
    exog maps equation index -> coefficient vector for its exogenous block.
    """

    A: np.ndarray
    B0: np.ndarray
    B: np.ndarray
    sigma2: np.ndarray
    exog: dict = field(default_factory=dict)
    sigma2_cs_monthly: float = 1e-4
    sigma2_cs_quarterly: float = 1e-4

    def __post_init__(self):
        N = self.A.shape[0]
        if not np.allclose(np.diag(self.A), 1.0) or not np.allclose(
            self.A, np.tril(self.A)
        ):
            raise ValueError("A must be unit lower triangular")
        if np.any(self.sigma2 <= 0):
            raise ValueError("equation variances must be positive")
        if self.B.shape[1:] != (N, N) or self.B0.shape != (N,):
            raise ValueError("coefficient shapes inconsistent")

    @property
    def n_vars(self) -> int:
        return self.A.shape[0]

    @property
    def n_lags(self) -> int:
        return self.B.shape[0]

    def reduced_form(self):
        """(Phi0, Phi (p,N,N), Omega) of the reduced-form VAR."""
        Ainv = linalg.solve_triangular(self.A, np.eye(self.n_vars), lower=True)
        Phi0 = Ainv @ self.B0
        Phi = np.einsum("ij,pjk->pik", Ainv, self.B)
        Omega = (Ainv * self.sigma2) @ Ainv.T
        return Phi0, Phi, Omega


def draw_coefficients(design: EquationDesign, scales: HorseshoeState,
                      sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Draw theta from N(Ai^-1 X'y, sigma2 Ai^-1), Ai = X'X + Lambda_star^-1.

    Uses a Cholesky solve when n_coef <= n_obs and a fast sampler for wide
    designs (Woodbury form) otherwise.
    """
    if sigma2 <= 0 or not np.isfinite(sigma2):
        raise SamplerError("invalid sigma2")
    lam_star = np.clip(scales.prior_variances(), SCALE_MIN, SCALE_MAX)
    X, y = design.X, design.y
    n, k = design.n_obs, design.n_coef

    if k <= n:
        Ai = X.T @ X + np.diag(1.0 / lam_star)
        try:
            cf = linalg.cho_factor(Ai, lower=True, check_finite=False)
        except linalg.LinAlgError:
            # near-collinear design with fully relaxed shrinkage can lose
            # positive definiteness to rounding; retry with a relative jitter
            jitter = 1e-10 * float(np.max(np.diag(Ai))) * np.eye(k)
            try:
                cf = linalg.cho_factor(Ai + jitter, lower=True,
                                       check_finite=False)
            except linalg.LinAlgError as exc:
                raise SamplerError(
                    "posterior precision not positive definite") from exc
        mean = linalg.cho_solve(cf, X.T @ y, check_finite=False)
        # theta = mean + sqrt(sigma2) * L^-T z
        z = rng.standard_normal(k)
        dev = linalg.solve_triangular(cf[0].T, z, lower=False, check_finite=False)
        return mean + np.sqrt(sigma2) * dev

    # fast sampler: D = sigma2 * lam_star, Phi = X / sigma, alpha = y / sigma
    sigma = np.sqrt(sigma2)
    D = sigma2 * lam_star
    u = rng.standard_normal(k) * np.sqrt(D)
    f = rng.standard_normal(n)
    v = (X / sigma) @ u + f
    M = (X * D) @ X.T / sigma2 + np.eye(n)
    try:
        cf = linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SamplerError("posterior precision not positive definite") from exc
    w = linalg.cho_solve(cf, y / sigma - v, check_finite=False)
    return u + D * (X.T @ w) / sigma


def draw_sigma2(design: EquationDesign, theta: np.ndarray,
                scales: HorseshoeState, rng: np.random.Generator,
                prior: tuple | None = None) -> float:
    """Inverse-gamma draw with shape (T+k)/2 and scale (RSS + theta'L*^-1 theta)/2.

    `prior` = (a0, b0) adds a proper IG prior on top of the default
    improper 1/sigma2 baseline (used by sampler-validation harnesses).
    """
    resid = design.y - design.X @ theta
    if not np.all(np.isfinite(resid)):
        raise SamplerError("non-finite residuals")
    lam_star = np.clip(scales.prior_variances(), SCALE_MIN, SCALE_MAX)
    shape = (design.n_obs + design.n_coef) / 2.0
    scale = (resid @ resid + theta @ (theta / lam_star)) / 2.0
    if prior is not None:
        shape += prior[0]
        scale += prior[1]
    if scale <= 0:
        raise SamplerError("degenerate inverse-gamma scale")
    return float(scale / rng.gamma(shape))


def _slice_inv_scale(m, gamma_shape: float, rng, lo: float, hi: float,
                     current) -> np.ndarray:
    """One slice step for p(xi) ~ xi^(gamma_shape-1) exp(-m xi) / (1 + xi)
    truncated to [lo, hi], vectorised over m/current.

    Draws u | xi uniform under 1/(1+xi), then xi | u from the gamma(shape,
    rate m) truncated to [lo, min(hi, (1-u)/u)] by inverse-CDF.  The
    incomplete-gamma CDF is gammainc(a, m*x).
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    cur = np.broadcast_to(np.asarray(current, dtype=float), m.shape)
    u = rng.uniform(0.0, 1.0 / (1.0 + cur))
    upper = np.minimum((1.0 - u) / u, hi)
    mm = np.maximum(m, 1e-290)
    p_lo = special.gammainc(gamma_shape, mm * lo)
    p_hi = special.gammainc(gamma_shape, mm * upper)
    p = rng.uniform(p_lo, np.maximum(p_hi, p_lo))
    val = special.gammaincinv(gamma_shape, p) / mm
    # degenerate or failed inversions fall back to the clipped current value
    bad = ~np.isfinite(val) | (val <= 0) | (p_hi <= p_lo)
    val = np.where(bad, np.clip(cur, lo, upper), val)
    return np.clip(val, lo, upper)


def draw_shrinkage_scales(theta: np.ndarray, sigma2: float,
                          state: HorseshoeState, rng: np.random.Generator,
                          bounds: tuple | None = None) -> HorseshoeState:
    """One slice-sampling sweep over tau2 and every lam2_j.

    `bounds`, when given as (scale_lo, scale_hi) on tau2/lam2, truncates
    the half-Cauchy priors (used by validation harnesses); otherwise the
    hard numerical clamp [SCALE_MIN, SCALE_MAX] applies.
    """
    k = theta.size
    new = state.copy()
    lo, hi = bounds if bounds is not None else (SCALE_MIN, SCALE_MAX)
    # inverse-scale bounds flip the interval
    inv_lo, inv_hi = 1.0 / hi, 1.0 / lo

    # local scales: eta_j = 1/lam2_j has full conditional
    # p(eta_j | .) ~ exp(-m_j eta_j) / (1 + eta_j), m_j = theta_j^2/(2 s2 tau2)
    m_loc = theta ** 2 / (2.0 * sigma2 * new.tau2)
    eta = _slice_inv_scale(m_loc, 1.0, rng, inv_lo, inv_hi, 1.0 / new.lam2)
    new.lam2 = 1.0 / eta

    # global scale: xi = 1/tau2,
    # p(xi | .) ~ xi^((k-1)/2) exp(-m xi) / (1 + xi), m = sum theta^2/lam2 / (2 s2)
    m = float(theta @ (theta / new.lam2)) / (2.0 * sigma2)
    xi = _slice_inv_scale(m, (k + 1.0) / 2.0, rng, inv_lo, inv_hi, 1.0 / new.tau2)
    new.tau2 = float(1.0 / xi[0])

    clipped = np.clip(new.lam2, SCALE_MIN, SCALE_MAX)
    new.clamp_count += int(np.sum(clipped != new.lam2))
    new.lam2 = clipped
    tau_clipped = float(np.clip(new.tau2, SCALE_MIN, SCALE_MAX))
    if tau_clipped != new.tau2:
        new.clamp_count += 1
        new.tau2 = tau_clipped
    return new


def sample_scales_from_prior(n_coef: int, rng: np.random.Generator,
                             bounds: tuple | None = None) -> HorseshoeState:
    """Draw (tau2, lam2) from the (optionally truncated) half-Cauchy priors."""
    lo, hi = bounds if bounds is not None else (SCALE_MIN, SCALE_MAX)

    def trunc_hc2(size):
        # draw scale^2 with scale ~ half-Cauchy(0,1) truncated to [sqrt(lo), sqrt(hi)]
        a = np.arctan(np.sqrt(lo))
        b = np.arctan(np.sqrt(hi))
        u = rng.uniform(a, b, size)
        return np.tan(u) ** 2

    return HorseshoeState(tau2=float(trunc_hc2(1)[0]), lam2=trunc_hc2(n_coef))


def draw_sigma_cs(residuals, rng: np.random.Generator,
                  prior_shape: float = 10.0, prior_scale: float = 0.01) -> float:
    """Conjugate IG update of the cross-sectional slack variance.

    Prior IG(10, 0.01); posterior IG(shape + n/2, scale + sum r^2 / 2).
    """
    r = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(r)):
        raise SamplerError("non-finite constraint residuals")
    shape = prior_shape + r.size / 2.0
    scale = prior_scale + float(r @ r) / 2.0
    return float(scale / rng.gamma(shape))
