"""Linear-Gaussian state-space machinery.

System convention, with a single shock vector eps_t ~ N(0, I) shared by both
equations (so measurement and state errors may be correlated):

    y_t = C_t + Z_t s_t + G_t eps_t        (measurement)
    s_t = D_t + T_t s_{t-1} + H_t eps_t    (state)

`init_mean` / `init_cov` describe s_0, the pre-sample state.  Missing
observations are NaNs in `observations`; their rows are deleted from the
update.  Matrices may be static (one array) or time-varying (leading axis T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


class NumericalError(RuntimeError):
    """Innovation covariance singular or inputs non-finite."""


def _at(arr: np.ndarray, t: int, ndim_static: int) -> np.ndarray:
    return arr if arr.ndim == ndim_static else arr[t]


@dataclass
class StateSpaceSystem:
    Z: np.ndarray           # (n_obs, n_state) or (T, n_obs, n_state)
    T: np.ndarray           # (n_state, n_state) or (T, n_state, n_state)
    H: np.ndarray           # (n_state, n_shock) or (T, ...)
    G: np.ndarray           # (n_obs, n_shock) or (T, ...)
    C: np.ndarray | None = None   # (n_obs,) or (T, n_obs); None = zero
    D: np.ndarray | None = None   # (n_state,) or (T, n_state); None = zero

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        self.T = np.asarray(self.T, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        if self.C is not None:
            self.C = np.asarray(self.C, dtype=float)
        if self.D is not None:
            self.D = np.asarray(self.D, dtype=float)
        for name in ("Z", "T", "H", "G", "C", "D"):
            a = getattr(self, name)
            if a is not None and not np.all(np.isfinite(a)):
                raise NumericalError(f"non-finite entries in {name}")

    @property
    def n_state(self) -> int:
        return self.Z.shape[-1]

    @property
    def n_obs(self) -> int:
        return self.Z.shape[-2]

    @property
    def n_shock(self) -> int:
        return self.H.shape[-1]

    def parts(self, t: int):
        """(C, Z, G, D, T, H) at time index t (0-based)."""
        C = np.zeros(self.n_obs) if self.C is None else _at(self.C, t, 1)
        D = np.zeros(self.n_state) if self.D is None else _at(self.D, t, 1)
        return (C, _at(self.Z, t, 2), _at(self.G, t, 2),
                D, _at(self.T, t, 2), _at(self.H, t, 2))

    def zero_constants(self) -> "StateSpaceSystem":
        return StateSpaceSystem(Z=self.Z, T=self.T, H=self.H, G=self.G)


@dataclass
class FilterResult:
    pred_mean: np.ndarray    # (T, n_state)
    pred_cov: np.ndarray     # (T, n_state, n_state)
    filt_mean: np.ndarray
    filt_cov: np.ndarray
    loglik_terms: np.ndarray  # (T,)

    @property
    def loglik(self) -> float:
        return float(self.loglik_terms.sum())


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return (P + P.T) / 2.0


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix, tolerant of tiny negatives."""
    w, V = np.linalg.eigh(_symmetrize(P))
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w) @ V.T


def kalman_filter(system: StateSpaceSystem, observations, init_mean, init_cov,
                  _store: list | None = None) -> FilterResult:
    """Exact Gaussian filtering under the observation mask.

    Handles the correlated measurement/state errors implied by the shared
    shock: innovation covariance Z P Z' + Z H G' + G H' Z' + G G' and state-
    innovation cross covariance P Z' + H G'.  Raises NumericalError if an
    innovation covariance is not positive definite.

    `_store`, when given, is filled with the per-step quantities the
    smoother recursions need.
    """
    y = np.asarray(observations, dtype=float)
    if y.ndim != 2 or y.shape[1] != system.n_obs:
        raise ValueError(f"observations must be (T, {system.n_obs})")
    if np.any(np.isinf(y)):
        raise NumericalError("non-finite (inf) observation")
    a = np.asarray(init_mean, dtype=float).copy()
    P = _symmetrize(np.asarray(init_cov, dtype=float))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(P))):
        raise NumericalError("non-finite initial moments")

    Tn, n = y.shape[0], system.n_state
    res = FilterResult(
        pred_mean=np.empty((Tn, n)), pred_cov=np.empty((Tn, n, n)),
        filt_mean=np.empty((Tn, n)), filt_cov=np.empty((Tn, n, n)),
        loglik_terms=np.zeros(Tn),
    )
    for t in range(Tn):
        C, Z, G, D, Tt, H = system.parts(t)
        a = D + Tt @ a
        P = _symmetrize(Tt @ P @ Tt.T + H @ H.T)
        res.pred_mean[t], res.pred_cov[t] = a, P

        o = np.flatnonzero(np.isfinite(y[t]))
        if o.size:
            Zo, Go, Co = Z[o], G[o], C[o]
            v = y[t, o] - Co - Zo @ a
            HGt = H @ Go.T
            F = _symmetrize(Zo @ P @ Zo.T + Zo @ HGt + HGt.T @ Zo.T + Go @ Go.T)
            try:
                Fc = linalg.cho_factor(F, lower=True, check_finite=False)
            except linalg.LinAlgError as exc:
                raise NumericalError(
                    f"singular innovation covariance at t={t}") from exc
            M = P @ Zo.T + HGt                       # Cov(state, innovation)
            Finv_v = linalg.cho_solve(Fc, v, check_finite=False)
            a = a + M @ Finv_v
            P = _symmetrize(P - M @ linalg.cho_solve(Fc, M.T, check_finite=False))
            logdet = 2.0 * np.log(np.diag(Fc[0])).sum()
            res.loglik_terms[t] = -0.5 * (
                o.size * np.log(2.0 * np.pi) + logdet + v @ Finv_v
            )
            if _store is not None:
                Finv = linalg.cho_solve(Fc, np.eye(o.size), check_finite=False)
                _store.append((o, Zo, Finv, v))
        elif _store is not None:
            _store.append(None)
        res.filt_mean[t], res.filt_cov[t] = a, P
    return res


def _augmented(system: StateSpaceSystem):
    """Equivalent system with state [s_t; eps_t] and no measurement shock.

    Gives the smoother recursions an uncorrelated representation; the
    filter on it reproduces the original likelihood exactly.
    """
    n, k = system.n_state, system.n_shock
    Tn = None
    for arr, nd in ((system.Z, 2), (system.T, 2), (system.H, 2), (system.G, 2)):
        if arr.ndim > nd:
            Tn = arr.shape[0]
    for arr, nd in ((system.C, 1), (system.D, 1)):
        if arr is not None and arr.ndim > nd:
            Tn = arr.shape[0]

    def stack_t(t):
        C, Z, G, D, Tt, H = system.parts(t)
        Za = np.hstack([Z, G])
        Ta = np.zeros((n + k, n + k))
        Ta[:n, :n] = Tt
        Ha = np.vstack([H, np.eye(k)])
        Da = np.concatenate([D, np.zeros(k)])
        return C, Za, Ta, Ha, Da

    if Tn is None:
        C, Za, Ta, Ha, Da = stack_t(0)
        return StateSpaceSystem(Z=Za, T=Ta, H=Ha, G=np.zeros((system.n_obs, k)),
                                C=system.C, D=Da)
    parts = [stack_t(t) for t in range(Tn)]
    return StateSpaceSystem(
        Z=np.stack([p[1] for p in parts]),
        T=np.stack([p[2] for p in parts]),
        H=np.stack([p[3] for p in parts]),
        G=np.zeros((system.n_obs, k)),
        C=np.stack([p[0] for p in parts]) if system.C is not None else None,
        D=np.stack([p[4] for p in parts]),
    )


def _augmented_init(system: StateSpaceSystem, init_mean, init_cov):
    k = system.n_shock
    a0 = np.concatenate([np.asarray(init_mean, dtype=float), np.zeros(k)])
    P0 = linalg.block_diag(np.asarray(init_cov, dtype=float), np.eye(k))
    return a0, P0


def _smooth_augmented(aug: StateSpaceSystem, observations, a0, P0) -> np.ndarray:
    """Fixed-interval smoothed means of the augmented state via the
    backward r-recursion (no predicted-covariance inversions)."""
    store: list = []
    res = kalman_filter(aug, observations, a0, P0, _store=store)
    Tn, n = res.pred_mean.shape
    smoothed = np.empty((Tn, n))
    r = np.zeros(n)
    for t in range(Tn - 1, -1, -1):
        # transition from t to t+1 enters the recursion towards t-1
        Tnext = aug.parts(t + 1)[4] if t + 1 < Tn else np.zeros((n, n))
        if store[t] is None:
            r_prev = Tnext.T @ r if t + 1 < Tn else np.zeros(n)
        else:
            o, Zo, Finv, v = store[t]
            Finv_v = Finv @ v
            if t + 1 < Tn:
                K = Tnext @ res.pred_cov[t] @ Zo.T @ Finv
                L = Tnext - K @ Zo
                r_prev = Zo.T @ Finv_v + L.T @ r
            else:
                r_prev = Zo.T @ Finv_v
        smoothed[t] = res.pred_mean[t] + res.pred_cov[t] @ r_prev
        r = r_prev
    return smoothed


def smooth_mean(system: StateSpaceSystem, observations, init_mean, init_cov) -> np.ndarray:
    """E[s_t | all observations] for t = 1..T, shape (T, n_state)."""
    aug = _augmented(system)
    a0, P0 = _augmented_init(system, init_mean, init_cov)
    return _smooth_augmented(aug, np.asarray(observations, dtype=float),
                             a0, P0)[:, : system.n_state]


def simulate(system: StateSpaceSystem, Tn: int, init_mean, init_cov,
             rng: np.random.Generator, mask: np.ndarray | None = None):
    """Forward-simulate (states, observations) for Tn periods.

    `mask`, when given, is the (Tn, n_obs) observability pattern; hidden
    cells come back NaN.
    """
    n, k, m = system.n_state, system.n_shock, system.n_obs
    s = np.asarray(init_mean, dtype=float) + _psd_sqrt(init_cov) @ rng.standard_normal(n)
    states = np.empty((Tn, n))
    obs = np.empty((Tn, m))
    for t in range(Tn):
        C, Z, G, D, Tt, H = system.parts(t)
        eps = rng.standard_normal(k)
        s = D + Tt @ s + H @ eps
        states[t] = s
        obs[t] = C + Z @ s + G @ eps
    if mask is not None:
        obs = np.where(mask, obs, np.nan)
    return states, obs


def simulation_smoother(system: StateSpaceSystem, observations, init_mean,
                        init_cov, rng: np.random.Generator) -> np.ndarray:
    """One draw from p(s_{1:T} | observations) by mean correction.

    An unconditional pseudo-path and pseudo-data are simulated with the
    constant terms zeroed; the draw is the pseudo-path plus the smoothed
    mean of the data difference.  Smoothing is affine in the observed
    values, so one pass over y - y_plus equals the difference of the two
    separate smoothed means (actual data under the full system minus
    pseudo-data under the zero-constant system).
    """
    y = np.asarray(observations, dtype=float)
    Tn = y.shape[0]
    mask = np.isfinite(y)
    n = system.n_state

    aug = _augmented(system)
    a0, P0 = _augmented_init(system, init_mean, init_cov)

    zsys = system.zero_constants()
    states_plus, y_plus = simulate(zsys, Tn, np.zeros(n),
                                   np.asarray(init_cov, dtype=float), rng, mask=mask)
    s_hat_diff = _smooth_augmented(aug, y - y_plus, a0, P0)
    return states_plus + s_hat_diff[:, :n]
