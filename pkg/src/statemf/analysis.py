"""Post-estimation analytics: spillover tables and business-cycle dating.

The connectedness measures decompose each variable's h-step forecast-error
variance into shares attributable to shocks in every variable, using the
generalized (ordering-invariant) decomposition with rows rescaled to sum
to one.  Turning points come from a nonparametric local-extrema dating
rule with alternation and minimum phase/cycle censoring.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# monthly dating calibration
EXTREMA_WINDOW = 5      # months on each side for a local extremum
MIN_PHASE = 6           # months from peak to trough or trough to peak
MIN_CYCLE = 15          # months between successive peaks (or troughs)


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class ConnectednessTable:
    """Row-normalized generalized variance-decomposition shares.

    shares[n, j] is the fraction of variable n's h-step forecast-error
    variance attributed to shocks in variable j.
    """

    horizon: int
    shares: np.ndarray

    def __post_init__(self):
        s = self.shares
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise AnalysisError("shares must be square")
        if np.any(s < -1e-12) or np.any(s > 1 + 1e-12):
            raise AnalysisError("shares outside [0, 1]")
        if not np.allclose(s.sum(axis=1), 1.0, atol=1e-10):
            raise AnalysisError("rows must sum to 1")

    @property
    def n_vars(self) -> int:
        return self.shares.shape[0]


def _ma_coefficients(Phi: np.ndarray, horizon: int) -> np.ndarray:
    """Psi_0..Psi_{horizon-1} of the VMA representation of a VAR(p)."""
    p, N = Phi.shape[0], Phi.shape[1]
    Psi = np.zeros((horizon, N, N))
    Psi[0] = np.eye(N)
    for h in range(1, horizon):
        acc = np.zeros((N, N))
        for l in range(1, min(h, p) + 1):
            acc += Phi[l - 1] @ Psi[h - l]
        Psi[h] = acc
    return Psi


def companion_eigenvalues(Phi: np.ndarray) -> np.ndarray:
    p, N = Phi.shape[0], Phi.shape[1]
    comp = np.zeros((N * p, N * p))
    for l in range(p):
        comp[:N, l * N:(l + 1) * N] = Phi[l]
    if p > 1:
        comp[N:, :-N] = np.eye(N * (p - 1))
    return np.linalg.eigvals(comp)


def generalized_fevd(Phi: np.ndarray, Omega: np.ndarray,
                     horizon: int) -> ConnectednessTable:
    """Generalized forecast-error variance decomposition of a stable VAR.

    Phi stacks the reduced-form lag matrices (p, N, N); Omega is the
    reduced-form error covariance.  Raw generalized shares are

        (sigma_jj^-1 sum_h (e_n' Psi_h Omega e_j)^2)
        / (sum_h e_n' Psi_h Omega Psi_h' e_n)

    and each row is divided by its sum.
    """
    Phi = np.asarray(Phi, dtype=float)
    Omega = np.asarray(Omega, dtype=float)
    if Phi.ndim != 3 or Phi.shape[1] != Phi.shape[2]:
        raise AnalysisError("Phi must be (p, N, N)")
    N = Phi.shape[1]
    if Omega.shape != (N, N):
        raise AnalysisError("Omega dimension mismatch")
    if horizon < 1:
        raise AnalysisError("horizon must be >= 1")
    if np.max(np.abs(companion_eigenvalues(Phi))) >= 1.0:
        raise AnalysisError("VAR is not stable")
    diag = np.diag(Omega)
    if np.any(diag <= 0):
        raise AnalysisError("singular error covariance")

    Psi = _ma_coefficients(Phi, horizon)
    num = np.zeros((N, N))
    den = np.zeros(N)
    for h in range(horizon):
        PO = Psi[h] @ Omega
        num += PO ** 2
        den += np.einsum("ij,ij->i", PO, Psi[h])
    raw = num / diag[np.newaxis, :] / den[:, np.newaxis]
    shares = raw / raw.sum(axis=1, keepdims=True)
    return ConnectednessTable(horizon=horizon, shares=shares)


def connectedness_from(table: ConnectednessTable, n: int) -> float:
    """Share of n's forecast-error variance due to shocks elsewhere."""
    if not 0 <= n < table.n_vars:
        raise AnalysisError("index out of range")
    return float(table.shares[n].sum() - table.shares[n, n])


def connectedness_to(table: ConnectednessTable, j: int) -> float:
    """Total contribution of j's shocks to other variables' variances."""
    if not 0 <= j < table.n_vars:
        raise AnalysisError("index out of range")
    return float(table.shares[:, j].sum() - table.shares[j, j])


def from_decomposition(table: ConnectednessTable, n: int,
                       block: list) -> tuple:
    """Split connectedness-from of n into a given block vs the rest."""
    inside = sum(float(table.shares[n, j]) for j in block if j != n)
    return inside, connectedness_from(table, n) - inside


def write_connectedness_csv(tables: dict, ids: list, path) -> None:
    """Dump per-pair shares: horizon,from_id,to_id,share."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["horizon", "from_id", "to_id", "share"])
        for h, table in sorted(tables.items()):
            for n in range(table.n_vars):
                for j in range(table.n_vars):
                    w.writerow([h, ids[j], ids[n], repr(table.shares[n, j])])


def write_aggregates_csv(tables: dict, ids: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "horizon", "from", "to", "own"])
        for h, table in sorted(tables.items()):
            for n, sid in enumerate(ids):
                w.writerow([sid, h, repr(connectedness_from(table, n)),
                            repr(connectedness_to(table, n)),
                            repr(float(table.shares[n, n]))])


@dataclass(frozen=True)
class TurningPointSet:
    """Alternating peak/trough month indices of one series."""

    peaks: tuple
    troughs: tuple

    def __post_init__(self):
        events = sorted([(t, "P") for t in self.peaks]
                        + [(t, "T") for t in self.troughs])
        for (t1, k1), (t2, k2) in zip(events, events[1:]):
            if k1 == k2:
                raise AnalysisError("turning points must alternate")
            if t2 - t1 < MIN_PHASE:
                raise AnalysisError("phase shorter than the minimum")

    @property
    def recession_count(self) -> int:
        return sum(1 for p in self.peaks if any(t > p for t in self.troughs))


def _local_extrema(x: np.ndarray, window: int):
    peaks, troughs = [], []
    for t in range(window, x.size - window):
        seg = x[t - window:t + window + 1]
        if x[t] == seg.max() and x[t] > seg[0] and x[t] > seg[-1]:
            peaks.append(t)
        elif x[t] == seg.min() and x[t] < seg[0] and x[t] < seg[-1]:
            troughs.append(t)
    return peaks, troughs


def date_cycles(levels) -> TurningPointSet:
    """Nonparametric turning-point dating of a monthly log-level series.

    Candidate extrema within a +/-5-month window are censored to enforce
    strict peak/trough alternation, a minimum phase of 6 months, and a
    minimum full cycle of 15 months.
    """
    x = np.asarray(levels, dtype=float)
    if x.ndim != 1 or x.size < 24:
        raise AnalysisError("series too short for dating (need >= 24 months)")
    if not np.all(np.isfinite(x)):
        raise AnalysisError("series contains non-finite values")

    peaks, troughs = _local_extrema(x, EXTREMA_WINDOW)
    kept = sorted([(t, "P") for t in peaks] + [(t, "T") for t in troughs])

    def alternate(seq):
        # among consecutive same-kind events keep the more extreme one
        out = []
        for t, kind in seq:
            if out and out[-1][1] == kind:
                t_prev = out[-1][0]
                better = x[t] > x[t_prev] if kind == "P" else x[t] < x[t_prev]
                if better:
                    out[-1] = (t, kind)
            else:
                out.append((t, kind))
        return out

    def first_violation(seq):
        # returns the index of the event to drop, or None
        for i, ((t1, k1), (t2, k2)) in enumerate(zip(seq, seq[1:])):
            if t2 - t1 < MIN_PHASE:
                # drop the less prominent side of the short phase, where
                # prominence is the move from the outer neighbour
                left = x[seq[i - 1][0]] if i > 0 else x[0]
                right = x[seq[i + 2][0]] if i + 2 < len(seq) else x[-1]
                return i if abs(x[t1] - left) < abs(x[t2] - right) else i + 1
        last = {}
        for i, (t, kind) in enumerate(seq):
            if kind in last and t - seq[last[kind]][0] < MIN_CYCLE:
                j = last[kind]
                tj = seq[j][0]
                if kind == "P":
                    return j if x[tj] < x[t] else i
                return j if x[tj] > x[t] else i
            last[kind] = i
        return None

    kept = alternate(kept)
    while kept:
        drop = first_violation(kept)
        if drop is None:
            break
        del kept[drop]
        kept = alternate(kept)

    return TurningPointSet(
        peaks=tuple(t for t, k in kept if k == "P"),
        troughs=tuple(t for t, k in kept if k == "T"),
    )


def write_turning_points_csv(points: dict, path) -> None:
    """Dump per-series turning points: series,kind,month."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "kind", "month"])
        for sid, (tps, months) in points.items():
            events = sorted([(t, "peak") for t in tps.peaks]
                            + [(t, "trough") for t in tps.troughs])
            for t, kind in events:
                w.writerow([sid, kind, str(months[t])])


def correlate_with_national(state_paths: dict, national_path) -> dict:
    """Pearson correlation of each state's growth with national growth."""
    nat = np.asarray(national_path, dtype=float)
    if nat.std() == 0:
        raise AnalysisError("zero-variance national series")
    out = {}
    for sid, x in state_paths.items():
        x = np.asarray(x, dtype=float)
        if x.shape != nat.shape:
            raise AnalysisError(f"{sid}: length mismatch")
        if x.std() == 0:
            raise AnalysisError(f"{sid}: zero-variance series")
        out[sid] = float(np.corrcoef(x, nat)[0, 1])
    return out
