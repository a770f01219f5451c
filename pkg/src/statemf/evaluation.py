"""Recursive pseudo-real-time nowcasting exercise and scoring.

Each scheduled month the panel is truncated to what a real-time analyst
would have seen, the model is re-estimated (optionally with parameters
frozen over designated windows), and predictive distributions for the
current quarter (nowcasts) and the previous quarter (back-estimates) are
scored against designated outturns with RMSE, the continuous ranked
probability score, and a kernel-density log score.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .mfvar import (
    McmcSettings,
    ModelSpec,
    FreezePolicy,
    nowcast,
    run_step1_quarterly,
    run_step2_monthly,
)
from .panel import MixedFrequencyPanel, ReleaseCalendar, month_of_year, \
    truncate_to_vintage

INFO_SETS = ("m1_nowcast", "m2_nowcast", "m3_nowcast",
             "m1_estimate", "m2_estimate")
METRICS = ("rmse", "crps", "log_score")


class EvaluationError(ValueError):
    pass


def rmse(forecasts, outturns, exclude=None) -> float:
    """Root mean squared error over non-excluded aligned pairs."""
    f = np.asarray(forecasts, dtype=float)
    y = np.asarray(outturns, dtype=float)
    if f.shape != y.shape or f.ndim != 1:
        raise EvaluationError("forecasts and outturns must be aligned 1-d")
    keep = np.ones(f.size, dtype=bool)
    if exclude is not None:
        excl = np.asarray(exclude, dtype=bool)
        if excl.shape != f.shape:
            raise EvaluationError("exclusion mask must be aligned")
        keep = ~excl
    if not keep.any():
        raise EvaluationError("no periods left after exclusions")
    return float(np.sqrt(np.mean((f[keep] - y[keep]) ** 2)))


def crps_from_sample(sample, outturn: float) -> float:
    """Continuous ranked probability score of an empirical predictive sample.

    Uses E|X - y| minus half the unbiased pairwise estimate of E|X - X'|.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 2:
        raise EvaluationError("need at least 2 predictive draws for CRPS")
    term1 = np.mean(np.abs(x - outturn))
    # sum_{i<j} (x_(j) - x_(i)) via order statistics
    idx = np.arange(n)
    pair_sum = np.sum((2 * idx - n + 1) * x)
    term2 = pair_sum / (n * (n - 1))
    return float(term1 - term2)


def log_score(sample, outturn: float) -> float:
    """Log predictive density at the outturn via a Gaussian kernel estimate
    with the Silverman bandwidth rule."""
    x = np.asarray(sample, dtype=float)
    if x.size < 10:
        raise EvaluationError("need at least 10 predictive draws for a "
                              "kernel log score")
    if x.std() == 0:
        raise EvaluationError("zero bandwidth: predictive sample is constant")
    kde = stats.gaussian_kde(x, bw_method="silverman")
    return float(kde.logpdf(outturn)[0])


@dataclass
class ModelDefinition:
    """One estimable model: a monthly system, optionally preceded by a
    quarterly system whose latent draws fill unobserved quarterly data."""

    monthly_spec: ModelSpec
    mcmc: McmcSettings
    quarterly_spec: ModelSpec | None = None
    pseudo_targets: dict | None = None
    mcmc_quarterly: McmcSettings | None = None


@dataclass
class ScoreReport:
    """Per series and information set accuracy metrics.

    `scores` maps (series_id, info_set) to {metric: value}; `counts`
    carries the number of scored periods behind each cell.
    """

    scores: dict
    counts: dict
    excluded: tuple = ()

    def __post_init__(self):
        for key, metrics in self.scores.items():
            if metrics.get("rmse", 0.0) < 0 or metrics.get("crps", 0.0) < 0:
                raise EvaluationError(f"negative score for {key}")

    def series_ids(self) -> tuple:
        return tuple(sorted({sid for sid, _ in self.scores}))

    def average(self, info_set: str, metric: str) -> float:
        vals = [m[metric] for (sid, info), m in self.scores.items()
                if info == info_set and metric in m]
        if not vals:
            raise EvaluationError(
                f"no scores for info set {info_set!r}, metric {metric!r}")
        return float(np.mean(vals))


def score_ratios(full: ScoreReport, benchmark: ScoreReport) -> dict:
    """Full-over-benchmark metric ratios on the common cells, plus an
    equal-weighted cross-series average per information set."""
    out = {}
    infos = set()
    for key in full.scores.keys() & benchmark.scores.keys():
        cell = {}
        for metric in full.scores[key].keys() & benchmark.scores[key].keys():
            denom = benchmark.scores[key][metric]
            if denom == 0:
                continue
            cell[metric] = full.scores[key][metric] / denom
        if cell:
            out[key] = cell
            infos.add(key[1])
    for info in infos:
        avg = {}
        for metric in METRICS:
            vals = [m[metric] for (sid, i), m in out.items()
                    if i == info and metric in m and sid != "AVG"]
            if vals:
                avg[metric] = float(np.mean(vals))
        out[("AVG", info)] = avg
    return out


def write_report_csv(report: ScoreReport, path) -> None:
    """Dump scores in long format: series,info_set,metric,value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "info_set", "metric", "value"])
        for (sid, info) in sorted(report.scores):
            for metric in METRICS:
                if metric in report.scores[(sid, info)]:
                    w.writerow([sid, info, metric,
                                repr(report.scores[(sid, info)][metric])])
        for info in INFO_SETS:
            for metric in METRICS:
                try:
                    w.writerow(["AVG", info, metric,
                                repr(report.average(info, metric))])
                except EvaluationError:
                    continue


def write_ratio_csv(ratios: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "info_set", "metric", "ratio"])
        for (sid, info) in sorted(ratios):
            for metric in METRICS:
                if metric in ratios[(sid, info)]:
                    w.writerow([sid, info, metric,
                                repr(ratios[(sid, info)][metric])])


def _quarter_position(month: np.datetime64) -> int:
    """1, 2 or 3 for the month's position within its calendar quarter."""
    return (month_of_year(month) - 1) % 3 + 1


def _quarter_end(month: np.datetime64) -> np.datetime64:
    return month + np.timedelta64(3 - _quarter_position(month), "M")


def estimate_draws(model: ModelDefinition, panel: MixedFrequencyPanel,
                   rng: np.random.Generator):
    """Run the model's sampler on a panel and return the retained draws.

    Returns (monthly_draws, quarterly_draws); the quarterly element is
    None for single-step models.
    """
    return _estimate(model, panel, rng)


def _estimate(model: ModelDefinition, panel: MixedFrequencyPanel,
              rng: np.random.Generator, frozen=None):
    """Run the (optionally two-step) sampler; with `frozen` draws, only
    latent paths are re-drawn while parameters cycle the stored draws."""
    q_draws = None
    if model.quarterly_spec is not None:
        mq = model.mcmc_quarterly or model.mcmc
        if frozen is not None and frozen[0] is not None:
            mq = McmcSettings(burn=0, keep=len(frozen[0]), thin=1)
            q_draws = run_step1_quarterly(panel, model.quarterly_spec, mq,
                                          rng, init_params=list(frozen[0]),
                                          update_params=False)
        else:
            q_draws = run_step1_quarterly(panel, model.quarterly_spec, mq, rng)
    if frozen is not None:
        mm = McmcSettings(burn=0, keep=len(frozen[1]), thin=1)
        draws = run_step2_monthly(panel, model.monthly_spec, q_draws,
                                  model.pseudo_targets, mm, rng,
                                  init_params=list(frozen[1]),
                                  update_params=False)
    else:
        draws = run_step2_monthly(panel, model.monthly_spec, q_draws,
                                  model.pseudo_targets, model.mcmc, rng)
    return draws, q_draws


def _outturn(panel: MixedFrequencyPanel, series_id: str,
             quarter_end: np.datetime64):
    if quarter_end not in panel.months:
        return None
    v = panel.series(series_id)[panel.index_of(quarter_end)]
    return float(v) if np.isfinite(v) else None


@dataclass
class _Cell:
    points: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    outturns: list = field(default_factory=list)


def _score_cells(cells: dict, excluded: tuple,
                 with_log_score: bool) -> ScoreReport:
    scores, counts = {}, {}
    for key, cell in cells.items():
        if not cell.outturns:
            continue
        metrics = {
            "rmse": rmse(cell.points, cell.outturns),
            "crps": float(np.mean([crps_from_sample(s, y) for s, y in
                                   zip(cell.samples, cell.outturns)])),
        }
        if with_log_score:
            metrics["log_score"] = float(np.mean(
                [log_score(s, y) for s, y in
                 zip(cell.samples, cell.outturns)]))
        scores[key] = metrics
        counts[key] = len(cell.outturns)
    if not scores:
        raise EvaluationError("exercise produced no scorable periods")
    return ScoreReport(scores=scores, counts=counts, excluded=excluded)


def run_recursive_exercise(panel: MixedFrequencyPanel,
                           model: ModelDefinition,
                           benchmark: ModelDefinition,
                           schedule,
                           calendar: ReleaseCalendar,
                           targets: dict,
                           seed: int = 0,
                           outturn_panel: MixedFrequencyPanel | None = None,
                           exclusions=(),
                           freeze_windows=(),
                           with_log_score: bool = True):
    """Recursive pseudo-real-time exercise returning a ScoreReport pair.

    `schedule` lists decision months; at each the panel is truncated per
    the release calendar, both models are re-estimated, and the current
    quarter is nowcast (info set m1/m2/m3 by position in the quarter).
    At positions 1 and 2 the previous quarter is also back-estimated.
    Each (model, month) estimation runs on a child seed derived from
    `seed` and the month alone, so two identical model definitions yield
    bitwise-identical results.
    `targets` maps each latent monthly variable to the observed quarterly
    series providing its outturn (taken from `outturn_panel`, defaulting
    to the full input panel).  Quarters listed in `exclusions` are
    dropped from every metric; months inside `freeze_windows` reuse the
    last pre-window parameter draws and only re-smooth latent states.
    """
    schedule = [m if isinstance(m, np.datetime64) else np.datetime64(m, "M")
                for m in schedule]
    if not schedule:
        raise EvaluationError("empty schedule")
    outturn_panel = outturn_panel if outturn_panel is not None else panel
    excluded = tuple(np.datetime64(q, "M") for q in exclusions)
    policy = FreezePolicy(windows=tuple(
        (np.datetime64(a, "M"), np.datetime64(b, "M"))
        for a, b in freeze_windows))

    cells = {"full": {}, "bench": {}}
    last_params = {"full": None, "bench": None}
    for month in sorted(schedule):
        pos = _quarter_position(month)
        qe_now = _quarter_end(month)
        jobs = [(f"m{pos}_nowcast", qe_now)]
        if pos <= 2:
            jobs.append((f"m{pos}_estimate", qe_now - np.timedelta64(3, "M")))
        try:
            vintage = truncate_to_vintage(panel, calendar, month)
        except Exception as exc:
            raise EvaluationError(f"vintage construction failed at {month}: "
                                  f"{exc}") from exc
        for tag, mdef in (("full", model), ("bench", benchmark)):
            rng = np.random.default_rng([int(seed), int(month.astype(int))])
            frozen = last_params[tag] if (policy.frozen(month)
                                          and last_params[tag]) else None
            try:
                draws, q_draws = _estimate(mdef, vintage, rng, frozen=frozen)
            except Exception as exc:
                raise EvaluationError(
                    f"estimation of the {tag} model failed at {month}: "
                    f"{exc}") from exc
            if frozen is None:
                last_params[tag] = (
                    list(q_draws.params) if q_draws is not None else None,
                    list(draws.params),
                )
            for info, qe in jobs:
                if qe in excluded:
                    continue
                wanted = [(lid, qe) for lid in targets
                          if lid in mdef.monthly_spec.latent]
                if not wanted:
                    continue
                try:
                    dists = nowcast(vintage, mdef.monthly_spec, draws,
                                    wanted, rng,
                                    allow_observed=info.endswith("estimate"))
                except Exception as exc:
                    raise EvaluationError(
                        f"prediction with the {tag} model failed at {month}: "
                        f"{exc}") from exc
                for dist in dists:
                    y = _outturn(outturn_panel, targets[dist.series], qe)
                    if y is None:
                        continue
                    cell = cells[tag].setdefault((dist.series, info), _Cell())
                    cell.points.append(float(dist.samples.mean()))
                    cell.samples.append(dist.samples)
                    cell.outturns.append(y)

    full_report = _score_cells(cells["full"], excluded, with_log_score)
    bench_report = _score_cells(cells["bench"], excluded, with_log_score)
    return full_report, bench_report
