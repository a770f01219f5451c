"""Command-line front end binding the library modules into batch runs.

Subcommands: simulate | estimate | nowcast | evaluate | connectedness |
date-cycles.  Each takes --config <path> --out <dir> [--seed N]
[--threads N] [--dry-run], reads a JSON configuration, writes CSV
outputs plus a run manifest into the output directory, and reports
progress on standard error.  Exit codes: 0 success, 2 configuration or
file errors, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .aggregation import (
    ConstraintRow,
    SCHEDULE_QUARTER_END,
    annual_monthly_row,
    annual_quarterly_row,
    cross_sectional_row,
    quarterly_monthly_row,
)
from .analysis import (
    AnalysisError,
    ConnectednessTable,
    date_cycles,
    generalized_fevd,
    write_aggregates_csv,
    write_connectedness_csv,
    write_turning_points_csv,
)
from .evaluation import (
    EvaluationError,
    ModelDefinition,
    _estimate,
    run_recursive_exercise,
    score_ratios,
    write_ratio_csv,
    write_report_csv,
)
from .mfvar import McmcSettings, ModelSpec, nowcast
from .panel import (
    PanelError,
    load_calendar,
    load_panel,
    load_schema,
    month_index,
    write_panel,
)
from .prior import SamplerError
from .simulate import DgpConfig, SimulationError, simulate_world

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def write_manifest(outdir, config_path, seed, inputs, started, finished):
    """Record everything needed to reproduce the run byte-for-byte."""
    manifest = {
        "tool": "statemf",
        "version": __version__,
        "config": str(config_path),
        "config_sha256": _sha256(config_path),
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "started": started,
        "finished": finished,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_error(outdir, kind: str, message: str) -> None:
    record = {"error": kind, "message": message}
    print(json.dumps(record), file=sys.stderr, flush=True)
    try:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "error.json"), "w") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    except OSError:
        pass


def _build_constraint(entry: dict) -> ConstraintRow:
    kind = _require(entry, "type")
    if kind == "quarterly_monthly":
        return quarterly_monthly_row(_require(entry, "target"),
                                     _require(entry, "latent"))
    if kind == "annual_monthly":
        return annual_monthly_row(_require(entry, "target"),
                                  _require(entry, "latent"))
    if kind == "annual_quarterly":
        return annual_quarterly_row(_require(entry, "target"),
                                    _require(entry, "latent"))
    if kind == "identity":
        return ConstraintRow(target=_require(entry, "target"),
                             weights=((_require(entry, "latent"), 0, 1.0),),
                             variance=0.0, schedule=SCHEDULE_QUARTER_END)
    if kind == "cross_sectional":
        states = [(sid, float(wt)) for sid, wt in _require(entry, "states")]
        return cross_sectional_row(_require(entry, "target"), states,
                                   float(entry.get("variance", 1e-4)),
                                   quarterly=bool(entry.get("quarterly",
                                                            False)))
    raise ConfigError(f"unknown constraint type {kind!r}")


def build_model_spec(cfg: dict) -> ModelSpec:
    try:
        return ModelSpec(
            observed=tuple(cfg.get("observed", ())),
            latent=tuple(cfg.get("latent", ())),
            constraints=tuple(_build_constraint(c)
                              for c in cfg.get("constraints", ())),
            p=int(cfg.get("p", 5)),
            frequency=cfg.get("frequency", "monthly"),
            init_scale=float(cfg.get("init_scale", 1.0)),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid model specification: {exc}") from exc


def _build_mcmc(cfg: dict) -> McmcSettings:
    try:
        return McmcSettings(burn=int(cfg.get("burn", 5000)),
                            keep=int(cfg.get("keep", 5000)),
                            thin=int(cfg.get("thin", 5)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid mcmc settings: {exc}") from exc


def build_model_definition(cfg: dict) -> ModelDefinition:
    mdl = _require(cfg, "model")
    mcmc = _build_mcmc(cfg.get("mcmc", {}))
    qcfg = cfg.get("quarterly_model")
    return ModelDefinition(
        monthly_spec=build_model_spec(mdl),
        mcmc=mcmc,
        quarterly_spec=build_model_spec(qcfg) if qcfg else None,
        pseudo_targets=dict(cfg.get("pseudo_targets", {})) or None,
        mcmc_quarterly=(_build_mcmc(cfg["mcmc_quarterly"])
                        if "mcmc_quarterly" in cfg else None),
    )


def _load_inputs(cfg: dict, base_dir):
    """Resolve panel/schema/calendar paths and load them."""
    paths = {}
    for key in ("panel", "schema", "calendar"):
        if key in cfg:
            p = cfg[key]
            if not os.path.isabs(p):
                p = os.path.join(base_dir, p)
            if not os.path.exists(p):
                raise ConfigError(f"{key} file not found: {p}")
            paths[key] = p
    if "panel" not in paths or "schema" not in paths:
        raise ConfigError("config must name 'panel' and 'schema' files")
    schema = load_schema(paths["schema"])
    panel = load_panel(paths["panel"], schema,
                       vintage=cfg.get("vintage", "unversioned"))
    calendar = load_calendar(paths["calendar"]) if "calendar" in paths \
        else None
    return panel, calendar, list(paths.values())


def _write_long_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_schema_csv(panel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "frequency", "role", "scope", "tcode",
                    "release_lag_months"])
        for m in panel.metas:
            w.writerow([m.id, m.frequency, m.role, m.scope, m.tcode,
                        m.release_lag_months])


def _write_calendar_csv(calendar, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "release_lag_months"])
        for sid, lag in calendar.lags.items():
            w.writerow([sid, lag])


def _dump_draws(draws, path) -> None:
    """Latent-path draw dump: draw,series,month,value."""
    spec = draws.spec
    paths = draws.insample_paths()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "series", "month", "value"])
        for sid in spec.latent:
            col = spec.column(sid)
            for d in range(draws.n_keep):
                for t in range(draws.months.size):
                    w.writerow([d, sid, str(draws.months[t]),
                                repr(float(paths[d, t, col]))])


def _dump_summary(draws, path) -> None:
    spec = draws.spec
    paths = draws.insample_paths()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "month", "mean", "sd", "q05", "q50", "q95"])
        for sid in spec.latent:
            col = spec.column(sid)
            block = paths[:, :, col]
            q05, q50, q95 = np.percentile(block, [5, 50, 95], axis=0)
            mean, sd = block.mean(axis=0), block.std(axis=0)
            for t in range(draws.months.size):
                w.writerow([sid, str(draws.months[t]), repr(float(mean[t])),
                            repr(float(sd[t])), repr(float(q05[t])),
                            repr(float(q50[t])), repr(float(q95[t]))])


def cmd_simulate(cfg: dict, outdir, seed: int, base_dir) -> list:
    try:
        dgp = DgpConfig(**cfg.get("dgp", {}))
    except (TypeError, SimulationError) as exc:
        raise ConfigError(f"invalid dgp config: {exc}") from exc
    _progress(f"simulating {dgp.n_states}-state world, "
              f"{dgp.n_months} months, seed {seed}")
    world = simulate_world(dgp, seed=seed)
    write_panel(world.panel, os.path.join(outdir, "panel.csv"))
    _write_schema_csv(world.panel, os.path.join(outdir, "schema.csv"))
    _write_calendar_csv(world.calendar, os.path.join(outdir, "calendar.csv"))
    rows = []
    for sid, g in world.truth.items():
        rows.extend((str(m), sid, repr(float(v)))
                    for m, v in zip(world.panel.months, g))
    _write_long_csv(os.path.join(outdir, "truth.csv"),
                    ["month", "series", "value"], rows)
    return []


def cmd_estimate(cfg: dict, outdir, seed: int, base_dir) -> list:
    panel, _, inputs = _load_inputs(cfg, base_dir)
    model = build_model_definition(cfg)
    _progress(f"estimating on {panel.months.size} months, "
              f"{model.mcmc.sweeps} sweeps")
    rng = np.random.default_rng(seed)
    draws, _ = _estimate(model, panel, rng)
    _dump_draws(draws, os.path.join(outdir, "draws.csv"))
    _dump_summary(draws, os.path.join(outdir, "summary.csv"))
    return inputs


def cmd_nowcast(cfg: dict, outdir, seed: int, base_dir) -> list:
    panel, calendar, inputs = _load_inputs(cfg, base_dir)
    model = build_model_definition(cfg)
    targets = [(sid, month_index(q))
               for sid, q in _require(cfg, "targets")]
    rng = np.random.default_rng(seed)
    _progress("estimating before nowcasting")
    draws, _ = _estimate(model, panel, rng)
    _progress(f"nowcasting {len(targets)} targets")
    dists = nowcast(panel, model.monthly_spec, draws, targets, rng,
                    allow_observed=bool(cfg.get("allow_observed", False)))
    rows = []
    summary = []
    for dist in dists:
        rows.extend((d, dist.series, str(dist.quarter_end), repr(float(v)))
                    for d, v in enumerate(dist.samples))
        summary.append((dist.series, str(dist.quarter_end),
                        repr(float(dist.samples.mean())),
                        repr(float(dist.samples.std()))))
    _write_long_csv(os.path.join(outdir, "nowcasts.csv"),
                    ["draw", "series", "month", "value"], rows)
    _write_long_csv(os.path.join(outdir, "nowcast_summary.csv"),
                    ["series", "month", "mean", "sd"], summary)
    return inputs


def cmd_evaluate(cfg: dict, outdir, seed: int, base_dir) -> list:
    panel, calendar, inputs = _load_inputs(cfg, base_dir)
    if calendar is None:
        raise ConfigError("evaluate requires a 'calendar' file")
    model = build_model_definition(cfg)
    bench_cfg = _require(cfg, "benchmark")
    benchmark = build_model_definition(bench_cfg)
    schedule = _require(cfg, "schedule")
    if not schedule:
        raise ConfigError("schedule must list at least one month")
    targets = dict(_require(cfg, "targets"))
    _progress(f"recursive exercise over {len(schedule)} months")
    full, bench = run_recursive_exercise(
        panel, model, benchmark, schedule, calendar, targets, seed=seed,
        exclusions=cfg.get("exclusions", ()),
        freeze_windows=[tuple(wnd) for wnd in cfg.get("freeze_windows", ())],
        with_log_score=bool(cfg.get("log_score", True)))
    write_report_csv(full, os.path.join(outdir, "report_full.csv"))
    write_report_csv(bench, os.path.join(outdir, "report_benchmark.csv"))
    write_ratio_csv(score_ratios(full, bench),
                    os.path.join(outdir, "ratios.csv"))
    return inputs


def cmd_connectedness(cfg: dict, outdir, seed: int, base_dir) -> list:
    panel, _, inputs = _load_inputs(cfg, base_dir)
    model = build_model_definition(cfg)
    horizons = [int(h) for h in cfg.get("horizons", [12])]
    rng = np.random.default_rng(seed)
    _progress("estimating before connectedness")
    draws, _ = _estimate(model, panel, rng)
    spec = model.monthly_spec
    ids = list(spec.variables)
    tables = {}
    for h in horizons:
        shares, used = None, 0
        for params in draws.params:
            _, Phi, Omega = params.reduced_form()
            try:
                table = generalized_fevd(Phi, Omega, h)
            except AnalysisError:
                continue  # unstable draw: excluded from the average
            shares = table.shares if shares is None else shares + table.shares
            used += 1
        if used == 0:
            raise SamplerError(f"no stable draws at horizon {h}")
        tables[h] = ConnectednessTable(horizon=h, shares=shares / used)
        _progress(f"horizon {h}: averaged over {used}/{draws.n_keep} draws")
    write_connectedness_csv(tables, ids,
                            os.path.join(outdir, "connectedness.csv"))
    write_aggregates_csv(tables, ids,
                         os.path.join(outdir, "connectedness_totals.csv"))
    return inputs


def cmd_date_cycles(cfg: dict, outdir, seed: int, base_dir) -> list:
    src = _require(cfg, "input")
    if not os.path.isabs(src):
        src = os.path.join(base_dir, src)
    if not os.path.exists(src):
        raise ConfigError(f"input file not found: {src}")
    cumulate = bool(cfg.get("cumulate", True))
    series = {}
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"month", "series", "value"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{src}: expected columns month,series,value")
        for row in reader:
            series.setdefault(row["series"], []).append(
                (month_index(row["month"]), float(row["value"])))
    wanted = cfg.get("series") or sorted(series)
    points = {}
    for sid in wanted:
        if sid not in series:
            raise ConfigError(f"series {sid!r} not in {src}")
        recs = sorted(series[sid])
        months = np.array([m for m, _ in recs])
        x = np.array([v for _, v in recs])
        levels = np.cumsum(x) if cumulate else x
        points[sid] = (date_cycles(levels), months)
        _progress(f"{sid}: {len(points[sid][0].peaks)} peaks, "
                  f"{len(points[sid][0].troughs)} troughs")
    write_turning_points_csv(points, os.path.join(outdir,
                                                  "turning_points.csv"))
    return [src]


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "nowcast": cmd_nowcast,
    "evaluate": cmd_evaluate,
    "connectedness": cmd_connectedness,
    "date-cycles": cmd_date_cycles,
}


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        _progress("threadpoolctl unavailable; thread cap applies to "
                  "processes started after this point")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statemf",
        description="Mixed-frequency Bayesian VAR estimation, nowcasting, "
                    "and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="path to a JSON configuration file")
        p.add_argument("--out", required=True,
                       help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--dry-run", action="store_true",
                       help="validate the config and print the resolved "
                            "plan without computing")
    return parser


def _resolved_plan(command: str, cfg: dict, args) -> dict:
    plan = {"command": command, "config": args.config, "out": args.out,
            "seed": args.seed, "threads": args.threads,
            "settings": cfg}
    return plan


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        cfg = _load_config(args.config)
        if args.dry_run:
            # config structure is validated as far as possible offline
            if args.command in ("estimate", "nowcast", "evaluate",
                                "connectedness"):
                build_model_definition(cfg)
            if args.command == "simulate":
                try:
                    DgpConfig(**cfg.get("dgp", {}))
                except (TypeError, SimulationError) as exc:
                    raise ConfigError(f"invalid dgp config: {exc}") from exc
            print(json.dumps(_resolved_plan(args.command, cfg, args),
                             indent=2, sort_keys=True))
            return 0
        os.makedirs(args.out, exist_ok=True)
        started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        base_dir = os.path.dirname(os.path.abspath(args.config))
        inputs = COMMANDS[args.command](cfg, args.out, args.seed, base_dir)
        finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
        write_manifest(args.out, args.config, args.seed, inputs,
                       started, finished)
        _progress("done")
        return 0
    except (ConfigError, PanelError, FileNotFoundError) as exc:
        _write_error(args.out, "config", str(exc))
        return EXIT_CONFIG
    except (SamplerError, EvaluationError, AnalysisError, SimulationError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        _write_error(args.out, "numerical", str(exc))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
