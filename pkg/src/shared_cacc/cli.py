"""Command line interface: run scenarios, sweep authority, validate, recompute metrics.

Exit codes: 0 success, 1 configuration or input error, 2 collision in a
run (outputs are still written), 3 validation tolerance breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, configs
from .metrics import moe_report, odd_sweep, evaluate_authority, sweep_window
from .simulator import ScenarioConfig, TrajectoryLog, run
from .validation import DEFAULT_SEED, SUITES, run_suites

SCHEMA_VERSION = "1"
OUT_DIR_ENV = "SHARED_CACC_OUT_DIR"
CSV_COLUMNS = ("t", "vehicle_id", "position_m", "speed_mps", "accel_mps2", "gap_m", "dv_mps",
               "u_h", "u_m", "u_fused", "alpha_h", "flags")
EXIT_OK, EXIT_CONFIG, EXIT_COLLISION, EXIT_VALIDATION = 0, 1, 2, 3


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    d = json.loads(json.dumps(d))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = d
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a config section")
            node = node[p]
        node[parts[-1]] = _parse_value(text)
    return d


def read_config(spec: str) -> tuple[dict, str]:
    """Config dict from a file path or a shipped config name; returns ``(dict, source)``."""
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        if not path.is_file():
            raise ConfigError(f"{spec}: no such config file")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{spec}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
        if not isinstance(d, dict):
            raise ConfigError(f"{spec}: top level must be a JSON object")
        return d, str(path)
    try:
        return configs.read(spec), f"shipped:{spec}"
    except FileNotFoundError as e:
        raise ConfigError(f"{spec}: {e}")


def load_scenario(spec: str, overrides=(), seed=None) -> tuple[ScenarioConfig, str]:
    d, source = read_config(spec)
    d = apply_overrides(d, overrides)
    if seed is not None:
        d["seed"] = seed
    try:
        return ScenarioConfig.from_dict(d), source
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: {e}")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "out"))


# ---------------------------------------------------------------------------
# writers

def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_trajectory_csv(log: TrajectoryLog, path: Path) -> None:
    rows = len(log.t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k in range(rows):
            last = log.collision and k == rows - 1
            for i in range(log.n_vehicles):
                flags = ""
                if log.violation[k, i]:
                    flags += "m"
                if log.human_violation[k, i]:
                    flags += "h"
                if last:
                    flags += "c"
                w.writerow([_fmt(log.t[k]), i, _fmt(log.position[k, i]), _fmt(log.speed[k, i]),
                            _fmt(log.accel[k, i]), _fmt(log.gap[k, i]), _fmt(log.dv[k, i]),
                            _fmt(log.u_h[k, i]), _fmt(log.u_m[k, i]), _fmt(log.u_fused[k, i]),
                            _fmt(log.alpha_h[k, i]), flags])


def read_trajectory_csv(path: Path, dt=None, onset=None, period=None) -> TrajectoryLog:
    """Rebuild a log from a trajectory CSV written by ``write_trajectory_csv``."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r, ()))
        if header != CSV_COLUMNS:
            raise ConfigError(f"{path}: unexpected columns {header}")
        records = list(r)
    if not records:
        raise ConfigError(f"{path}: no data rows")
    ids = np.array([int(rec[1]) for rec in records])
    n_veh = int(ids.max()) + 1
    if len(records) % n_veh:
        raise ConfigError(f"{path}: row count is not a multiple of the vehicle count")
    num = np.array([[float(v) if v else np.nan for v in rec[:11]] for rec in records])
    num = num.reshape(-1, n_veh, 11)
    flags = np.array([rec[11] for rec in records]).reshape(-1, n_veh)
    t = num[:, 0, 0]
    collision = bool(any("c" in f for f in flags[-1]))
    coll_vehicle = None
    if collision:
        g = num[-1, 1:, 5]
        coll_vehicle = int(np.argmax(g <= 0.0)) + 1
    if dt is None:
        dt = float(np.round(t[1] - t[0], 12)) if len(t) > 1 else 0.1
    col = lambda j: num[:, :, j]
    return TrajectoryLog(
        t=t, position=col(2), speed=col(3), accel=col(4), gap=col(5), dv=col(6),
        u_h=col(7), u_m=col(8), u_fused=col(9), alpha_h=col(10),
        violation=np.char.find(flags, "m") >= 0, human_violation=np.char.find(flags, "h") >= 0,
        collision=collision, collision_time=float(t[-1]) if collision else None,
        collision_vehicle=coll_vehicle, dt=dt, disturbance_onset=onset, leader_period=period)


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_manifest(path: Path, command: str, config: dict | None, outputs: list[Path],
                   runtime: float, extra: dict | None = None) -> None:
    m = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "csv_columns": list(CSV_COLUMNS),
        "outputs": [p.name for p in outputs],
        "runtime_s": round(runtime, 3),
    }
    if extra:
        m.update(extra)
    _dump_json(m, path)


# ---------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    sc, source = load_scenario(args.config, args.override, args.seed)
    out = Path(args.out_dir) if args.out_dir else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    log = run(sc)
    runtime = time.perf_counter() - t0
    report = moe_report(log)

    stem = sc.name
    traj = out / f"{stem}_trajectory.csv"
    moe = out / f"{stem}_moe.json"
    write_trajectory_csv(log, traj)
    _dump_json(report.to_dict(), moe)
    write_manifest(out / f"{stem}_manifest.json", "run", sc.to_dict(), [traj, moe], runtime,
                   {"source": source})
    print(f"{stem}: {len(log.t)} steps, {log.n_followers} followers, {runtime:.2f}s -> {out}")
    if log.collision:
        print(f"collision: follower {log.collision_vehicle} at t = {log.collision_time:.1f} s",
              file=sys.stderr)
        return EXIT_COLLISION
    return EXIT_OK


def parse_grid(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma separated list."""
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.split(":"))
            if not step > 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9))
            return [round(start + j * step, 12) for j in range(n + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}; use start:step:stop or a,b,c")


def cmd_sweep(args) -> int:
    if args.param != "alpha_h":
        raise ConfigError(f"unsupported sweep parameter {args.param!r}; only alpha_h is swept")
    sc, source = load_scenario(args.config, args.override, args.seed)
    grid = parse_grid(args.grid)
    if not grid or min(grid) < 0 or max(grid) > 1:
        raise ConfigError("alpha_h grid must be non-empty and lie within [0, 1]")
    try:
        sweep_window(sc)
    except ValueError as e:
        raise ConfigError(f"{source}: {e}")
    out = Path(args.out_dir) if args.out_dir else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    if len(set(grid)) >= 2:
        res = odd_sweep(sc, grid, workers=args.workers)
        rows, summary = res.rows, res.to_dict()
    else:
        rows = [evaluate_authority(sc, grid[0])]
        summary = {"threshold": None, "bracket": None, "message": "no threshold in range",
                   "warnings": []}
    runtime = time.perf_counter() - t0

    stem = f"{sc.name}_sweep"
    table = out / f"{stem}.csv"
    thr = out / f"{stem}_threshold.json"
    n = sc.n_followers
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha_h"] + [f"theta_{i}" for i in range(2, n + 1)]
                   + ["max_theta", "stable", "collision"])
        for r in rows:
            th = list(r.theta) if r.theta else [math.inf] * (n - 1)
            w.writerow([_fmt(r.alpha_h)] + [_fmt(x) for x in th]
                       + [_fmt(r.max_theta), int(r.stable), int(r.collision)])
    summary["grid"] = grid
    _dump_json(summary, thr)
    write_manifest(out / f"{stem}_manifest.json", "sweep", sc.to_dict(), [table, thr], runtime,
                   {"source": source, "param": args.param})
    print(f"{stem}: {len(rows)} grid points, {summary['message']} ({runtime:.1f}s)")
    for msg in summary["warnings"]:
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    selected = SUITES if args.suite == "all" else (args.suite,)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    results = run_suites(selected, seed=seed, n=args.n, n_leader=max(50, args.n // 4),
                         perturb=args.perturb_gain)
    ok = True
    for r in results:
        print(r.line())
        if not r.passed:
            ok = False
            print(f"  worst instance: {r.worst_instance}")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_metrics(args) -> int:
    path = Path(args.csv)
    if not path.is_file():
        raise ConfigError(f"{path}: no such trajectory CSV")
    onset, period = args.onset, args.period
    manifest = Path(args.manifest) if args.manifest else path.with_name(
        path.name.replace("_trajectory.csv", "_manifest.json"))
    if manifest.is_file() and manifest != path:
        cfg = json.loads(manifest.read_text()).get("config") or {}
        try:
            lead = ScenarioConfig.from_dict(cfg).leader
            onset = lead.onset if onset is None else onset
            period = getattr(lead, "period", None) if period is None else period
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{manifest}: {e}")
    log = read_trajectory_csv(path, onset=onset, period=period)
    window = tuple(args.window) if args.window else None
    report = moe_report(log, window=window, threshold=args.threshold).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shared-cacc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="config JSON path or shipped config name (e.g. case2_machine)")
        p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. planner.r=3 (repeatable)")

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="authority sweep and string-stability threshold")
    common(p)
    p.add_argument("--param", default="alpha_h")
    p.add_argument("--grid", default="0:0.1:1", help="start:step:stop or a,b,c")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for grid points")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="randomized oracle cross-checks")
    p.add_argument("--suite", default="all", choices=("all",) + SUITES)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, default=200, help="instances per suite")
    p.add_argument("--perturb-gain", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="recompute measures from a trajectory CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--manifest", help="manifest with the run's config (default: next to the CSV)")
    p.add_argument("--onset", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
