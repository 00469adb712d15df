"""Command-line entry point: run, compare, sweep, validate, generate.

Exit status: 0 success, 1 data or configuration error, 2 a validation
check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from .harness import METHODS, TRUTH_MODELS, run_episode, write_trace
from .ingest import (
    DataError,
    GeneratorConfig,
    RunConfig,
    generate_scenario,
    load_run_config,
    load_scenario_dir,
    load_series,
    load_sessions,
    run_config_from_mapping,
    save_scenario_dir,
)
from .model import Scenario
from .reference.qp import ConvergenceError

EXIT_OK, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2
COMPARE_COLUMNS = ("method", "total_cost", "fulfillment_pct", "cost_index", "heating_pct")
SWEEP_PARAMS = ("v", "gamma", "offset")

log = logging.getLogger("coldcharge")


def build_scenario(cfg: RunConfig) -> Scenario:
    """Scenario directory or generator, then per-file overrides, then the ambient offset."""
    if cfg.scenario:
        sc = load_scenario_dir(cfg.scenario)
        if cfg.offset:
            sc = sc.shifted(cfg.offset)
    else:
        sc = generate_scenario(GeneratorConfig(seed=cfg.seed, ev_count=cfg.ev_count, ambient_offset=cfg.offset))
    if cfg.ambient or cfg.price or cfg.pv or cfg.sessions:
        h, dt = sc.horizon, sc.dt_hours
        amb = load_series(cfg.ambient, "ambient", h, dt) + cfg.offset if cfg.ambient else sc.ambient
        price = load_series(cfg.price, "price", h, dt) if cfg.price else sc.price
        pv = load_series(cfg.pv, "pv", h, dt) if cfg.pv else sc.pv_cap
        sessions = load_sessions(cfg.sessions) if cfg.sessions else sc.sessions
        sc = Scenario.build(amb, price, pv, sessions, max(sc.price_cap, float(max(price))), dt)
    return sc


def _episode(sc: Scenario, cfg: RunConfig, method: Optional[str] = None):
    return run_episode(
        sc, method=method or cfg.method, v=cfg.v, gamma=cfg.gamma, truth_model=cfg.truth_model,
        enforce_v_max=cfg.enforce_v_max, seed=cfg.seed, alpha=cfg.alpha,
    )


def write_trajectories(trace, path) -> None:
    """Per-EV, per-slot temperature and power rows, ready for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "ev", "energy_kwh", "temperature_c", "p_charge_kw", "p_heat_kw"])
        for rec in trace.records:
            for row in rec.evs:
                w.writerow([rec.slot, row["id"], row["energy"], row["temperature"], row["p_c"], row["p_h"]])


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg: RunConfig, args) -> int:
    sc = build_scenario(cfg)
    res = _episode(sc, cfg)
    out = _out_dir(cfg)
    metrics = {"method": cfg.method, "v": cfg.v, "gamma": cfg.gamma, "truth_model": cfg.truth_model,
               **res.metrics.as_dict()}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    write_trace(res.trace, out / "trace.jsonl")
    write_trajectories(res.trace, out / "trajectories.csv")
    for k, v in metrics.items():
        print(f"{k} = {v}")
    return EXIT_OK


def compare_rows(sc: Scenario, cfg: RunConfig) -> List[dict]:
    rows = []
    for m in METHODS:
        met = _episode(sc, cfg, m).metrics
        rows.append({
            "method": m,
            "total_cost": met.total_cost,
            "fulfillment_pct": 100.0 * met.fulfillment_ratio,
            "cost_index": met.cost_index,
            "heating_pct": 100.0 * met.heating_ratio,
        })
    return rows


def cmd_compare(cfg: RunConfig, args) -> int:
    sc = build_scenario(cfg)
    rows = compare_rows(sc, cfg)
    path = _out_dir(cfg) / "compare.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    print(f"{'method':<10}{'cost':>12}{'fulfil %':>11}{'index':>12}{'heat %':>9}")
    for r in rows:
        print(f"{r['method']:<10}{r['total_cost']:>12.4f}{r['fulfillment_pct']:>11.2f}"
              f"{r['cost_index']:>12.6f}{r['heating_pct']:>9.2f}")
    return EXIT_OK


def _sweep_point(job):
    cfg, param, value = job
    if param == "offset":
        cfg = replace(cfg, offset=cfg.offset + value)
    else:
        cfg = replace(cfg, **{param: value})
    met = _episode(build_scenario(cfg), cfg).metrics
    return {param: value, **met.as_dict()}


def cmd_sweep(cfg: RunConfig, args) -> int:
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise DataError("--values is empty")
    jobs = [(cfg, args.param, v) for v in values]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    path = _out_dir(cfg) / f"sweep_{args.param}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{args.param}={r[args.param]:g}  cost={r['total_cost']:.4f}  "
              f"fulfillment={r['fulfillment_ratio']:.4f}  heating={r['heating_ratio']:.4f}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig, args) -> int:
    from .validation import run_all

    if cfg.scenario or cfg.ambient or cfg.sessions:
        scenarios = [("input", build_scenario(cfg))]
    else:
        scenarios = [
            (f"seed{s}", generate_scenario(GeneratorConfig(seed=s, ev_count=n, ambient_offset=off)))
            for s, n, off in ((0, 10, 0.0), (1, 20, -5.0), (2, 5, 3.0))
        ]
    results = run_all(scenarios, quick=args.quick)
    for r in results:
        print(r)
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_generate(cfg: RunConfig, args) -> int:
    sc = generate_scenario(GeneratorConfig(seed=cfg.seed, ev_count=cfg.ev_count, ambient_offset=cfg.offset))
    save_scenario_dir(sc, cfg.out)
    print(f"wrote {len(sc.sessions)} sessions over {sc.horizon} slots to {cfg.out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with RunConfig fields; flags override it")
    p.add_argument("--scenario", help="scenario directory (default: synthetic day)")
    p.add_argument("--ambient", help="ambient series CSV overriding the scenario's")
    p.add_argument("--price", help="price series CSV overriding the scenario's")
    p.add_argument("--pv", help="PV series CSV overriding the scenario's")
    p.add_argument("--sessions", help="sessions CSV overriding the scenario's")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--v", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--truth-model", dest="truth_model", choices=TRUTH_MODELS)
    p.add_argument("--alpha", type=float, help="offline departure-penalty weight ($/kWh^2)")
    p.add_argument("--no-vmax", dest="enforce_v_max", action="store_const", const=False,
                   help="allow V above the feasibility limit")
    p.add_argument("--offset", type=float, help="ambient temperature shift (degC)")
    p.add_argument("--seed", type=int)
    p.add_argument("--ev-count", dest="ev_count", type=int, help="EVs in the synthetic scenario")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coldcharge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {}
    for name, fn, help_ in (
        ("run", cmd_run, "simulate one method; write metrics, trace and trajectories"),
        ("compare", cmd_compare, "all five methods on one scenario; write compare.csv"),
        ("sweep", cmd_sweep, "one episode per parameter value; write sweep_<param>.csv"),
        ("validate", cmd_validate, "solver oracles and episode invariants"),
        ("generate", cmd_generate, "write a synthetic scenario directory"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        handlers[name] = fn
        if name == "sweep":
            p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
            p.add_argument("--values", required=True, help="comma-separated values")
            p.add_argument("--workers", type=int, default=1)
        if name == "validate":
            p.add_argument("--quick", action="store_true", help="fewer random solver instances")
    parser.set_defaults(handlers=handlers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; 2 is reserved for failed validation
        return EXIT_DATA if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        overrides = {k: getattr(args, k, None) for k in asdict(cfg)}
        cfg = run_config_from_mapping(overrides, cfg)
        return args.handlers[args.command](cfg, args)
    except (DataError, FileNotFoundError, IsADirectoryError, ValueError, ConvergenceError) as exc:
        print(f"coldcharge: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
