"""Command-line front end: ``run``, ``sweep`` and ``compare`` subcommands.

Exit status: 0 on success, 2 on configuration errors, 3 on runtime failure
(a partial result is still written when one exists).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import ConfigError, load_config, parse_config
from .mpc_loop import MpcConfig, run
from .problems import REGISTRY
from .results import write_json

OUT_ENV = "RADAU_MPC_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def output_dir(cli_out, cfg):
    return cli_out or cfg.output_dir or os.environ.get(OUT_ENV) or "results"


def build_problem(cfg):
    """(problem, analytic, plant) for a parsed config."""
    problem, analytic = REGISTRY[cfg.problem](**cfg.model_data)
    plant = None
    if cfg.plant_model_data:
        plant, _ = REGISTRY[cfg.problem](**{**cfg.model_data, **cfg.plant_model_data})
    return problem, analytic, plant


def execute(cfg, out_dir):
    problem, analytic, plant = build_problem(cfg)
    record = run(problem, cfg.mpc, cfg.mesh, cfg.solver, plant=plant, output_dir=out_dir,
                 config_echo=cfg.to_dict())
    return record, problem, analytic


def _report_config_error(exc):
    for msg in exc.errors:
        print(f"config error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(config_path, out=None):
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        return _report_config_error(exc)
    out_dir = output_dir(out, cfg)
    try:
        record, _, _ = execute(cfg, out_dir)
    except Exception as exc:  # runtime failures get a non-config exit status
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{cfg.problem}: total cost {record.total_cost!r} over {len(record.per_iteration)} "
          f"iterations ({record.n_failed} failed solves); results in {out_dir}")
    return EXIT_OK if record.complete else EXIT_RUNTIME


# compare -----------------------------------------------------------------------

def compare_metrics(record, problem, analytic):
    """Control and objective errors of an MPC run against an analytic solution."""
    t = record.times
    u_star = np.asarray(analytic.u_star(t), dtype=float).reshape(len(t), -1)
    err = record.control_samples - u_star
    dt = np.diff(t)

    def l2(y):
        # held (left) values on each stored interval
        return float(np.sqrt(np.sum(np.sum(y[:-1] ** 2, axis=1) * dt)))

    out = {
        "max_control_error": float(np.max(np.abs(err))),
        "knot_control_error": float(np.max(np.abs(
            record.knot_values - np.asarray(analytic.u_star(record.knot_times)).reshape(record.knot_values.shape)))),
        "l2_control_error": l2(err),
        "l2_control_norm": l2(u_star),
        "objective_mpc": float(record.total_cost),
        "objective_analytic": float(analytic.objective_star),
        "objective_gap": float(record.total_cost - analytic.objective_star),
    }
    out["relative_l2_control_error"] = out["l2_control_error"] / max(out["l2_control_norm"], 1e-300)
    out["relative_objective_gap"] = out["objective_gap"] / abs(analytic.objective_star) \
        if analytic.objective_star != 0 else float("inf")
    if analytic.terminal_state is not None:
        out["terminal_state_error"] = float(np.max(np.abs(record.states[-1] - analytic.terminal_state)))
    out["validity_note"] = analytic.validity_note
    return out


def cmd_compare(config_path, out=None):
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        return _report_config_error(exc)
    _, analytic, _ = build_problem(cfg)
    if analytic is None:
        print(f"config error: problem {cfg.problem!r} with these parameters has no analytic solution",
              file=sys.stderr)
        return EXIT_CONFIG
    out_dir = output_dir(out, cfg)
    try:
        record, problem, analytic = execute(cfg, out_dir)
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    metrics = compare_metrics(record, problem, analytic)
    path = os.path.join(out_dir, f"{cfg.mpc.file_name}_compare.json")
    write_json(path, metrics)
    print(f"{cfg.problem}: objective gap {metrics['objective_gap']!r} "
          f"(relative {metrics['relative_objective_gap']:.3%}); summary in {path}")
    return EXIT_OK if record.complete else EXIT_RUNTIME


# sweep -------------------------------------------------------------------------

def _steps(value, Ts, is_time):
    """Horizon in steps; None when a horizon time is not a multiple of Ts."""
    if not is_time:
        return int(value) if float(value).is_integer() else None
    n = round(value / Ts)
    return n if n >= 1 and abs(n * Ts - value) <= 1e-9 else None


def sweep_cells(cfg):
    """Cell list ``(i, j, Ts, p, m, status)``; status is None for runnable cells."""
    sw = cfg.sweep
    problem, _, _ = build_problem(cfg)
    is_time = sw.axis_name.startswith("t_")
    cells = []
    for i, Ts in enumerate(sw.Ts):
        for j, v in enumerate(sw.axis_values):
            status = None
            p = m = None
            try:
                MpcConfig(float(Ts), 1, 1).n_iter(problem)
            except ValueError as exc:
                status = f"skipped: {exc}"
            if status is None:
                h = _steps(v, Ts, is_time)
                if h is None:
                    status = f"skipped: {sw.axis_name}={v} is not a whole number of Ts={Ts} steps"
                elif sw.mode == "p-sweep":
                    p = m = h
                else:
                    m = h
                    p = sw.p if sw.p is not None else _steps(sw.t_p, Ts, True)
                    if p is None:
                        status = f"skipped: t_p={sw.t_p} is not a whole number of Ts={Ts} steps"
                    elif m > p:
                        status = f"rejected: control horizon m={m} exceeds prediction horizon p={p}"
            cells.append((i, j, float(Ts), p, m, status))
    return cells


def _run_cell(args):
    doc, out_dir = args
    try:
        cfg = parse_config(doc)
        record, _, _ = execute(cfg, out_dir)
    except Exception as exc:
        return {"status": "failed", "error": str(exc)}
    return {
        "status": "ok" if record.complete else "failed",
        "total_cost": float(record.total_cost),
        "n_failed_solves": int(record.n_failed),
        "wall_time": float(record.wall_time),
        "message": record.message,
    }


def cmd_sweep(config_path, out=None, workers=1):
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        return _report_config_error(exc)
    if cfg.sweep is None:
        print("config error: sweep: missing section", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = output_dir(out, cfg)
    os.makedirs(out_dir, exist_ok=True)
    cells = sweep_cells(cfg)
    jobs, index = [], []
    base = cfg.to_dict()
    base.pop("sweep")
    for i, j, Ts, p, m, status in cells:
        if status is not None:
            continue
        doc = json.loads(json.dumps(base))
        doc["mpc_parameters"].update(Ts=Ts, p=p, m=m, file_name="result")
        jobs.append((doc, os.path.join(out_dir, f"cell_{i}_{j}")))
        index.append((i, j))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(job) for job in jobs]
    by_cell = dict(zip(index, outcomes))

    sw = cfg.sweep
    diagnostics = []
    matrix = [[None] * len(sw.axis_values) for _ in sw.Ts]
    for i, j, Ts, p, m, status in cells:
        entry = {"Ts": Ts, sw.axis_name: sw.axis_values[j], "p": p, "m": m}
        if status is not None:
            entry["status"] = status.split(":")[0]
            entry["reason"] = status
            matrix[i][j] = entry["status"]
        else:
            entry.update(by_cell[(i, j)])
            matrix[i][j] = repr(entry["total_cost"]) if entry["status"] == "ok" else "failed"
        diagnostics.append(entry)
    with open(os.path.join(out_dir, "sweep_objective.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"Ts\\{sw.axis_name}"] + [repr(float(v)) for v in sw.axis_values])
        for i, Ts in enumerate(sw.Ts):
            w.writerow([repr(float(Ts))] + matrix[i])
    write_json(os.path.join(out_dir, "sweep_diagnostics.json"),
               {"mode": sw.mode, "axis": sw.axis_name, "cells": diagnostics})
    n_ok = sum(1 for d in diagnostics if d.get("status") == "ok")
    print(f"sweep: {n_ok} of {len(diagnostics)} cells completed; results in {out_dir}")
    return EXIT_OK if n_ok else EXIT_RUNTIME


def main(argv=None):
    parser = argparse.ArgumentParser(prog="radau-mpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run one configured MPC problem"),
                            ("sweep", "run a grid of Ts and horizon settings"),
                            ("compare", "run MPC and compare with the analytic solution")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the JSON config")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default: config output_dir, ${OUT_ENV}, ./results)")
        sp.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
        sp.add_argument("--seed", type=int, default=None,
                        help="reserved; runs are deterministic and ignore it")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "compare":
        return cmd_compare(args.config, args.out)
    return cmd_sweep(args.config, args.out, max(1, args.workers))


if __name__ == "__main__":
    sys.exit(main())
