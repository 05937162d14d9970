"""Result files: one JSON document per run plus a CSV mirror of the samples.

Both formats print floats with ``repr`` (the shortest string that parses
back to the same double), so JSON and CSV agree bit for bit. Wall-clock
timings live only under keys named ``wall_time``.

JSON layout (``schema_version`` 1)::

    schema_version, problem, complete, message, config,
    summary:          total_lagrange_cost, mayer_cost, total_cost, n_iterations, n_failed
    applied_controls: knot_times, values
    per_iteration:    list of per-window diagnostics
    samples:          time, states, controls, cumulative_lagrange_cost
    timing:           wall_time
"""
from __future__ import annotations

import json
import os

import numpy as np

SCHEMA_VERSION = 1


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def record_to_dict(record, config_echo=None):
    return {
        "schema_version": SCHEMA_VERSION,
        "problem": record.problem_name,
        "complete": bool(record.complete),
        "message": record.message,
        "config": config_echo,
        "summary": {
            "total_lagrange_cost": float(record.total_lagrange_cost),
            "mayer_cost": float(record.mayer_cost),
            "total_cost": float(record.total_cost),
            "n_iterations": len(record.per_iteration),
            "n_failed": int(record.n_failed),
        },
        "applied_controls": {
            "knot_times": _floats(record.knot_times),
            "values": _floats(record.knot_values),
        },
        "per_iteration": record.per_iteration,
        "samples": {
            "time": _floats(record.times),
            "states": _floats(record.states),
            "controls": _floats(record.control_samples),
            "cumulative_lagrange_cost": _floats(record.cumulative_cost),
        },
        "timing": {"wall_time": float(record.wall_time)},
    }


def strip_wall_times(obj):
    """Copy of a result document without any ``wall_time`` entries."""
    if isinstance(obj, dict):
        return {k: strip_wall_times(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [strip_wall_times(v) for v in obj]
    return obj


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def samples_csv(record):
    nx = record.states.shape[1]
    nu = record.control_samples.shape[1]
    header = ["time"] + [f"xi{i + 1}" for i in range(nx)] + [f"u{j + 1}" for j in range(nu)]
    header.append("cumulative_lagrange_cost")
    lines = [",".join(header)]
    for k in range(len(record.times)):
        row = [record.times[k], *record.states[k], *record.control_samples[k], record.cumulative_cost[k]]
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_run(record, output_dir, file_name="result", config_echo=None, plot=False):
    """Write ``<file_name>.json`` and ``<file_name>.csv`` (plus plots when `plot`)."""
    os.makedirs(output_dir, exist_ok=True)
    base = os.path.join(output_dir, file_name)
    write_json(base + ".json", record_to_dict(record, config_echo))
    with open(base + ".csv", "w", encoding="utf-8") as fh:
        fh.write(samples_csv(record))
    written = [base + ".json", base + ".csv"]
    if plot:
        written += write_plots(record, output_dir, file_name)
    return written


def write_plots(record, output_dir, file_name):
    from .svg import line_plot

    paths = []
    plan_dir = os.path.join(output_dir, f"{file_name}_plans")
    os.makedirs(plan_dir, exist_ok=True)
    for plan in record.plans:
        p = os.path.join(plan_dir, f"iter_{plan['iter_index']:04d}.json")
        write_json(p, plan)
        paths.append(p)
    t = record.times
    for i in range(record.states.shape[1]):
        p = os.path.join(output_dir, f"{file_name}_xi{i + 1}.svg")
        line_plot(p, [(t, record.states[:, i], f"xi{i + 1}")], title=f"state xi{i + 1}",
                  xlabel="t [s]", ylabel=f"xi{i + 1}")
        paths.append(p)
    for j in range(record.control_samples.shape[1]):
        p = os.path.join(output_dir, f"{file_name}_u{j + 1}.svg")
        line_plot(p, [(t, record.control_samples[:, j], f"u{j + 1}")], title=f"applied control u{j + 1}",
                  xlabel="t [s]", ylabel=f"u{j + 1}", step=True)
        paths.append(p)
    p = os.path.join(output_dir, f"{file_name}_cost.svg")
    line_plot(p, [(t, record.cumulative_cost, "cumulative Lagrange cost")], title="cumulative cost",
              xlabel="t [s]", ylabel="cost")
    paths.append(p)
    return paths
