"""Shared fixtures: a cached runner for bundled configs and the criterion summary."""
import copy
import json
import os
import time

import pytest

from radau_mpc.cli import build_problem
from radau_mpc.config import parse_config
from radau_mpc.mpc_loop import run

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(ROOT, "configs")

_CRITERIA = {}


def config_doc(name):
    with open(os.path.join(CONFIG_DIR, name + ".json"), encoding="utf-8") as fh:
        return json.load(fh)


def bundled_run_configs():
    """Names of bundled single-run configs (sweeps excluded)."""
    names = sorted(f[:-5] for f in os.listdir(CONFIG_DIR) if f.endswith(".json"))
    return [n for n in names if "sweep" not in config_doc(n)]


class Runner:
    """Runs configs once per session; overrides are merged section-wise."""

    def __init__(self):
        self._cache = {}

    def __call__(self, name, **sections):
        key = (name, json.dumps(sections, sort_keys=True))
        if key not in self._cache:
            doc = copy.deepcopy(config_doc(name))
            for sec, values in sections.items():
                doc.setdefault(sec, {}).update(values)
            cfg = parse_config(doc)
            problem, analytic, plant = build_problem(cfg)
            t = time.perf_counter()
            record = run(problem, cfg.mpc, cfg.mesh, cfg.solver, plant=plant)
            self._cache[key] = (record, problem, analytic, cfg, time.perf_counter() - t)
        return self._cache[key]


@pytest.fixture(scope="session")
def runner():
    return Runner()


@pytest.fixture
def criterion():
    """Call ``criterion(n, passed, detail)`` to log one acceptance line."""
    def record(n, passed, detail):
        _CRITERIA[n] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        passed, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
