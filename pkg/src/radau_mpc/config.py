"""JSON run configuration.

A config document has one section per building block::

    {
      "schema_version": 1,
      "functions":       {"problem": "ex1"},
      "model_data":      {"x0": -0.5},                  # problem parameter overrides
      "plant_model_data": {},                           # optional plant-only overrides
      "mpc_parameters":  {"Ts": 0.2, "p": 10, "m": 10, "plot_flag": false, "file_name": "ex1"},
      "mesh_parameters": {"dt_segment": 0.5, "nodes_per_segment": 5, "n_h_sol": 10},
      "nlp_options":     {"max_iter": 100, "feas_tol": 1e-6, "opt_tol": 1e-6,
                          "fd_step": 1e-7, "display": false},
      "sweep":           {"Ts": [...], "mode": "p-sweep", "t_p": [...]}   # sweep only
    }

`parse_config` collects every field-level problem before raising, so a bad
file reports all of its errors at once.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

from .mpc_loop import MpcConfig
from .nlp_solver import SolverOptions
from .problems import REGISTRY
from .transcription import MeshConfig

SCHEMA_VERSION = 1

SECTIONS = ("schema_version", "functions", "model_data", "plant_model_data", "mpc_parameters",
            "mesh_parameters", "nlp_options", "sweep", "output_dir")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class SweepSpec:
    Ts: tuple
    mode: str  # "p-sweep" (m = p) or "m-sweep" (fixed p)
    axis_name: str  # one of "p", "m", "t_p", "t_m"
    axis_values: tuple
    p: int = None
    t_p: float = None


@dataclass(frozen=True)
class RunConfig:
    problem: str
    model_data: dict
    mpc: MpcConfig
    mesh: MeshConfig
    solver: SolverOptions
    plant_model_data: dict = None
    sweep: SweepSpec = None
    output_dir: str = None
    raw: dict = field(default=None, compare=False, repr=False)

    def to_dict(self):
        """Config document that `parse_config` maps back to an equal RunConfig."""
        doc = {
            "schema_version": SCHEMA_VERSION,
            "functions": {"problem": self.problem},
            "model_data": copy.deepcopy(self.model_data),
            "mpc_parameters": asdict(self.mpc),
            "mesh_parameters": asdict(self.mesh),
            "nlp_options": asdict(self.solver),
        }
        if self.plant_model_data is not None:
            doc["plant_model_data"] = copy.deepcopy(self.plant_model_data)
        if self.sweep is not None:
            sw = {"Ts": list(self.sweep.Ts), "mode": self.sweep.mode,
                  self.sweep.axis_name: list(self.sweep.axis_values)}
            if self.sweep.p is not None:
                sw["p"] = self.sweep.p
            if self.sweep.t_p is not None:
                sw["t_p"] = self.sweep.t_p
            doc["sweep"] = sw
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        return doc


def _section(doc, name, errors, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            errors.append(f"{name}: missing section")
        return {}
    if not isinstance(sec, dict):
        errors.append(f"{name}: must be an object")
        return {}
    return sec


def _build(cls, sec, name, errors, allowed):
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        errors.append(f"{name}: unknown field(s) {unknown}")
        return None
    try:
        return cls(**sec)
    except (TypeError, ValueError) as exc:
        errors.append(f"{name}: {exc}")
        return None


def parse_config(doc):
    """Validate a config mapping and return a `RunConfig`; raises `ConfigError`."""
    errors = []
    if not isinstance(doc, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        errors.append(f"config: unknown section(s) {unknown}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    functions = _section(doc, "functions", errors)
    problem = functions.get("problem")
    if problem is None and "functions" in doc:
        errors.append("functions.problem: missing problem name")
    elif problem is not None and problem not in REGISTRY:
        errors.append(f"functions.problem: unknown problem {problem!r}; registered: {sorted(REGISTRY)}")

    model_data = _section(doc, "model_data", errors, required=False)
    plant = doc.get("plant_model_data")
    if plant is not None and not isinstance(plant, dict):
        errors.append("plant_model_data: must be an object")

    mpc_sec = _section(doc, "mpc_parameters", errors)
    mpc = _build(MpcConfig, mpc_sec, "mpc_parameters", errors,
                 ("Ts", "p", "m", "plot_flag", "file_name")) if mpc_sec else None
    mesh_sec = _section(doc, "mesh_parameters", errors)
    mesh = _build(MeshConfig, mesh_sec, "mesh_parameters", errors,
                  ("dt_segment", "nodes_per_segment", "n_h_sol")) if mesh_sec else None
    nlp_sec = _section(doc, "nlp_options", errors, required=False)
    solver = _build(SolverOptions, nlp_sec, "nlp_options", errors,
                    ("max_iter", "feas_tol", "opt_tol", "fd_step", "display"))

    sweep = None
    if "sweep" in doc:
        sweep = _parse_sweep(_section(doc, "sweep", errors), errors)

    if problem in REGISTRY and not errors:
        prob = None
        try:
            prob, _ = REGISTRY[problem](**model_data)
        except (TypeError, ValueError) as exc:
            errors.append(f"model_data: {exc}")
        if plant is not None:
            try:
                REGISTRY[problem](**{**model_data, **plant})
            except (TypeError, ValueError) as exc:
                errors.append(f"plant_model_data: {exc}")
        if prob is not None and mpc is not None and sweep is None:
            try:
                mpc.n_iter(prob)
            except ValueError as exc:
                errors.append(f"mpc_parameters: {exc}")

    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        errors.append("output_dir: must be a string")
    if errors:
        raise ConfigError(errors)
    return RunConfig(problem, dict(model_data), mpc, mesh, solver,
                     plant_model_data=None if plant is None else dict(plant),
                     sweep=sweep, output_dir=output_dir, raw=doc)


def _parse_sweep(sec, errors):
    Ts = sec.get("Ts")
    if not isinstance(Ts, list) or not Ts or not all(isinstance(v, (int, float)) and v > 0 for v in Ts):
        errors.append("sweep.Ts: need a nonempty list of positive numbers")
        return None
    mode = sec.get("mode", "p-sweep")
    if mode not in ("p-sweep", "m-sweep"):
        errors.append(f"sweep.mode: expected 'p-sweep' or 'm-sweep', got {mode!r}")
        return None
    candidates = ("p", "t_p") if mode == "p-sweep" else ("m", "t_m")
    axis = [a for a in candidates if isinstance(sec.get(a), list)]
    if len(axis) != 1:
        errors.append(f"sweep: {mode} needs exactly one list among {list(candidates)}")
        return None
    values = sec[axis[0]]
    if not values or not all(isinstance(v, (int, float)) and v > 0 for v in values):
        errors.append(f"sweep.{axis[0]}: need a nonempty list of positive numbers")
        return None
    p = sec.get("p") if mode == "m-sweep" else None
    t_p = sec.get("t_p") if mode == "m-sweep" else None
    if mode == "m-sweep" and (p is None) == (t_p is None):
        errors.append("sweep: m-sweep needs a fixed horizon, either 'p' (steps) or 't_p' (seconds)")
        return None
    return SweepSpec(tuple(Ts), mode, axis[0], tuple(values), p=p, t_p=t_p)


def load_config(path):
    """Read and parse a config file; JSON syntax errors become `ConfigError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return parse_config(doc)
