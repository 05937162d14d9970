"""Receding-horizon loop: plan a window, solve, apply the first Ts, repeat.

Each iteration transcribes the window [t0 + k*Ts, min(tf, t0 + (k+p)*Ts)],
solves it from a warm start, holds the solved control at the window's first
free node for one sampling interval on the plant, and anchors the next
window at the simulated state.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .nlp_solver import SolverOptions, solve
from .ocp_model import scaling_from_bounds, validate
from .ode_sim import SimulationError, apply_iteration_controls
from .transcription import (MeshConfig, assemble_nlp, build_control_layout,
                            build_variable_layout, plan_window)


@dataclass(frozen=True)
class MpcConfig:
    """Sampling time Ts, prediction horizon p and control horizon m (in steps)."""

    Ts: float
    p: int
    m: int
    plot_flag: bool = False
    file_name: str = "result"

    def __post_init__(self):
        if not (isinstance(self.Ts, (int, float)) and math.isfinite(self.Ts) and self.Ts > 0):
            raise ValueError("Ts must be a positive real")
        for name in ("p", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.m > self.p:
            raise ValueError(f"control horizon m={self.m} exceeds prediction horizon p={self.p} (need m <= p)")

    def n_iter(self, problem):
        """Number of MPC iterations; rejects Ts that does not divide tf - t0."""
        span = problem.tf - problem.t0
        if self.Ts > span + 1e-9:
            raise ValueError(f"Ts={self.Ts} exceeds the horizon length {span}")
        n = round(span / self.Ts)
        if abs(n * self.Ts - span) > 1e-9:
            raise ValueError(f"Ts={self.Ts} does not divide tf - t0 = {span}")
        return int(n)


@dataclass(eq=False)
class RunRecord:
    """Everything a run produced.

    ``states`` come only from plant simulation; ``control_samples`` is the
    held control at each stored time (the last row repeats the final knot).
    """

    problem_name: str
    times: np.ndarray
    states: np.ndarray
    control_samples: np.ndarray
    knot_times: np.ndarray
    knot_values: np.ndarray
    per_iteration: list
    total_lagrange_cost: float
    mayer_cost: float
    complete: bool = True
    message: str = "ok"
    wall_time: float = 0.0
    plans: list = field(default_factory=list)
    cumulative_cost: np.ndarray = None

    @property
    def total_cost(self):
        return self.total_lagrange_cost + self.mayer_cost

    @property
    def applied_controls(self):
        return list(zip(self.knot_times.tolist(), self.knot_values.tolist()))

    @property
    def n_failed(self):
        return sum(1 for it in self.per_iteration if not it["success"])


# warm start -----------------------------------------------------------------

def _slot_times(layout):
    """Time stamp of every scaled decision slot, shape (dim,)."""
    t = np.empty(layout.dim + 1)
    nx = layout.state_index.shape[2]
    t[layout.state_index.reshape(-1)] = np.repeat(layout.state_times.reshape(-1), nx)
    nu = layout.free_control_index.shape[1]
    t[layout.free_control_index.reshape(-1)] = np.repeat(layout.control.free_times, nu)
    return t[:layout.dim]


def _channels(layout):
    """Per-slot channel code: i for state i, n_states + j for control j."""
    keys = np.empty(layout.dim + 1, dtype=int)
    nx = layout.state_index.shape[2]
    for i in range(nx):
        keys[layout.state_index[:, :, i].reshape(-1)] = i
    for j in range(layout.free_control_index.shape[1]):
        keys[layout.free_control_index[:, j]] = nx + j
    return keys[:layout.dim]


def ramp_guess(layout, t0, tf):
    """Every channel rises linearly from -1 at `t0` to +1 at `tf` in scaled units."""
    return -1.0 + 2.0 * (_slot_times(layout) - t0) / (tf - t0)


def warm_start(previous, layout_prev, layout_new, bounds, window=None):
    """Initial scaled decision vector for a new window.

    Parameters
    ----------
    previous : SolverResult or None
        Last window's result; a ramp is returned when it is absent or failed.
    layout_prev, layout_new : VariableLayout
    bounds : (lb, ub)
        Scaled bounds of the new NLP; the guess is clipped into them.
    window : WindowSpec
        New window, needed for the ramp end points.
    """
    lb, ub = bounds
    t_new = _slot_times(layout_new)
    if window is not None:
        t0, tf = window.t0_iter, window.tf_iter
    else:
        t0, tf = float(t_new.min()), float(t_new.max())
    if previous is None or not previous.success or layout_prev is None:
        return np.clip(ramp_guess(layout_new, t0, tf), lb, ub)

    z_old = np.asarray(previous.x_star, dtype=float)
    t_old = _slot_times(layout_prev)
    keys_old = _channels(layout_prev)
    keys_new = _channels(layout_new)
    z = np.empty(layout_new.dim)
    for key in np.unique(keys_new):
        sel_new = np.flatnonzero(keys_new == key)
        sel_old = np.flatnonzero(keys_old == key)
        if sel_old.size == 0:
            z[sel_new] = -1.0 + 2.0 * (t_new[sel_new] - t0) / (tf - t0)
            continue
        order = np.argsort(t_old[sel_old], kind="stable")
        to = t_old[sel_old][order]
        vo = z_old[sel_old][order]
        pos = np.searchsorted(to, t_new[sel_new] + 1e-9, side="right") - 1
        z[sel_new] = vo[np.clip(pos, 0, len(to) - 1)]
    return np.clip(z, lb, ub)


# costs ------------------------------------------------------------------------

def lagrange_increments(record, problem):
    """Per stored interval trapezoid contributions of the Lagrange cost."""
    t = record.times
    if len(t) < 2 or problem.lagrange_cost is None:
        return np.zeros(max(len(t) - 1, 0))
    X = record.states
    U_left = record.control_samples[:-1]
    La = problem.eval_lagrange(t[:-1], X[:-1], U_left)
    Lb = problem.eval_lagrange(t[1:], X[1:], U_left)
    return 0.5 * (t[1:] - t[:-1]) * (La + Lb)


def accumulate_costs(record, problem):
    """Trapezoid-rule Lagrange cost over the stored grid plus the Mayer cost.

    Each stored interval uses the control held over it, so the integrand is
    evaluated with the knot value rather than the next interval's value.
    Returns ``(lagrange_total, mayer_total)``.
    """
    t = record.times
    if len(t) < 2:
        return 0.0, 0.0
    lagr = float(np.sum(lagrange_increments(record, problem)))
    mayer = problem.eval_mayer(t[0], record.states[0], t[-1], record.states[-1])
    return lagr, float(mayer)


# main loop -------------------------------------------------------------------

def _knot_control(nlp, z, problem):
    _, U = nlp.decode(z)
    return np.clip(U[0, 0], problem.u_lb, problem.u_ub)


def run(problem, mpc_config, mesh_config, solver_options=None, plant=None, output_dir=None,
        config_echo=None):
    """Run the MPC loop over [t0, tf] and return a `RunRecord`.

    A failed window solve does not stop the run: the iteration is flagged, a
    fallback control is applied (see `_fallback_plan`) and the next window
    starts from a ramp. A simulation failure stops the run and returns a partial
    record with ``complete=False``.
    """
    solver_options = solver_options or SolverOptions()
    errors = [d for d in validate(problem) if d.severity == "error"]
    if errors:
        raise ValueError("invalid problem: " + "; ".join(str(d) for d in errors))
    if not isinstance(mesh_config, MeshConfig):
        raise TypeError("mesh_config must be a MeshConfig")
    n_iter = mpc_config.n_iter(problem)
    scaling = scaling_from_bounds(problem)
    Ts = float(mpc_config.Ts)
    n_h = int(mesh_config.n_h_sol)

    start_wall = time.perf_counter()
    xi = np.array(problem.initial_state, dtype=float)
    times = [np.array([problem.t0])]
    states = [xi[None, :]]
    controls = []
    knot_t, knot_u = [], []
    per_iter = []
    plans = []
    prev_result, prev_layout = None, None
    last_good = None
    complete, message = True, "ok"

    for k in range(n_iter):
        t_iter = time.perf_counter()
        window, segments = plan_window(problem, mpc_config, mesh_config, k, xi)
        ctrl = build_control_layout(window, segments, Ts)
        layout = build_variable_layout(problem, scaling, segments, ctrl)
        nlp = assemble_nlp(problem, scaling, window, segments, layout)
        shift = nlp.meta.get("anchor_path_shift")
        notes = [f"start state violates the path constraint by {shift}; anchor rows shifted"] if shift else []
        z0 = warm_start(prev_result, prev_layout, layout, (nlp.lb, nlp.ub), window)
        res = solve(nlp, z0, solver_options)
        z_use, fallback = _fallback_plan(res, z0, last_good, layout, nlp, solver_options.feas_tol, window)
        if fallback:
            notes.append(fallback)
        u_apply = _knot_control(nlp, z_use, problem)
        if mpc_config.plot_flag:
            Xp, Up = nlp.decode(z_use)
            plans.append({"iter_index": k, "state_times": layout.state_times.tolist(),
                          "states": Xp.tolist(), "control_times": layout.coll_times.tolist(),
                          "controls": Up.tolist()})
        try:
            sims = apply_iteration_controls(problem, window, [(window.t0_iter, u_apply)], Ts, n_h,
                                            plant=plant, xi_start=xi)
        except SimulationError as exc:
            complete, message = False, f"simulation failed in iteration {k}: {exc}"
            per_iter.append(_iter_entry(k, window, segments, layout, res, u_apply, t_iter, exc, notes))
            break
        for sim in sims:
            times.append(sim.times[1:])
            states.append(sim.states[1:])
            controls.append(np.repeat(sim.applied_control[None, :], len(sim.times) - 1, axis=0))
        knot_t.append(window.t0_iter)
        knot_u.append(u_apply)
        xi = np.array(sims[-1].terminal_state)
        per_iter.append(_iter_entry(k, window, segments, layout, res, u_apply, t_iter, None, notes))
        prev_result, prev_layout = (res, layout) if res.success else (None, None)
        if res.success:
            last_good = (res, layout)

    controls.append(controls[-1][-1:] if controls else (0.5 * (problem.u_lb + problem.u_ub))[None, :])
    record = RunRecord(
        problem_name=problem.name,
        times=np.concatenate(times),
        states=np.vstack(states),
        control_samples=np.vstack(controls),
        knot_times=np.array(knot_t),
        knot_values=np.array(knot_u).reshape(len(knot_u), problem.n_controls),
        per_iteration=per_iter,
        total_lagrange_cost=0.0,
        mayer_cost=0.0,
        complete=complete,
        message=message,
        plans=plans,
    )
    record.total_lagrange_cost, record.mayer_cost = accumulate_costs(record, problem)
    record.cumulative_cost = np.concatenate([[0.0], np.cumsum(lagrange_increments(record, problem))])
    record.wall_time = time.perf_counter() - start_wall
    if output_dir is not None:
        from .results import write_run
        write_run(record, output_dir, mpc_config.file_name, config_echo=config_echo,
                  plot=mpc_config.plot_flag)
    return record


def _fallback_plan(res, z0, last_good, layout, nlp, feas_tol, window):
    """Decision vector whose first control is applied, plus a note.

    On success this is the solution. After a failure, prefer the solver's best
    iterate when it is feasible, then the last successful plan shifted to the
    current window, and only then the warm-start guess. Applying a ramp guess
    would put the first control on its lower bound.
    """
    if res.success:
        return res.x_star, None
    if res.max_eq_violation <= feas_tol and res.min_ineq_margin >= -feas_tol:
        return res.x_star, "solve failed; applied the feasible best iterate"
    if last_good is not None:
        good_res, good_layout = last_good
        z = warm_start(good_res, good_layout, layout, (nlp.lb, nlp.ub), window)
        return z, "solve failed; applied the last successful plan shifted to this window"
    return z0, "solve failed; applied the warm-start guess"


def _iter_entry(k, window, segments, layout, res, u_apply, t_start, error=None, extra_notes=()):
    entry = {
        "iter_index": k,
        "t0_iter": window.t0_iter,
        "tf_iter": window.tf_iter,
        "tfc_iter": window.tfc_iter,
        "n_segments": len(segments),
        "n_free_controls": layout.control.n_free,
        "dim": layout.dim,
        "success": bool(res.success),
        "objective_value": float(res.objective_value),
        "max_eq_violation": float(res.max_eq_violation),
        "solver_iterations": int(res.iterations_used),
        "solver_message": res.message,
        "applied_control": np.asarray(u_apply, dtype=float).tolist(),
        "notes": list(window.notes) + list(extra_notes),
        "wall_time": time.perf_counter() - t_start,
    }
    if error is not None:
        entry["error"] = str(error)
    return entry
