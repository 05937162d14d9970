"""Plant simulation under zero-order-held controls.

Reported trajectories always come from here, never from collocation values,
so they satisfy the plant dynamics up to the integrator error regardless of
how well the NLP converged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SimulationError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, t_last, xi_last, message=""):
        self.t_last = float(t_last)
        self.xi_last = np.array(xi_last, dtype=float)
        super().__init__(message or f"non-finite state after t={self.t_last:.9g}; "
                                    f"last finite state {self.xi_last.tolist()}")


@dataclass(frozen=True, eq=False)
class SimSegmentResult:
    times: np.ndarray
    states: np.ndarray
    applied_control: np.ndarray
    terminal_state: np.ndarray


def rk4_substeps(n_substeps, span, max_step):
    """Smallest K such that span / (n_substeps * K) <= max_step."""
    if max_step is None or max_step <= 0:
        return 1
    return max(1, math.ceil(span / (n_substeps * max_step) - 1e-9))


def simulate_hold(f, t_a, t_b, xi_a, u_hold, n_substeps, max_step=None):
    """Integrate xi' = f(t, xi, u_hold) on [t_a, t_b] with fixed-step RK4.

    Parameters
    ----------
    f : callable
        ``f(t, xi, u) -> dxi`` on 1-D arrays.
    n_substeps : int
        Number of stored output intervals; times are
        ``t_a + i * (t_b - t_a) / n_substeps`` with the last set to `t_b`.
    max_step : float, optional
        Upper bound on the RK4 step; each output interval is split into the
        smallest number of equal steps that respects it.
    """
    if not t_b > t_a:
        raise ValueError(f"need t_b > t_a, got [{t_a}, {t_b}]")
    n = int(n_substeps)
    span = t_b - t_a
    dt_out = span / n
    K = rk4_substeps(n, span, max_step)
    h = dt_out / K
    u = np.array(u_hold, dtype=float).reshape(-1)
    times = t_a + dt_out * np.arange(n + 1)
    times[-1] = t_b
    xi = np.array(xi_a, dtype=float).reshape(-1)
    states = np.empty((n + 1, xi.size))
    states[0] = xi
    for i in range(n):
        t_i = times[i]
        for j in range(K):
            t = t_i + j * h
            k1 = f(t, xi, u)
            k2 = f(t + 0.5 * h, xi + 0.5 * h * k1, u)
            k3 = f(t + 0.5 * h, xi + 0.5 * h * k2, u)
            k4 = f(t + h, xi + h * k3, u)
            nxt = xi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(nxt)):
                raise SimulationError(t, xi)
            xi = nxt
        states[i + 1] = xi
    states.setflags(write=False)
    times.setflags(write=False)
    u.setflags(write=False)
    return SimSegmentResult(times, states, u, states[-1])


def plant_rhs(problem):
    """Single-point right-hand side ``f(t, xi, u)`` built from a problem's dynamics."""
    def f(t, xi, u):
        return problem.eval_dynamics(np.array([t]), xi[None, :], u[None, :])[0]
    return f


def interval_end(problem, t_a, Ts):
    """End of the sampling interval starting at `t_a`, snapped to tf."""
    t_end = min(t_a + Ts, problem.tf)
    if problem.tf - t_end <= 1e-9:
        t_end = problem.tf
    return t_end


def apply_iteration_controls(problem, window, control_schedule, Ts, n_h_sol, plant=None,
                             xi_start=None):
    """Simulate the first sampling interval of a window.

    Parameters
    ----------
    control_schedule : sequence of (knot_time, control)
        Held controls; only knots inside [t0_iter, t0_iter + Ts) are used,
        each held until the next knot or the interval end.
    plant : OcpProblem, optional
        Problem whose dynamics stand in for the true plant; defaults to
        `problem` itself.
    xi_start : array, optional
        State to integrate from; defaults to ``window.xi_start``. Pass the
        unclipped plant state so reported trajectories chain exactly.

    Returns
    -------
    list of SimSegmentResult
        One entry per held piece; the last one's terminal state starts the
        next window.
    """
    f = plant_rhs(plant if plant is not None else problem)
    t_a = window.t0_iter
    t_end = interval_end(problem, t_a, Ts)
    knots = [(float(t), np.asarray(u, dtype=float)) for t, u in control_schedule
             if t_a - 1e-9 <= t < t_end - 1e-9]
    if not knots:
        raise ValueError(f"no control knot in [{t_a}, {t_end})")
    knots[0] = (t_a, knots[0][1])
    max_step = Ts / (10.0 * n_h_sol)
    out = []
    xi = window.xi_start if xi_start is None else np.asarray(xi_start, dtype=float)
    for i, (t_k, u_k) in enumerate(knots):
        t_next = knots[i + 1][0] if i + 1 < len(knots) else t_end
        pieces = max(1, round(n_h_sol * (t_next - t_k) / Ts))
        seg = simulate_hold(f, t_k, t_next, xi, u_k, pieces, max_step)
        out.append(seg)
        xi = seg.terminal_state
    return out


def replay_staircase(problem, knot_times, knot_values, Ts, n_h_sol, xi0=None, plant=None):
    """Re-simulate a held-control staircase from the initial state.

    Follows the same interval and step rules as the MPC loop, so replaying a
    run's applied controls reproduces its stored states exactly. Returns
    ``(times, states)`` on the loop's stored grid.
    """
    f = plant_rhs(plant if plant is not None else problem)
    xi = np.array(problem.initial_state if xi0 is None else xi0, dtype=float)
    times, states = [np.array([problem.t0])], [xi[None, :]]
    max_step = Ts / (10.0 * n_h_sol)
    for t_a, u in zip(knot_times, knot_values):
        t_b = interval_end(problem, float(t_a), Ts)
        pieces = max(1, round(n_h_sol * (t_b - t_a) / Ts))
        seg = simulate_hold(f, float(t_a), t_b, xi, u, pieces, max_step)
        times.append(seg.times[1:])
        states.append(seg.states[1:])
        xi = seg.terminal_state
    return np.concatenate(times), np.vstack(states)
