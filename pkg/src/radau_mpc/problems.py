"""Benchmark problems with analytic optimal controls where they exist.

Each factory returns ``(problem, analytic)`` where ``analytic`` is an
`AnalyticSolution` or None. Factories accept keyword overrides of their
parameters so configs can reshape the problem without new code. Analytic
objectives are recomputed by quadrature on every call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .ocp_model import Diagnostic, OcpProblem

QUAD_POINTS = 100_000


@dataclass(frozen=True, eq=False)
class AnalyticSolution:
    u_star: Callable  # t (K,) -> (K, n_controls)
    objective_star: float
    validity_note: str = ""
    terminal_state: Optional[np.ndarray] = None


def sat(x):
    return np.clip(x, -1.0, 1.0)


def _trapezoid(fun, t0, tf, n=QUAD_POINTS):
    t = np.linspace(t0, tf, n + 1)
    y = fun(t)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def _half_u_squared(t, xi, u, data):
    return 0.5 * u[:, 0] ** 2


def _reject_unknown(kwargs, allowed, name):
    unknown = sorted(set(kwargs) - set(allowed))
    if unknown:
        raise ValueError(f"{name}: unknown parameter(s) {unknown}; allowed {sorted(allowed)}")


# Example 1: forced harmonic oscillator ---------------------------------------

EX1_DEFAULTS = dict(x0=-0.5, v0=1.0, tf=2.0, state_bound=2.0, control_bound=10.0)


def _ex1_dynamics(t, xi, u, data):
    return np.stack([xi[:, 1], -xi[:, 0] + u[:, 0]], axis=1)


def ex1_control(t, x0, v0, tf):
    """Minimum-energy control steering the oscillator from (x0, v0) to rest at tf."""
    t = np.asarray(t, dtype=float)
    pref = -2.0 / (tf ** 2 - math.sin(tf) ** 2)
    a = np.sin(tf - t) * math.sin(tf) - tf * np.sin(t)
    b = -np.cos(tf - t) * math.sin(tf) + tf * np.cos(t)
    return pref * (x0 * a + v0 * b)


def example1(**overrides):
    """Oscillator xi' = [[0, 1], [-1, 0]] xi + [0, 1] u, cost 1/2 int u^2, rest at tf."""
    _reject_unknown(overrides, EX1_DEFAULTS, "ex1")
    P = {**EX1_DEFAULTS, **overrides}
    x0, v0, tf = float(P["x0"]), float(P["v0"]), float(P["tf"])
    if not tf > 0 or abs(tf ** 2 - math.sin(tf) ** 2) < 1e-12:
        raise ValueError(f"ex1: tf={tf} makes tf^2 - sin^2(tf) vanish")
    sb, cb = float(P["state_bound"]), float(P["control_bound"])
    problem = OcpProblem(
        n_states=2, n_controls=1, t0=0.0, tf=tf,
        dynamics=_ex1_dynamics,
        xi_lb=[-sb, -sb], xi_ub=[sb, sb], u_lb=[-cb], u_ub=[cb],
        lagrange_cost=_half_u_squared,
        xi_t0=[x0, v0], xi_tf=[0.0, 0.0], flag_xi0=True, flag_xif=True,
        user_data=dict(P), name="ex1",
    )
    J = _trapezoid(lambda t: 0.5 * ex1_control(t, x0, v0, tf) ** 2, 0.0, tf)
    analytic = AnalyticSolution(
        u_star=lambda t: ex1_control(t, x0, v0, tf).reshape(-1, 1),
        objective_star=J,
        validity_note="closed-form minimum-energy control; exact for any tf with tf^2 != sin^2(tf)",
        terminal_state=np.zeros(2),
    )
    return problem, analytic


# Example 2: double integrator with a state bound ------------------------------

EX2_DEFAULTS = dict(l=1.0 / 9.0, v0=1.0, xf=0.0, vf=-1.0, tf=1.0,
                    velocity_bound=2.0, control_bound=20.0)


def _ex2_dynamics(t, xi, u, data):
    return np.stack([xi[:, 1], u[:, 0]], axis=1)


def _ex2_path(t, xi, u, data):
    return (data["l"] - xi[:, 0])[:, None]


def ex2_control(t, l):
    """Three-arc optimal control for the bounded double integrator (tf = 1)."""
    t = np.asarray(t, dtype=float)
    u = np.zeros_like(t)
    first = t <= 3 * l
    last = t >= 1 - 3 * l
    u[first] = -(2 / (3 * l)) * (1 - t[first] / (3 * l))
    u[last] = -(2 / (3 * l)) * (1 - (1 - t[last]) / (3 * l))
    return u


def example2(**overrides):
    """Double integrator, cost 1/2 int u^2, xi1 <= l, from (0, v0) to (xf, vf)."""
    _reject_unknown(overrides, EX2_DEFAULTS, "ex2")
    P = {**EX2_DEFAULTS, **overrides}
    l, tf = float(P["l"]), float(P["tf"])
    vb, cb = float(P["velocity_bound"]), float(P["control_bound"])
    problem = OcpProblem(
        n_states=2, n_controls=1, t0=0.0, tf=tf,
        dynamics=_ex2_dynamics,
        xi_lb=[-l, -vb], xi_ub=[l, vb], u_lb=[-cb], u_ub=[cb],
        lagrange_cost=_half_u_squared,
        path_constraint=_ex2_path,
        xi_t0=[0.0, float(P["v0"])], xi_tf=[float(P["xf"]), float(P["vf"])],
        flag_xi0=True, flag_xif=True,
        user_data=dict(P), name="ex2",
    )
    supported = (abs(l - 1 / 9) < 1e-12 and abs(tf - 1.0) < 1e-12 and P["v0"] == 1.0
                 and P["xf"] == 0.0 and P["vf"] == -1.0)
    if not supported:
        return problem, None
    J = _trapezoid(lambda t: 0.5 * ex2_control(t, l) ** 2, 0.0, tf)
    analytic = AnalyticSolution(
        u_star=lambda t: ex2_control(t, l).reshape(-1, 1),
        objective_star=J,
        validity_note=("targets xi(0)=(0, 1), xi(1)=(0, -1); the alternative printed "
                       "targets xi1(tf)=1, xi2(tf)=-1 contradict xi1 <= l and are not used"),
        terminal_state=np.array([0.0, -1.0]),
    )
    return problem, analytic


# Example 3: scalar plant with a terminal penalty -------------------------------

EX3_DEFAULTS = dict(xi0=1.0, a=1.0, tf=1.0, state_bound=2.0)


def ex3_b(t):
    return np.asarray(t) * np.cos(20 * np.pi * np.asarray(t)) - 0.25


def _ex3_dynamics(t, xi, u, data):
    return (ex3_b(t) * u[:, 0])[:, None]


def _ex3_mayer(t0, xi0, tf, xif, data):
    return 0.5 * data["a"] ** 2 * float(xif[0]) ** 2


def _quad(fun, a, b):
    # b(t) oscillates with period 0.1; splitting helps quad keep its accuracy
    edges = np.linspace(a, b, max(2, int(math.ceil((b - a) / 0.05)) + 1))
    return sum(quad(fun, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
               for lo, hi in zip(edges[:-1], edges[1:]))


def ex3_terminal_state(xi0=1.0, a=1.0, tf=1.0, tol=1e-10):
    """Fixed point xf = xi0 - int b(t) sat(a^2 b(t) xf) dt, found by bisection."""
    def residual(xf):
        return xf - (xi0 - _quad(lambda t: ex3_b(t) * sat(a * a * ex3_b(t) * xf), 0.0, tf))

    lo, hi = -abs(xi0), abs(xi0)
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo > 0 or r_hi < 0:
        raise ArithmeticError("terminal-state fixed point not bracketed by [-|xi0|, |xi0|]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def example3(**overrides):
    """xi' = b(t) u, |u| <= 1, cost a^2/2 xi(tf)^2 + 1/2 int u^2."""
    _reject_unknown(overrides, EX3_DEFAULTS, "ex3")
    P = {**EX3_DEFAULTS, **overrides}
    xi0, a, tf, sb = (float(P[k]) for k in ("xi0", "a", "tf", "state_bound"))
    problem = OcpProblem(
        n_states=1, n_controls=1, t0=0.0, tf=tf,
        dynamics=_ex3_dynamics,
        xi_lb=[-sb], xi_ub=[sb], u_lb=[-1.0], u_ub=[1.0],
        lagrange_cost=_half_u_squared, mayer_cost=_ex3_mayer,
        xi_t0=[xi0], flag_xi0=True, flag_xif=False,
        user_data=dict(P), name="ex3",
    )
    try:
        xf = ex3_terminal_state(xi0, a, tf)
    except ArithmeticError as exc:
        problem.user_data["diagnostics"] = [Diagnostic("analytic", str(exc), "warning")]
        return problem, None

    def u_star(t):
        return (-sat(a * a * ex3_b(t) * xf)).reshape(-1, 1)

    J = 0.5 * a * a * xf ** 2 + _quad(lambda t: 0.5 * sat(a * a * ex3_b(t) * xf) ** 2, 0.0, tf)
    analytic = AnalyticSolution(
        u_star=u_star, objective_star=float(J),
        validity_note="u* = -sat(a^2 b(t) xi(tf)) with xi(tf) from a bisection fixed point",
        terminal_state=np.array([xf]),
    )
    return problem, analytic


# Example 4: quarter-car active suspension ---------------------------------------

EX4_DEFAULTS = dict(
    m_S=325.0, m_U=65.0, k=2.15e4, k_t=232.5e3, b=100.8, b_t=0.0,
    r_max=0.04, s_max=0.04, w1=1e5, w2=0.5, w3=1e-5, tf=3.0,
    road="pulse", road_height=0.02, road_start=0.1, road_duration=0.2,
    tire_bound=0.1, velocity_bound=3.0, rattle_bound=0.1,
)
ROAD_PRESETS = ("zero", "step", "pulse")


def road_profile(name, height, start, duration):
    """Road height and its rate, both vectorized in t.

    ``step`` rises with a half-cosine over `duration` and stays up; ``pulse``
    is a sin^2 bump of width `duration`. Both are continuously differentiable.
    """
    if name == "zero":
        return (lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    if name not in ROAD_PRESETS:
        raise ValueError(f"unknown road preset {name!r}; choose from {ROAD_PRESETS}")
    w = math.pi / duration

    def phase(t):
        s = np.clip(np.asarray(t, dtype=float) - start, 0.0, duration)
        on = (np.asarray(t) > start) & (np.asarray(t) < start + duration)
        return s, on

    if name == "step":
        def delta(t):
            s, _ = phase(t)
            return 0.5 * height * (1.0 - np.cos(w * s))

        def delta_dot(t):
            s, on = phase(t)
            return np.where(on, 0.5 * height * w * np.sin(w * s), 0.0)
    else:
        def delta(t):
            s, _ = phase(t)
            return height * np.sin(w * s) ** 2

        def delta_dot(t):
            s, on = phase(t)
            return np.where(on, height * w * np.sin(2.0 * w * s), 0.0)
    return delta, delta_dot


def suspension_accel(xi, F, data):
    """Sprung-mass acceleration, also used inside the comfort cost."""
    return (-data["k"] * xi[:, 2] - data["b"] * (xi[:, 3] - xi[:, 1]) + F) / data["m_S"]


def _ex4_rhs(t, xi, u, data):
    F = u[:, 0]
    dd = data["_delta_dot"](t)
    k, b, kt, bt = data["k"], data["b"], data["k_t"], data["b_t"]
    x1, x2, x3, x4 = xi[:, 0], xi[:, 1], xi[:, 2], xi[:, 3]
    a_U = (k * x3 + b * (x4 - x2) - kt * x1 - bt * (x2 - dd) - F) / data["m_U"]
    return np.stack([x2 - dd, a_U, x4 - x2, suspension_accel(xi, F, data)], axis=1)


def _ex4_lagrange(t, xi, u, data):
    F = u[:, 0]
    acc = suspension_accel(xi, F, data)
    return data["w1"] * xi[:, 0] ** 2 + data["w2"] * acc ** 2 + data["w3"] * F ** 2


def _ex4_path(t, xi, u, data):
    r = data["r_max"]
    return np.stack([r - xi[:, 2], r + xi[:, 2]], axis=1)


def force_bound(data):
    """Actuator bound k_t * s_max: the force that deflects the tire by s_max."""
    return data["k_t"] * data["s_max"]


def example4(**overrides):
    """Quarter-car suspension in states (z_U - delta, z_U', z_S - z_U, z_S')."""
    _reject_unknown(overrides, EX4_DEFAULTS, "suspension")
    P = {**EX4_DEFAULTS, **overrides}
    delta, delta_dot = road_profile(P["road"], float(P["road_height"]),
                                    float(P["road_start"]), float(P["road_duration"]))
    data = dict(P)
    data["_delta"], data["_delta_dot"] = delta, delta_dot
    Fb = force_bound(data)
    tb, vb, rb = float(P["tire_bound"]), float(P["velocity_bound"]), float(P["rattle_bound"])
    problem = OcpProblem(
        n_states=4, n_controls=1, t0=0.0, tf=float(P["tf"]),
        dynamics=_ex4_rhs,
        xi_lb=[-tb, -vb, -rb, -vb], xi_ub=[tb, vb, rb, vb], u_lb=[-Fb], u_ub=[Fb],
        lagrange_cost=_ex4_lagrange, path_constraint=_ex4_path,
        xi_t0=np.zeros(4), flag_xi0=True, flag_xif=False,
        user_data=data, name="suspension",
    )
    return problem, None


REGISTRY = {
    "ex1": example1,
    "ex2": example2,
    "ex3": example3,
    "suspension": example4,
}


def load(name, **overrides):
    """Build a registered problem by name; returns ``(problem, analytic or None)``."""
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; registered: {sorted(REGISTRY)}")
    return REGISTRY[name](**overrides)
