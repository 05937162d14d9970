"""Drive a plant the optimizer only sees through function calls.

The dynamics below are an ordinary Python function evaluated one point at a
time (``vectorized=False``) with a table lookup inside, the kind of model
that has no symbolic form. The solver only needs values, so it can be used
as is. The task is to bring a damped pendulum from rest at 0.8 rad to the
bottom, with the angle rate kept below 0.5 rad/s by a path constraint (a
free swing would reach about 0.78 rad/s).

    python3 demos/black_box_plant.py
"""
import numpy as np

from radau_mpc import MeshConfig, MpcConfig, OcpProblem, run

# friction torque from a lookup table, interpolated linearly
RATE_TABLE = np.linspace(-2.0, 2.0, 9)
FRICTION_TABLE = 0.05 * np.tanh(4 * RATE_TABLE) + 0.02 * RATE_TABLE


def pendulum(t, xi, u, data):
    angle, rate = xi
    friction = np.interp(rate, RATE_TABLE, FRICTION_TABLE)
    return np.array([rate, -data["g_over_l"] * np.sin(angle) - friction + u[0]])


def effort(t, xi, u, data):
    return xi[0] ** 2 + 0.1 * xi[1] ** 2 + 0.01 * u[0] ** 2


def rate_limit(t, xi, u, data):
    return np.array([0.5 - xi[1], 0.5 + xi[1]])


problem = OcpProblem(
    n_states=2, n_controls=1, t0=0.0, tf=6.0,
    dynamics=pendulum, lagrange_cost=effort, path_constraint=rate_limit,
    xi_lb=[-np.pi, -3.0], xi_ub=[np.pi, 3.0], u_lb=[-2.0], u_ub=[2.0],
    xi_t0=[0.8, 0.0], user_data={"g_over_l": 1.0}, vectorized=False, name="pendulum",
)

rec = run(problem, MpcConfig(Ts=0.2, p=10, m=5), MeshConfig(dt_segment=0.5, nodes_per_segment=4, n_h_sol=5))
print(f"objective {rec.total_cost:.4f}, failed windows {rec.n_failed} of {len(rec.per_iteration)}")
print(f"peak |rate| {np.max(np.abs(rec.states[:, 1])):.3f} rad/s (limit 0.5)")
print(f"final state {np.round(rec.states[-1], 4)}")
