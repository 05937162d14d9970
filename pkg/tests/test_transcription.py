import numpy as np
import pytest

from radau_mpc import MeshConfig, MpcConfig, OcpProblem, load, scaling_from_bounds
from radau_mpc.lgr_basis import lgr_nodes
from radau_mpc.nlp_solver import fd_gradient
from radau_mpc.problems import ex3_b
from radau_mpc.transcription import (EndOfHorizon, assemble_nlp, build_control_layout,
                                     build_variable_layout, plan_window, scale_vector,
                                     segment_window, transcribe, unscale_vector)


def _window(problem, Ts, p, m, dt, N, k=0, xi=None):
    mpc, mesh = MpcConfig(Ts, p, m), MeshConfig(dt, N)
    xi = problem.initial_state if xi is None else xi
    window, segs = plan_window(problem, mpc, mesh, k, xi)
    return window, segs, mpc, mesh


def _lengths(segs):
    return [round(s.t_end - s.t_start, 12) for s in segs]


def test_segment_tiling():
    assert _lengths(segment_window(0.0, 1.0, MeshConfig(0.25, 3))) == [0.25] * 4
    assert _lengths(segment_window(0.0, 1.0, MeshConfig(0.3, 3))) == [0.3, 0.3, 0.3, 0.1]
    # remainder below a tenth of dt merges into the previous segment
    assert _lengths(segment_window(0.0, 1.02, MeshConfig(0.5, 3))) == [0.5, 0.52]
    segs = segment_window(0.2, 1.4, MeshConfig(0.5, 4))
    assert segs[0].node_times[0] == 0.2 and segs[-1].node_times[-1] == 1.4
    for a, b in zip(segs[:-1], segs[1:]):
        assert a.t_end == b.t_start


def test_end_of_horizon():
    problem, _ = load("ex1")
    with pytest.raises(EndOfHorizon):
        plan_window(problem, MpcConfig(0.5, 2, 2), MeshConfig(0.5, 3), 4, problem.initial_state)


def test_window_flags():
    problem, _ = load("ex1")
    w0 = _window(problem, 0.5, 2, 1, 0.5, 3)[0]
    assert w0.includes_initial_boundary and not w0.reaches_tf
    w3 = _window(problem, 0.5, 2, 1, 0.5, 3, k=3)[0]
    assert w3.reaches_tf and w3.includes_final_boundary and not w3.includes_initial_boundary
    assert w3.tf_iter == problem.tf


def test_control_filter_limits():
    problem, _ = load("ex1")
    window, segs, _, _ = _window(problem, 0.2, 10, 10, 0.5, 5)
    one = build_control_layout(window, segs, 5.0)
    assert one.n_free == 1 and np.all(one.tie_map == 0)
    every = build_control_layout(window, segs, 0.0)
    assert every.n_free == 4 * 5


def test_control_filter_enumeration_oracle():
    problem, _ = load("ex1", tf=3.0)
    window, segs, _, _ = _window(problem, 0.5, 6, 4, 1.0, 4)
    assert window.tfc_iter == 2.0
    layout = build_control_layout(window, segs, 0.5)
    times = [s + (t + 1) / 2 for s in range(3) for t in lgr_nodes(4)]
    free = []
    for t in times:
        if not free or (t <= 2.0 + 1e-9 and t - free[-1] >= 0.5 - 1e-9):
            free.append(t)
    assert np.allclose(layout.free_times, free)
    assert np.all(np.diff(layout.free_times) >= 0.5 - 1e-9) and layout.free_times[-1] <= 2.0
    # every node past tfc uses the last free control
    tie = layout.tie_map.reshape(-1)
    late = np.array(times) > 2.0
    assert np.all(tie[late] == layout.n_free - 1)


def test_scaling_round_trip_and_examples():
    problem, _ = load("ex2")
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.1, 10, 10), MeshConfig(0.5, 4), 0,
                     problem.initial_state)
    layout = nlp.layout
    rng = np.random.default_rng(1)
    x = layout.mid + layout.half * rng.uniform(-1, 1, layout.dim)
    assert np.max(np.abs(unscale_vector(scale_vector(x, None, layout), None, layout) - x)) <= 1e-13
    assert np.allclose(scale_vector(layout.mid, None, layout), 0)
    assert np.allclose(scale_vector(layout.mid + layout.half, None, layout), 1)


def test_ex3_single_node_defect_row():
    problem, _ = load("ex3")
    scaling = scaling_from_bounds(problem)
    nlp = transcribe(problem, scaling, MpcConfig(1.0, 1, 1), MeshConfig(1.0, 1), 0, problem.initial_state)
    assert nlp.dim == 3
    z = np.array([0.3, -0.2, 0.7])
    X, U = nlp.decode(z)
    h = 0.5
    expected = (-0.5 * X[0, 0, 0] + 0.5 * X[0, 1, 0] - h * ex3_b(0.0) * U[0, 0, 0]) / scaling.B[0]
    assert np.isclose(nlp.eq_constraints(z)[0], expected, atol=1e-15)


def _poly_problem(N):
    # xi' = N t^(N-1) has the exact solution t^N, a degree-N polynomial
    return OcpProblem(n_states=1, n_controls=1, t0=0.0, tf=1.0,
                      dynamics=lambda t, x, u, d: (N * t ** (N - 1))[:, None],
                      xi_lb=[-2], xi_ub=[2], u_lb=[-1], u_ub=[1],
                      lagrange_cost=lambda t, x, u, d: u[:, 0] ** 2, xi_t0=[0.0])


@pytest.mark.parametrize("N", [2, 3, 5, 8])
def test_defects_vanish_on_polynomial_trajectories(N):
    problem = _poly_problem(N)
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.25, 4, 4), MeshConfig(0.5, N), 0,
                     problem.initial_state)
    st = nlp.layout.state_times[..., None] ** N
    z = nlp.encode(st, np.zeros((nlp.layout.control.n_free, 1)))
    assert np.max(np.abs(nlp.eq_constraints(z))) <= 1e-9


def test_defect_residual_of_ex1_solution_shrinks_with_order():
    from scipy.integrate import solve_ivp
    from radau_mpc.problems import ex1_control
    problem, _ = load("ex1")
    sol = solve_ivp(lambda t, x: [x[1], -x[0] + ex1_control(t, -0.5, 1.0, 2.0)], (0, 2), [-0.5, 1.0],
                    rtol=1e-12, atol=1e-12, dense_output=True)
    scaling = scaling_from_bounds(problem)
    res = []
    for N in (2, 4, 6, 8):
        nlp = transcribe(problem, scaling, MpcConfig(2.0, 1, 1), MeshConfig(1.0, N), 0, problem.initial_state)
        lay = nlp.layout
        states = sol.sol(lay.state_times.reshape(-1)).T.reshape(lay.state_times.shape + (2,))
        window, segs = nlp.meta["window"], nlp.meta["segments"]
        # evaluate with every node's control free so the exact u* can be placed
        ctrl = build_control_layout(window, segs, 0.0)
        lay0 = build_variable_layout(problem, scaling, segs, ctrl)
        nlp0 = assemble_nlp(problem, scaling, window, segs, lay0)
        z = nlp0.encode(states, ex1_control(ctrl.free_times, -0.5, 1.0, 2.0)[:, None])
        res.append(np.max(np.abs(nlp0.eq_constraints(z)[:lay0.coll_times.size * 2])))
    assert all(b < a for a, b in zip(res, res[1:])) and res[-1] < 1e-6


def test_constraint_counts():
    rng = np.random.default_rng(5)
    for _ in range(10):
        S, N = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        problem, _ = load("suspension", tf=0.1 * S)
        nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.1 * S, 1, 1), MeshConfig(0.1, N), 0,
                         problem.initial_state)
        nx = 4
        assert len(nlp.meta["segments"]) == S
        # defects, continuity, start anchor, and the initial boundary at iteration 0
        assert nlp.eq_constraints(np.zeros(nlp.dim)).size == S * N * nx + (S - 1) * nx + nx + nx
        assert nlp.n_eq == S * N * nx + (S - 1) * nx + 2 * nx
        assert nlp.ineq_constraints(np.zeros(nlp.dim)).size == 2 * S * N


def test_continuity_rows_detect_jumps():
    problem, _ = load("ex1")
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.2, 10, 10), MeshConfig(0.5, 3), 0,
                     problem.initial_state)
    lay = nlp.layout
    states = np.zeros(lay.state_times.shape + (2,))
    z = nlp.encode(states, np.zeros((lay.control.n_free, 1)))
    rows = slice(4 * 3 * 2, 4 * 3 * 2 + 3 * 2)
    assert np.all(nlp.eq_constraints(z)[rows] == 0)
    states[1, 0, 0] = 0.5
    z = nlp.encode(states, np.zeros((lay.control.n_free, 1)))
    assert np.count_nonzero(nlp.eq_constraints(z)[rows]) == 1


def test_objective_gradient_matches_central_difference():
    problem, _ = load("ex3")
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.1, 10, 10), MeshConfig(0.25, 4), 0,
                     problem.initial_state)
    rng = np.random.default_rng(2)
    for _ in range(3):
        z = rng.uniform(-0.9, 0.9, nlp.dim)
        g = fd_gradient(nlp.objective, z, 1e-7, vectorized=True)
        ref = fd_gradient(nlp.objective, z, 1e-6, central=True, vectorized=True)
        assert np.allclose(g, ref, rtol=1e-4, atol=1e-6)


def test_batched_and_single_calls_agree():
    problem, _ = load("suspension")
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.02, 10, 10), MeshConfig(0.05, 4), 0,
                     problem.initial_state)
    Z = np.random.default_rng(0).uniform(-1, 1, (3, nlp.dim))
    for fun in (nlp.objective, nlp.eq_constraints, nlp.ineq_constraints):
        batch = fun(Z)
        for b in range(3):
            assert np.array_equal(batch[b], fun(Z[b]))


def test_start_outside_path_constraint_shifts_anchor():
    problem, _ = load("suspension")
    xi = np.array([0.0, 0.0, 0.045, 0.0])  # rattle beyond r_max = 0.04
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.02, 5, 5), MeshConfig(0.05, 4), 0, xi)
    assert np.allclose(nlp.meta["anchor_path_shift"], [-0.005, 0.0])
    lay = nlp.layout
    states = np.broadcast_to(xi, lay.state_times.shape + (4,)).copy()
    z = nlp.encode(states, np.zeros((lay.control.n_free, 1)))
    assert np.min(nlp.ineq_constraints(z)[:2]) >= 0


def test_first_node_bounds_widen_for_outside_start():
    problem, _ = load("ex3")
    nlp = transcribe(problem, scaling_from_bounds(problem), MpcConfig(0.1, 5, 5), MeshConfig(0.25, 3), 1,
                     np.array([2.5]))
    first = nlp.layout.state_index[0, 0, 0]
    assert nlp.ub[first] == pytest.approx(1.25) and nlp.lb[first] == -1
    assert nlp.meta["window"].notes
