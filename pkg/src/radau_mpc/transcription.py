"""Transcription of one receding-horizon window into a scaled NLP.

The window [t0_iter, tf_iter] is cut into segments, each carrying an LGR grid.
States are decision variables at every interpolation point (collocation nodes
plus the segment's right end); controls are decision variables only at the
collocation nodes that pass the sampling-time filter, every other node copies
the most recent free control. All decision entries are scaled to [-1, 1].

Assembled NLP callables accept a single vector of shape (dim,) or a batch of
shape (B, dim) and return (m,) or (B, m) respectively.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lgr_basis import LgrGrid, lgr_grid, map_time

_TIME_EPS = 1e-9
MERGE_FRACTION = 0.1


class EndOfHorizon(Exception):
    """Raised by `plan_window` when the requested window is empty."""


@dataclass(frozen=True)
class MeshConfig:
    """Segment length, LGR order per segment and simulation storage density.

    ``n_h_sol`` stored samples are produced per sampling interval Ts.
    """

    dt_segment: float
    nodes_per_segment: int
    n_h_sol: int = 10

    def __post_init__(self):
        if not self.dt_segment > 0:
            raise ValueError("dt_segment must be positive")
        if not 1 <= int(self.nodes_per_segment) <= 64:
            raise ValueError("nodes_per_segment must lie in [1, 64]")
        if int(self.n_h_sol) < 1:
            raise ValueError("n_h_sol must be a positive integer")


@dataclass(frozen=True, eq=False)
class WindowSpec:
    iter_index: int
    t0_iter: float
    tf_iter: float
    tfc_iter: float
    includes_initial_boundary: bool
    includes_final_boundary: bool
    reaches_tf: bool
    xi_start: np.ndarray
    notes: tuple = ()


@dataclass(frozen=True, eq=False)
class SegmentPlan:
    seg_index: int
    t_start: float
    t_end: float
    grid: LgrGrid
    node_times: np.ndarray

    @property
    def half_length(self):
        return 0.5 * (self.t_end - self.t_start)


@dataclass(frozen=True, eq=False)
class ControlLayout:
    """Which collocation nodes carry free controls.

    ``tie_map[s, k]`` is the position (in ``free_nodes``) of the free control
    that node k of segment s uses.
    """

    free_nodes: tuple
    tie_map: np.ndarray
    free_times: np.ndarray

    @property
    def n_free(self):
        return len(self.free_nodes)


@dataclass(frozen=True, eq=False)
class VariableLayout:
    """Flat decision-vector index maps.

    Index value ``dim`` marks a frozen channel and points at an implicit
    zero slot appended during decoding.
    """

    dim: int
    state_index: np.ndarray  # (S, N+1, n_states)
    control_index: np.ndarray  # (S, N, n_controls), after tying
    free_control_index: np.ndarray  # (n_free, n_controls)
    mid: np.ndarray  # (dim,)
    half: np.ndarray  # (dim,)
    state_times: np.ndarray  # (S, N+1)
    coll_times: np.ndarray  # (S, N)
    control: ControlLayout


def plan_window(problem, mpc_config, mesh_config, iter_index, xi_start):
    """Time window and segment list for MPC iteration `iter_index` (0-based)."""
    Ts, p, m = mpc_config.Ts, mpc_config.p, mpc_config.m
    t0_iter = problem.t0 + iter_index * Ts
    if problem.tf - t0_iter < _TIME_EPS:
        raise EndOfHorizon(f"iteration {iter_index} starts at or after tf")
    tf_iter = min(problem.tf, t0_iter + p * Ts)
    tfc_iter = min(problem.tf, t0_iter + m * Ts)
    reaches_tf = abs(tf_iter - problem.tf) <= _TIME_EPS
    if reaches_tf:
        tf_iter = problem.tf

    xi = np.array(xi_start, dtype=float).reshape(problem.n_states)
    notes = []
    lo, hi = problem.xi_lb, problem.xi_ub
    slightly = ((xi < lo) & (xi >= lo - 1e-9)) | ((xi > hi) & (xi <= hi + 1e-9))
    xi = np.where(slightly, np.clip(xi, lo, hi), xi)
    outside = np.flatnonzero((xi < lo) | (xi > hi))
    if outside.size:
        notes.append(f"start state outside bounds at index {outside.tolist()}; first-node bounds widened")
    xi.setflags(write=False)

    window = WindowSpec(
        iter_index=iter_index,
        t0_iter=t0_iter,
        tf_iter=tf_iter,
        tfc_iter=tfc_iter,
        includes_initial_boundary=(iter_index == 0 and problem.flag_xi0),
        includes_final_boundary=(reaches_tf and problem.flag_xif),
        reaches_tf=reaches_tf,
        xi_start=xi,
        notes=tuple(notes),
    )
    return window, segment_window(t0_iter, tf_iter, mesh_config)


def segment_window(t0, tf, mesh_config):
    """Tile [t0, tf] with segments of length dt_segment; the last takes the rest."""
    dt = mesh_config.dt_segment
    length = tf - t0
    S = max(1, math.ceil(length / dt - _TIME_EPS))
    edges = [t0 + s * dt for s in range(S)] + [tf]
    if S > 1 and edges[-1] - edges[-2] < MERGE_FRACTION * dt:
        del edges[-2]
    grid = lgr_grid(int(mesh_config.nodes_per_segment))
    segments = []
    for s in range(len(edges) - 1):
        a, b = edges[s], edges[s + 1]
        times = map_time(grid.points, a, b)
        times[0], times[-1] = a, b
        times.setflags(write=False)
        segments.append(SegmentPlan(s, a, b, grid, times))
    return segments


def build_control_layout(window, segments, Ts):
    """Apply the sampling-time filter to the collocation nodes of a window."""
    free = []
    free_times = []
    tie = np.empty((len(segments), segments[0].grid.order), dtype=int)
    for seg in segments:
        for k, t in enumerate(seg.node_times[:-1]):
            if not free:
                is_free = True
            else:
                is_free = (t <= window.tfc_iter + _TIME_EPS
                           and t - free_times[-1] >= Ts - _TIME_EPS)
            if is_free:
                free.append((seg.seg_index, k))
                free_times.append(float(t))
            tie[seg.seg_index, k] = len(free) - 1
    tie.setflags(write=False)
    ft = np.array(free_times)
    ft.setflags(write=False)
    return ControlLayout(tuple(free), tie, ft)


def build_variable_layout(problem, scaling, segments, control_layout):
    """Index maps in segment-block order: each segment's states, then its free controls."""
    S = len(segments)
    N = segments[0].grid.order
    nx, nu = problem.n_states, problem.n_controls
    state_index = np.empty((S, N + 1, nx), dtype=int)
    free_index = np.empty((control_layout.n_free, nu), dtype=int)
    mid, half = [], []
    pos = 0
    free_by_seg = {}
    for j, (s, _) in enumerate(control_layout.free_nodes):
        free_by_seg.setdefault(s, []).append(j)

    frozen_idx = -1  # patched to dim below
    for s in range(S):
        for k in range(N + 1):
            for i in range(nx):
                if scaling.frozen_states[i]:
                    state_index[s, k, i] = frozen_idx
                else:
                    state_index[s, k, i] = pos
                    mid.append(scaling.A[i])
                    half.append(scaling.B[i])
                    pos += 1
        for j in free_by_seg.get(s, []):
            for c in range(nu):
                if scaling.frozen_controls[c]:
                    free_index[j, c] = frozen_idx
                else:
                    free_index[j, c] = pos
                    mid.append(scaling.C[c])
                    half.append(scaling.D[c])
                    pos += 1
    dim = pos
    state_index[state_index == frozen_idx] = dim
    free_index[free_index == frozen_idx] = dim
    control_index = free_index[control_layout.tie_map]
    state_times = np.array([seg.node_times for seg in segments])
    coll_times = state_times[:, :-1].copy()
    arrays = [state_index, control_index, free_index, state_times, coll_times]
    for a in arrays:
        a.setflags(write=False)
    mid = np.array(mid, dtype=float)
    half = np.array(half, dtype=float)
    return VariableLayout(dim, state_index, control_index, free_index, mid, half,
                          state_times, coll_times, control_layout)


def scale_vector(x, scaling, layout):
    """Physical flat decision vector -> scaled; `scaling` is implied by `layout`."""
    return (np.asarray(x, dtype=float) - layout.mid) / layout.half


def unscale_vector(z, scaling, layout):
    return layout.mid + layout.half * np.asarray(z, dtype=float)


@dataclass(eq=False)
class NlpInstance:
    """A scaled nonlinear program: minimize objective(z) s.t. eq(z) = 0, ineq(z) >= 0, lb <= z <= ub."""

    dim: int
    objective: object
    eq_constraints: object
    ineq_constraints: object
    lb: np.ndarray
    ub: np.ndarray
    layout: VariableLayout = None
    vectorized: bool = True
    n_eq: int = 0
    n_ineq: int = 0
    decode: object = None
    encode: object = None
    meta: dict = field(default_factory=dict)


def _batched(fun):
    def wrapper(z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            return fun(z[None, :])[0]
        return fun(z)
    return wrapper


def assemble_nlp(problem, scaling, window, segments, layout):
    """Build the `NlpInstance` for one window.

    Equality rows, in order: collocation defects (segment-major, node, state),
    segment continuity, the start-state anchor, then the optional initial and
    final boundary rows. Defect and continuity rows are divided by the state
    half-ranges so every equality residual is in scaled units. Inequality rows
    are the path constraint at every collocation node times the segment
    half-length.
    """
    S = len(segments)
    grid = segments[0].grid
    N = grid.order
    nx, nu = problem.n_states, problem.n_controls
    D = grid.diff_matrix
    w = grid.weights
    h = np.array([seg.half_length for seg in segments])
    t_coll = layout.coll_times.reshape(-1)
    Bx = scaling.B
    xi_start = window.xi_start
    dim = layout.dim

    def decode_batch(z):
        zp = np.concatenate([z, np.zeros((z.shape[0], 1))], axis=1)
        X = scaling.A + Bx * zp[:, layout.state_index]
        U = scaling.C + scaling.D * zp[:, layout.control_index]
        return X, U

    def _flat_eval(evaluator, X, U):
        nb = X.shape[0]
        tt = np.tile(t_coll, nb)
        return evaluator(tt, X[:, :, :N, :].reshape(-1, nx), U.reshape(-1, nu))

    def _check(values, what):
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values.reshape(values.shape[0], S * N, -1)))[0]
            s, k = divmod(int(bad[1]), N)
            raise FloatingPointError(f"{what} non-finite at segment {s}, node {k} (t={t_coll[bad[1]]:.6g})")

    def eq_fun(z):
        X, U = decode_batch(z)
        nb = X.shape[0]
        f = _flat_eval(problem.eval_dynamics, X, U).reshape(nb, S, N, nx)
        _check(f, "dynamics")
        dX = np.einsum("kj,bsjn->bskn", D, X)
        rows = [((dX - h[None, :, None, None] * f) / Bx).reshape(nb, -1)]
        if S > 1:
            rows.append(((X[:, :-1, N, :] - X[:, 1:, 0, :]) / Bx).reshape(nb, -1))
        rows.append((X[:, 0, 0, :] - xi_start) / Bx)
        if window.includes_initial_boundary:
            rows.append((X[:, 0, 0, :] - problem.xi_t0) / Bx)
        if window.includes_final_boundary:
            rows.append((X[:, -1, N, :] - problem.xi_tf) / Bx)
        return np.concatenate(rows, axis=1)

    # The anchor node's state is pinned to the measured start state. When that
    # state already violates the path constraint, no decision can repair it,
    # so the anchor rows are shifted by the violation (like the first-node
    # bound widening above) instead of making the whole window infeasible.
    anchor_shift = None
    if problem.path_constraint is not None:
        u_mid = scaling.C.reshape(1, -1)
        c_start = problem.eval_path(np.array([window.t0_iter]), xi_start.reshape(1, -1), u_mid)[0]
        if np.all(np.isfinite(c_start)) and np.any(c_start < 0):
            anchor_shift = np.minimum(c_start, 0.0)

    def ineq_fun(z):
        X, U = decode_batch(z)
        nb = X.shape[0]
        if problem.path_constraint is None:
            return np.zeros((nb, 0))
        c = _flat_eval(problem.eval_path, X, U).reshape(nb, S, N, -1)
        _check(c, "path constraint")
        if anchor_shift is not None:
            c[:, 0, 0, :] -= anchor_shift
        return (h[None, :, None, None] * c).reshape(nb, -1)

    def obj_fun(z):
        X, U = decode_batch(z)
        nb = X.shape[0]
        L = _flat_eval(problem.eval_lagrange, X, U).reshape(nb, S, N)
        _check(L, "lagrange cost")
        J = np.einsum("s,k,bsk->b", h, w, L)
        if window.reaches_tf and problem.mayer_cost is not None:
            J = J + np.array([problem.eval_mayer(window.t0_iter, X[b, 0, 0], window.tf_iter, X[b, -1, N])
                              for b in range(nb)])
        return J

    lb = -np.ones(dim)
    ub = np.ones(dim)
    z_start = scaling.scale_states(xi_start)
    first = layout.state_index[0, 0]
    live = first < dim
    lb[first[live]] = np.minimum(-1.0, z_start[live])
    ub[first[live]] = np.maximum(1.0, z_start[live])

    n_eq = S * N * nx + (S - 1) * nx + nx
    n_eq += nx * (int(window.includes_initial_boundary) + int(window.includes_final_boundary))
    probe = ineq_fun(np.zeros((1, dim)))
    n_ineq = probe.shape[1]

    def decode(z):
        """Physical (states (S, N+1, nx), controls (S, N, nu)) from a scaled vector."""
        X, U = decode_batch(np.asarray(z, dtype=float)[None, :])
        return X[0], U[0]

    def encode(states, free_controls):
        """Scaled vector from physical states (S, N+1, nx) and free controls (n_free, nu)."""
        z = np.zeros(dim + 1)
        z[layout.state_index] = scaling.scale_states(states)
        z[layout.free_control_index] = scaling.scale_controls(free_controls)
        return z[:dim]

    return NlpInstance(
        dim=dim,
        objective=_batched(obj_fun),
        eq_constraints=_batched(eq_fun),
        ineq_constraints=_batched(ineq_fun) if n_ineq else None,
        lb=lb,
        ub=ub,
        layout=layout,
        vectorized=True,
        n_eq=n_eq,
        n_ineq=n_ineq,
        decode=decode,
        encode=encode,
        meta={"window": window, "segments": segments,
              "anchor_path_shift": None if anchor_shift is None else anchor_shift.tolist()},
    )


def transcribe(problem, scaling, mpc_config, mesh_config, iter_index, xi_start):
    """plan_window + build_control_layout + assemble_nlp in one call."""
    window, segments = plan_window(problem, mpc_config, mesh_config, iter_index, xi_start)
    ctrl = build_control_layout(window, segments, mpc_config.Ts)
    layout = build_variable_layout(problem, scaling, segments, ctrl)
    return assemble_nlp(problem, scaling, window, segments, layout)
