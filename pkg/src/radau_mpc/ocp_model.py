"""User-facing optimal control problem definition and variable scaling.

A problem bundles the plant dynamics, the running (Lagrange) and terminal
(Mayer) costs, an optional path constraint, box bounds and boundary targets.
Every callable receives ``(t, xi, u, data)`` where ``data`` is the problem's
``user_data`` mapping, so black-box models need no symbolic form.

Callables are evaluated on batches when ``vectorized`` is true: ``t`` has
shape (K,), ``xi`` (K, n_states) and ``u`` (K, n_controls). Dynamics return
(K, n_states), the Lagrange cost (K,), the path constraint (K, n_path) with
feasibility meaning every entry >= 0. With ``vectorized=False`` they are
called once per point with 1-D arrays instead. The Mayer cost is always
called once as ``mayer(t0, xi0, tf, xif, data)`` and returns a float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np


@dataclass(frozen=True)
class Diagnostic:
    field: str
    reason: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.field}: {self.reason}"


def _vec(x):
    a = np.array(x, dtype=float).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OcpProblem:
    """Continuous-time optimal control problem on [t0, tf]."""

    n_states: int
    n_controls: int
    t0: float
    tf: float
    dynamics: Callable
    xi_lb: Any
    xi_ub: Any
    u_lb: Any
    u_ub: Any
    lagrange_cost: Optional[Callable] = None
    mayer_cost: Optional[Callable] = None
    path_constraint: Optional[Callable] = None
    xi_t0: Any = None
    xi_tf: Any = None
    flag_xi0: bool = True
    flag_xif: bool = False
    user_data: Mapping[str, Any] = field(default_factory=dict)
    vectorized: bool = True
    name: str = ""

    def __post_init__(self):
        for attr in ("xi_lb", "xi_ub", "u_lb", "u_ub"):
            object.__setattr__(self, attr, _vec(getattr(self, attr)))
        for attr in ("xi_t0", "xi_tf"):
            value = getattr(self, attr)
            if value is not None:
                object.__setattr__(self, attr, _vec(value))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tf", float(self.tf))

    # batch evaluation -------------------------------------------------

    def _batch(self, fun, t, xi, u, width):
        t = np.asarray(t, dtype=float).reshape(-1)
        xi = np.asarray(xi, dtype=float).reshape(len(t), self.n_states)
        u = np.asarray(u, dtype=float).reshape(len(t), self.n_controls)
        if self.vectorized:
            out = np.asarray(fun(t, xi, u, self.user_data), dtype=float)
        else:
            out = np.array([np.asarray(fun(t[k], xi[k], u[k], self.user_data), dtype=float)
                            for k in range(len(t))])
        if width is None:
            return out.reshape(len(t))
        return out.reshape(len(t), width)

    def eval_dynamics(self, t, xi, u):
        return self._batch(self.dynamics, t, xi, u, self.n_states)

    def eval_lagrange(self, t, xi, u):
        if self.lagrange_cost is None:
            return np.zeros(np.size(t))
        return self._batch(self.lagrange_cost, t, xi, u, None)

    def eval_path(self, t, xi, u):
        if self.path_constraint is None:
            return np.zeros((np.size(t), 0))
        t = np.asarray(t, dtype=float).reshape(-1)
        raw = self._batch(self.path_constraint, t, xi, u, -1)
        return raw.reshape(len(t), -1)

    def eval_mayer(self, t0, xi0, tf, xif):
        if self.mayer_cost is None:
            return 0.0
        return float(self.mayer_cost(float(t0), np.asarray(xi0, dtype=float),
                                     float(tf), np.asarray(xif, dtype=float), self.user_data))

    @property
    def initial_state(self):
        if self.xi_t0 is not None:
            return self.xi_t0
        return 0.5 * (self.xi_lb + self.xi_ub)


def validate(problem):
    """Check a problem definition; returns a list of `Diagnostic` (empty if valid).

    Never raises: evaluation failures of the callables are reported as
    diagnostics on the offending field.
    """
    out = []
    p = problem
    if not isinstance(p.n_states, int) or p.n_states < 1:
        out.append(Diagnostic("n_states", "must be a positive integer"))
    if not isinstance(p.n_controls, int) or p.n_controls < 1:
        out.append(Diagnostic("n_controls", "must be a positive integer"))
    if out:
        return out
    if not (math.isfinite(p.t0) and math.isfinite(p.tf) and p.tf > p.t0):
        out.append(Diagnostic("tf", f"need finite t0 < tf, got t0={p.t0}, tf={p.tf}"))

    for name, vec, n in (("xi_lb", p.xi_lb, p.n_states), ("xi_ub", p.xi_ub, p.n_states),
                         ("u_lb", p.u_lb, p.n_controls), ("u_ub", p.u_ub, p.n_controls)):
        if vec.shape != (n,):
            out.append(Diagnostic(name, f"expected length {n}, got {vec.size}"))
    for name, vec in (("xi_t0", p.xi_t0), ("xi_tf", p.xi_tf)):
        if vec is not None and vec.shape != (p.n_states,):
            out.append(Diagnostic(name, f"expected length {p.n_states}, got {vec.size}"))
    if out:
        return out

    for lo, hi, lname in ((p.xi_lb, p.xi_ub, "xi_lb"), (p.u_lb, p.u_ub, "u_lb")):
        bad = np.flatnonzero(lo > hi)
        if bad.size:
            out.append(Diagnostic(lname, f"lower bound exceeds upper bound at index {bad.tolist()}"))
    bounds_ok = not out
    for flag, vec, name in ((p.flag_xi0, p.xi_t0, "xi_t0"), (p.flag_xif, p.xi_tf, "xi_tf")):
        if not flag or (vec is not None and not bounds_ok):
            continue
        if vec is None:
            out.append(Diagnostic(name, "boundary flag set but no target state given"))
            continue
        bad = np.flatnonzero((vec < p.xi_lb) | (vec > p.xi_ub))
        if bad.size:
            out.append(Diagnostic(name, f"target outside state bounds at index {bad.tolist()}"))

    t = np.array([p.t0])
    xi = p.initial_state.reshape(1, -1)
    u = (0.5 * (p.u_lb + p.u_ub)).reshape(1, -1)
    probes = [("dynamics", lambda: p.eval_dynamics(t, xi, u), (1, p.n_states))]
    if p.lagrange_cost is not None:
        probes.append(("lagrange_cost", lambda: p.eval_lagrange(t, xi, u), (1,)))
    if p.path_constraint is not None:
        probes.append(("path_constraint", lambda: p.eval_path(t, xi, u), None))
    if p.mayer_cost is not None:
        probes.append(("mayer_cost", lambda: np.array(p.eval_mayer(p.t0, xi[0], p.tf, xi[0])), ()))
    for name, probe, shape in probes:
        try:
            val = np.asarray(probe(), dtype=float)
        except Exception as exc:  # user callables may fail arbitrarily
            out.append(Diagnostic(name, f"probe call failed with shape or evaluation error: {exc}"))
            continue
        if shape is not None and val.shape != shape:
            out.append(Diagnostic(name, f"probe returned shape {val.shape}, expected {shape}"))
        elif not np.all(np.isfinite(val)):
            out.append(Diagnostic(name, "probe returned non-finite values"))
    return out


@dataclass(frozen=True, eq=False)
class ScalingSet:
    """Affine maps between physical variables and the scaled box [-1, 1].

    ``A``/``B`` are the state midpoints/half-ranges, ``C``/``D`` the control
    midpoints/half-ranges. Channels with equal bounds are frozen: their
    half-range is 1 and they carry no decision variable.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    frozen_states: np.ndarray
    frozen_controls: np.ndarray
    warnings: tuple = ()

    def scale_states(self, x):
        return (np.asarray(x) - self.A) / self.B

    def unscale_states(self, z):
        return self.A + self.B * np.asarray(z)

    def scale_controls(self, u):
        return (np.asarray(u) - self.C) / self.D

    def unscale_controls(self, z):
        return self.C + self.D * np.asarray(z)


def _mid_half(lb, ub, label):
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError(f"{label} bounds must be finite for scaling")
    mid = 0.5 * (ub + lb)
    half = 0.5 * (ub - lb)
    frozen = half <= 0.0
    half = np.where(frozen, 1.0, half)
    return mid, half, frozen


def scaling_from_bounds(problem):
    """Build the `ScalingSet` from the problem's state and control bounds."""
    A, B, fs = _mid_half(problem.xi_lb, problem.xi_ub, "state")
    C, D, fc = _mid_half(problem.u_lb, problem.u_ub, "control")
    warnings = tuple(
        [Diagnostic("xi_lb", f"state {i} has equal bounds and is frozen", "warning")
         for i in np.flatnonzero(fs)]
        + [Diagnostic("u_lb", f"control {j} has equal bounds and is frozen", "warning")
           for j in np.flatnonzero(fc)]
    )
    arrays = [A, B, C, D, fs, fc]
    for a in arrays:
        a.setflags(write=False)
    return ScalingSet(*arrays, warnings=warnings)
