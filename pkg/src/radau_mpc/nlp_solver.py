"""SQP solver with finite-difference derivatives and a damped BFGS Hessian.

Solves

    minimize f(z)  subject to  c(z) = 0,  g(z) >= 0,  lb <= z <= ub

Each iteration linearizes the constraints, eliminates the linearized equality
rows through an SVD null-space basis and solves the remaining inequality QP
(path rows plus box) with the dual active-set method in `qp`. Steps are
globalized by backtracking on the L1 merit function
f + rho * (sum |c| + sum max(0, -g)). When the linearization is
inconsistent the step falls back to a box-constrained least-squares
restoration of the equalities and relaxes the violated path rows.

Problem objects are duck-typed: anything with ``objective``,
``eq_constraints``, ``ineq_constraints`` (either may be None), ``lb``,
``ub`` and optionally ``vectorized`` (callables accept a (B, dim) batch).
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .qp import QPInfeasible, solve_qp


class FiniteDifferenceError(ValueError):
    def __init__(self, index, message=""):
        self.index = index
        super().__init__(message or f"non-finite function value when perturbing component {index}")


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 100
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    fd_step: float = 1e-7
    display: bool = False

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be positive")
        if not (self.feas_tol > 0 and self.opt_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 1e-12 < self.fd_step < 1e-3:
            raise ValueError("fd_step must lie in (1e-12, 1e-3)")


@dataclass
class SolverResult:
    x_star: np.ndarray
    objective_value: float
    max_eq_violation: float
    min_ineq_margin: float
    success: bool
    iterations_used: int
    message: str
    kkt_residual: float = np.inf
    merit_log: list = field(default_factory=list)


# finite differences -------------------------------------------------------

def _eval_points(fun, X, vectorized):
    if vectorized:
        return np.asarray(fun(X), dtype=float)
    return np.array([np.asarray(fun(x), dtype=float) for x in X])


def fd_jacobian(fun, x, fd_step=1e-7, central=False, f0=None, ub=None, vectorized=False):
    """Finite-difference Jacobian of a vector function, shape (m, n).

    Forward differences by default (stepping backward where x + h would pass
    `ub`); central differences when `central` is true. A scalar function
    gives shape (1, n).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = np.full(n, float(fd_step))
    if central:
        F = _eval_points(fun, np.vstack([x + np.diag(h), x - np.diag(h)]), vectorized)
        F = F.reshape(2 * n, -1)
        _check_probe(F, n)
        return ((F[:n] - F[n:]) / (2.0 * h[:, None])).T
    if ub is not None:
        h = np.where(x + h > ub, -h, h)
    if f0 is None:
        f0 = _eval_points(fun, x[None, :], vectorized)[0]
    F = _eval_points(fun, x + np.diag(h), vectorized).reshape(n, -1)
    _check_probe(F, n)
    return ((F - np.reshape(f0, (1, -1))) / h[:, None]).T


def fd_gradient(fun, x, fd_step=1e-7, central=False, f0=None, ub=None, vectorized=False):
    """Finite-difference gradient of a scalar function, shape (n,)."""
    return fd_jacobian(fun, x, fd_step, central, f0, ub, vectorized).reshape(-1)


def _check_probe(F, n):
    bad = ~np.all(np.isfinite(F), axis=1)
    if np.any(bad):
        raise FiniteDifferenceError(int(np.flatnonzero(bad)[0] % n))


# SQP ----------------------------------------------------------------------

class _Problem:
    """Evaluation wrapper with uniform shapes and empty-constraint handling."""

    def __init__(self, nlp):
        self.nlp = nlp
        self.vectorized = bool(getattr(nlp, "vectorized", False))
        self.lb = np.asarray(nlp.lb, dtype=float)
        self.ub = np.asarray(nlp.ub, dtype=float)
        self.n = self.lb.size

    def _call(self, fun, x):
        if fun is None:
            return np.zeros(0)
        return np.asarray(fun(x), dtype=float).reshape(-1)

    def values(self, x):
        f = float(np.asarray(self.nlp.objective(x), dtype=float).reshape(()))
        c = self._call(self.nlp.eq_constraints, x)
        g = self._call(self.nlp.ineq_constraints, x)
        return f, c, g

    def derivatives(self, x, f, c, g, step, central):
        kw = dict(fd_step=step, central=central, ub=self.ub, vectorized=self.vectorized)
        grad = fd_gradient(self.nlp.objective, x, f0=np.array(f), **kw)
        Je = (fd_jacobian(self.nlp.eq_constraints, x, f0=c, **kw).reshape(c.size, self.n)
              if c.size else np.zeros((0, self.n)))
        Ji = (fd_jacobian(self.nlp.ineq_constraints, x, f0=g, **kw).reshape(g.size, self.n)
              if g.size else np.zeros((0, self.n)))
        return grad, Je, Ji


def _violation(c, g):
    return float(np.sum(np.abs(c)) + np.sum(np.maximum(0.0, -g)))


def _max_violation(c, g):
    eq = float(np.max(np.abs(c))) if c.size else 0.0
    margin = float(np.min(g)) if g.size else np.inf
    return eq, margin


@dataclass
class _Step:
    d: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    lam_box: np.ndarray
    relaxed: bool
    pinv: tuple


def _equality_split(Je, ce):
    n = Je.shape[1]
    if Je.shape[0] == 0:
        return np.zeros(n), np.eye(n), (None, None, None), True
    U, sv, Vt = np.linalg.svd(Je, full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * max(sv[0], 1e-300)))
    Ur, sr, Vr = U[:, :rank], sv[:rank], Vt[:rank].T
    d_p = -Vr @ ((Ur.T @ ce) / sr)
    Z = Vt[rank:].T
    consistent = np.linalg.norm(Je @ d_p + ce) <= 1e-9 * (1.0 + np.linalg.norm(ce))
    return d_p, Z, (Ur, sr, Vr), consistent


def _reduced_rows(Z, d_p, Ji, gi, l_d, u_d, relax):
    G = np.vstack([Ji @ Z, Z, -Z])
    h_path = -gi - Ji @ d_p
    if relax:
        h_path = np.minimum(h_path, 0.0)
    h = np.concatenate([h_path, l_d - d_p, d_p - u_d])
    return G, h


def _solve_reduced(B, g, Z, d_p, G, h):
    nz = Z.shape[1]
    m = len(h)
    if nz == 0:
        if np.all(h <= 1e-10 * (1 + np.abs(h))):
            return d_p, np.zeros(m)
        raise QPInfeasible("no degrees of freedom left after the equality rows")
    norms = np.linalg.norm(G, axis=1)
    flat = norms <= 1e-12
    if np.any(h[flat] > 1e-10):
        raise QPInfeasible("constant row violated")
    keep = ~flat
    H = Z.T @ B @ Z
    H = 0.5 * (H + H.T)
    q = Z.T @ (g + B @ d_p)
    y, lam_k = solve_qp(H, q, G[keep], h[keep])
    lam = np.zeros(m)
    lam[keep] = lam_k
    return d_p + Z @ y, lam


def _qp_step(B, g, Je, ce, Ji, gi, lb_d, ub_d):
    n = g.size
    mi = gi.size
    d_p, Z, pinv, consistent = _equality_split(Je, ce)
    relaxed = False
    d = lam = None
    if consistent:
        G, h = _reduced_rows(Z, d_p, Ji, gi, lb_d, ub_d, relax=False)
        try:
            d, lam = _solve_reduced(B, g, Z, d_p, G, h)
        except QPInfeasible:
            d = None
    if d is None:
        relaxed = True
        if Je.shape[0]:
            d_p = lsq_linear(Je, -ce, bounds=(lb_d, ub_d), method="bvls").x
        else:
            d_p = np.clip(np.zeros(n), lb_d, ub_d)
        # relaxed path rows and the box both hold at y = 0
        G, h = _reduced_rows(Z, d_p, Ji, gi, lb_d, ub_d, relax=True)
        d, lam = _solve_reduced(B, g, Z, d_p, G, h)
    lam_i = lam[:mi]
    lam_box = lam[mi:mi + n] - lam[mi + n:]
    rhs = B @ d + g - Ji.T @ lam_i - lam_box
    Ur, sr, Vr = pinv
    mu = Ur @ ((Vr.T @ rhs) / sr) if Ur is not None else np.zeros(0)
    return _Step(d, mu, lam_i, lam_box, relaxed, pinv)


def _kkt_residual(grad, Je, Ji, step, x, lb, ub, g, tol):
    """Relative stationarity error of the Lagrangian at the current point.

    The QP multipliers absorb the model term B d, so near convergence they
    overstate the residual by about |B d|. A least-squares refit of the
    gradient on the rows that are active both in the QP and at `x` removes
    that term; it is used whenever its inequality multipliers keep the right
    sign.
    """
    scale = max(1.0, float(np.max(np.abs(grad))))
    resid = grad - Je.T @ step.mu - Ji.T @ step.lam - step.lam_box
    best = float(np.max(np.abs(resid)))
    act_i = np.flatnonzero((step.lam > 0) & (np.abs(g) <= tol))
    at_bound = np.where(step.lam_box > 0, x - lb <= tol, ub - x <= tol)
    act_b = np.flatnonzero((step.lam_box != 0) & at_bound)
    n = grad.size
    E = np.eye(n)[act_b] * np.sign(step.lam_box[act_b])[:, None]
    A = np.vstack([Je, Ji[act_i], E])
    if A.shape[0]:
        nu, *_ = np.linalg.lstsq(A.T, grad, rcond=None)
        n_eq = Je.shape[0]
        if np.all(nu[n_eq:] >= -1e-10 * scale):
            best = min(best, float(np.max(np.abs(grad - A.T @ nu))))
    return best / scale


def _bfgs_update(B, s, y):
    """Powell-damped BFGS update; returns (B_new, skipped)."""
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if not np.isfinite(sBs) or sBs <= 1e-300:
        return B, True
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if not np.isfinite(sy) or sy <= 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
        return B, True
    B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (B + B.T), False


def solve(nlp, x0, opts=None):
    """Run SQP from `x0` (clipped into the box) and return a `SolverResult`.

    Never raises on bad function values: non-finite evaluations end the run
    with ``success=False`` and a message naming the point.
    """
    opts = opts or SolverOptions()
    P = _Problem(nlp)
    x = np.clip(np.asarray(x0, dtype=float).copy(), P.lb, P.ub)
    n = P.n

    def failure(msg, it, x_at, vals=None):
        f, c, g = vals if vals is not None else (np.inf, np.zeros(0), np.zeros(0))
        eq, margin = _max_violation(c, g) if vals is not None else (np.inf, -np.inf)
        return SolverResult(x_at, f, eq, margin, False, it, msg)

    try:
        f, c, g = P.values(x)
    except Exception as exc:
        return failure(f"evaluation failed at initial point: {exc}", 0, x)
    if not (np.isfinite(f) and np.all(np.isfinite(c)) and np.all(np.isfinite(g))):
        return failure("non-finite function value at the initial point", 0, x)

    B = np.eye(n)
    rho = 1.0
    skips = 0
    central = False
    first_update = True
    prev = None
    best = None
    merit_log = []
    notes = []
    kkt = np.inf
    message = "iteration limit reached"
    it = 0
    ls_failures = 0
    stall = 0
    flat = 0

    def key(f_, c_, g_):
        eq, margin = _max_violation(c_, g_)
        return (max(eq, -margin if np.isfinite(margin) else 0.0, opts.feas_tol), f_)

    for it in range(1, opts.max_iter + 1):
        cand = key(f, c, g)
        if best is None or cand < best[0]:
            best = (cand, x.copy(), f, c, g)
        try:
            grad, Je, Ji = P.derivatives(x, f, c, g, opts.fd_step, central)
        except (FiniteDifferenceError, FloatingPointError) as exc:
            message = f"derivative evaluation failed at iteration {it}: {exc}"
            break

        if prev is not None:
            s_prev, gl_prev, mu_prev, lam_prev = prev
            gl_new = grad - Je.T @ mu_prev - Ji.T @ lam_prev
            yv = gl_new - gl_prev
            if first_update and s_prev @ yv > 0:
                B = (yv @ yv) / (s_prev @ yv) * np.eye(n)
                first_update = False
            B, skipped = _bfgs_update(B, s_prev, yv)
            skips = skips + 1 if skipped else 0
            if skips >= 2:
                B = np.eye(n)
                skips = 0
                first_update = True

        try:
            step = _qp_step(B, grad, Je, c, Ji, g, P.lb - x, P.ub - x)
        except (QPInfeasible, np.linalg.LinAlgError) as exc:
            message = f"QP subproblem failed at iteration {it}: {exc}"
            break
        d = step.d
        eq_v, margin = _max_violation(c, g)
        feasible = eq_v <= opts.feas_tol and margin >= -opts.feas_tol
        kkt = _kkt_residual(grad, Je, Ji, step, x, P.lb, P.ub, g, opts.feas_tol)
        if opts.display:
            print(f"sqp {it:4d}  f={f: .8e}  viol={max(eq_v, -min(margin, 0.0)):.2e}  "
                  f"kkt={kkt:.2e}  |d|={np.max(np.abs(d)):.2e}", file=sys.stderr)
        if feasible and kkt <= opts.opt_tol:
            message = "converged"
            break
        if np.max(np.abs(d)) <= 1e-12 * (1.0 + np.max(np.abs(x))):
            message = "stationary point of the constraint violation" if not feasible else "step vanished"
            if feasible:
                message = "converged"
            break

        v0 = _violation(c, g)
        v_lin = _violation(c + Je @ d, g + Ji @ d)
        if step.relaxed and not feasible and v_lin >= v0 - 1e-8 * (1.0 + v0):
            stall += 1
            if stall >= 2:
                message = "infeasible: linearized constraints admit no reduction in violation"
                break
        else:
            stall = 0

        mult = np.concatenate([np.abs(step.mu), step.lam])
        mult_max = float(np.max(mult)) if mult.size else 0.0
        if rho < 1.1 * mult_max:
            rho = 2.0 * mult_max
        phi0 = f + rho * v0
        dphi = float(grad @ d) + rho * (v_lin - v0)
        if dphi >= 0:
            dphi = -1e-12 * (1.0 + abs(phi0))

        def merit_at(xt):
            try:
                ft, ct, gt = P.values(xt)
            except Exception:
                return np.inf, None
            if not (np.isfinite(ft) and np.all(np.isfinite(ct)) and np.all(np.isfinite(gt))):
                return np.inf, None
            return ft + rho * _violation(ct, gt), (ft, ct, gt)

        alpha = 1.0
        accepted = None
        phi_t, vals = merit_at(x + d)
        if phi_t <= phi0 + 1e-4 * dphi:
            accepted = (x + d, vals, phi_t, 1.0)
        elif Je.shape[0] and vals is not None and step.pinv[0] is not None:
            # second-order correction against the Maratos effect
            Ur, sr, Vr = step.pinv
            corr = -Vr @ ((Ur.T @ vals[1]) / sr)
            xs = np.clip(x + d + corr, P.lb, P.ub)
            phi_s, vals_s = merit_at(xs)
            if phi_s <= phi0 + 1e-4 * dphi:
                accepted = (xs, vals_s, phi_s, 1.0)
        while accepted is None and alpha > 1e-10:
            alpha *= 0.5
            xt = x + alpha * d
            phi_t, vals = merit_at(xt)
            if phi_t <= phi0 + 1e-4 * alpha * dphi:
                accepted = (xt, vals, phi_t, alpha)

        if accepted is None:
            ls_failures += 1
            if not central:
                central = True
                notes.append(f"switched to central differences at iteration {it}")
                B = np.eye(n)
                first_update = True
                prev = None
                continue
            if ls_failures >= 3 or feasible:
                message = "line search failed" + (" at a feasible point" if feasible else "")
                break
            B = np.eye(n)
            first_update = True
            prev = None
            continue

        x_new, (f_new, c_new, g_new), phi_new, alpha = accepted
        merit_log.append((it, rho, phi0, phi_new, alpha))
        if phi0 - phi_new <= 1e-14 * (1.0 + abs(phi0)):
            flat += 1
            if flat >= 5 and not central:
                # forward-difference noise floor; sharpen the derivatives
                central = True
                flat = 0
                notes.append(f"switched to central differences at iteration {it}")
            elif flat >= 5:
                message = "merit function stagnated"
                x, f, c, g = x_new, f_new, c_new, g_new
                break
        else:
            flat = 0
        gl_old = grad - Je.T @ step.mu - Ji.T @ step.lam
        prev = (x_new - x, gl_old, step.mu, step.lam)
        x, f, c, g = x_new, f_new, c_new, g_new

    cand = key(f, c, g)
    if best is None or cand <= best[0]:
        best = (cand, x.copy(), f, c, g)
    _, xb, fb, cb, gb = best
    eq_v, margin = _max_violation(cb, gb)
    success = message == "converged" and eq_v <= opts.feas_tol and margin >= -opts.feas_tol
    if notes:
        message = message + "; " + "; ".join(notes)
    return SolverResult(xb, fb, eq_v, margin if np.isfinite(margin) else np.inf, success, it,
                        message, kkt, merit_log)
