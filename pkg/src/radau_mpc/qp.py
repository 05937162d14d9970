"""Dense convex QP with inequality rows, solved by a dual active-set method.

    minimize    1/2 y'Hy + q'y
    subject to  G y >= h

H must be symmetric positive definite. The dual method starts from the
unconstrained minimizer and adds violated rows one at a time, dropping rows
whose multiplier would turn negative (Goldfarb and Idnani, 1983). It needs
no feasible starting point and proves infeasibility when a violated row
cannot be added. Projections are recomputed from scratch at each step,
which is fine for the reduced problems the SQP hands over (tens of
variables).
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class QPInfeasible(Exception):
    pass


def solve_qp(H, q, G, h, tol=1e-10, max_steps=None):
    """Return (y, lam) with lam >= 0 the row multipliers (H y + q = G' lam).

    Raises `QPInfeasible` if no y satisfies G y >= h.
    """
    n = len(q)
    m = len(h)
    Hinv = cho_solve(cho_factor(H), np.eye(n))
    y = -Hinv @ q
    lam = np.zeros(m)
    if m == 0:
        return y, lam
    norms = np.linalg.norm(G, axis=1)
    norms[norms == 0.0] = 1.0
    active: list[int] = []
    u = np.zeros(0)
    is_active = np.zeros(m, dtype=bool)
    max_steps = max_steps or 20 * (m + n) + 100

    steps = 0
    while True:
        s = G @ y - h
        score = np.where(is_active, np.inf, s / norms)
        p = int(np.argmin(score))
        if score[p] >= -tol * (1.0 + abs(h[p]) / norms[p]):
            break
        n_p = G[p]
        u_p = 0.0
        while True:
            steps += 1
            if steps > max_steps:
                raise QPInfeasible("active-set step limit reached")
            z_free = Hinv @ n_p
            if active:
                N = G[active].T
                HN = Hinv @ N
                M = N.T @ HN
                r = np.linalg.solve(M, HN.T @ n_p)
                z = z_free - HN @ r
            else:
                r = np.zeros(0)
                z = z_free
            # partial (dual) step length from multipliers that would go negative
            t1, k = np.inf, -1
            pos = r > 1e-14
            if np.any(pos):
                ratios = np.full(len(r), np.inf)
                ratios[pos] = u[pos] / r[pos]
                k = int(np.argmin(ratios))
                t1 = ratios[k]
            zn = z @ n_p
            s_p = n_p @ y - h[p]
            t2 = -s_p / zn if zn > 1e-12 * (n_p @ z_free) else np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                raise QPInfeasible(f"row {p} cannot be satisfied")
            if not np.isfinite(t2):
                u = u - t1 * r
                u_p += t1
                is_active[active[k]] = False
                del active[k]
                u = np.delete(u, k)
                continue
            t = min(t1, t2)
            y = y + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                is_active[p] = True
                u = np.append(u, u_p)
                break
            is_active[active[k]] = False
            del active[k]
            u = np.delete(u, k)
    lam[active] = np.maximum(u, 0.0)
    return y, lam
