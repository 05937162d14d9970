"""Legendre-Gauss-Radau collocation data for a single mesh segment.

All quantities live on the reference interval [-1, 1]. A grid of order N has
N collocation nodes (the roots of P_{N-1} + P_N, starting at -1) plus one
extra interpolation point at +1 that carries the segment's terminal state.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_ORDER = 64


def _check_order(N):
    if int(N) != N or not 1 <= N <= MAX_ORDER:
        raise ValueError(f"LGR order must be an integer in [1, {MAX_ORDER}], got {N!r}")
    return int(N)


def legendre_eval(n, tau):
    """Evaluate the Legendre polynomial P_n and its derivative at `tau`.

    Uses the three-term recurrence. `tau` may be a scalar or an array; the
    derivative at the endpoints uses the closed form P_n'(+-1) = (+-1)^(n-1) n(n+1)/2.

    Returns
    -------
    value, derivative : float or ndarray
    """
    x = np.asarray(tau, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("legendre_eval is defined on [-1, 1]")
    if n == 0:
        return _as_out(np.ones_like(x), tau), _as_out(np.zeros_like(x), tau)
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    # P_n' = n (x P_n - P_{n-1}) / (x^2 - 1), singular at the endpoints
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (x * p - p_prev) / (x * x - 1.0)
    at_end = np.isclose(np.abs(x), 1.0, rtol=0.0, atol=1e-14)
    if np.any(at_end):
        sign = np.where(x[at_end] > 0, 1.0, (-1.0) ** (n - 1))
        dp = np.where(at_end, 0.0, dp)
        dp[at_end] = sign * n * (n + 1) / 2.0
    return _as_out(p, tau), _as_out(dp, tau)


def _as_out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@lru_cache(maxsize=None)
def _nodes(N):
    if N == 1:
        return np.array([-1.0])
    k = np.arange(N)
    # Chebyshev-Gauss-Radau points bracket the LGR roots closely enough for Newton
    x = -np.cos(2.0 * np.pi * k / (2 * N - 1))
    interior = x[1:].copy()
    for _ in range(100):
        p1, dp1 = legendre_eval(N - 1, interior)
        p2, dp2 = legendre_eval(N, interior)
        step = (p1 + p2) / (dp1 + dp2)
        interior -= step
        if np.max(np.abs(step)) < 1e-16:
            break
    nodes = np.concatenate(([-1.0], np.sort(interior)))
    if np.any(np.diff(nodes) <= 0) or nodes[-1] >= 1.0:
        raise ArithmeticError(f"LGR root iteration failed for N={N}")
    nodes.setflags(write=False)
    return nodes


def lgr_nodes(N):
    """The N LGR collocation nodes in ascending order, nodes[0] == -1 exactly."""
    return _nodes(_check_order(N)).copy()


def lgr_weights(N):
    """Quadrature weights paired with `lgr_nodes(N)`; exact to degree 2N-2."""
    N = _check_order(N)
    tau = _nodes(N)
    p, _ = legendre_eval(N - 1, tau)
    w = (1.0 - tau) / (N * N * p * p)
    w[0] = 2.0 / (N * N)
    return w


def barycentric_weights(x):
    """Barycentric weights 1 / prod_{k != j} (x_j - x_k), normalized to max 1."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    # stretching the span to length 4 keeps 65-point products representable
    c = 4.0 / (x.max() - x.min()) if len(x) > 1 else 1.0
    w = 1.0 / np.prod(diff * c, axis=1)
    return w / np.max(np.abs(w))


def lagrange_interpolate(xk, fk, x, weights=None):
    """Evaluate the polynomial interpolating (xk, fk) at points `x`.

    `fk` may carry trailing channel dimensions: shape (len(xk), ...). Uses the
    second (true) barycentric formula; exact hits return the sample itself.
    """
    xk = np.asarray(xk, dtype=float)
    fk = np.asarray(fk, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = barycentric_weights(xk) if weights is None else weights
    diff = x[:, None] - xk[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = w / diff
    hit_rows = exact.any(axis=1)
    kern[hit_rows] = exact[hit_rows].astype(float)
    flat = fk.reshape(len(xk), -1)
    out = (kern @ flat) / kern.sum(axis=1)[:, None]
    return out.reshape((len(x),) + fk.shape[1:])


def _diff_matrix(x, n_rows):
    """Rows of the derivative matrix of the Lagrange basis on points x."""
    w = barycentric_weights(x)
    diff = x[:n_rows, None] - x[None, :]
    with np.errstate(divide="ignore"):
        D = (w[None, :] / w[:n_rows, None]) / diff
    D[np.arange(n_rows), np.arange(n_rows)] = 0.0
    D[np.arange(n_rows), np.arange(n_rows)] = -D.sum(axis=1)
    return D


def diff_matrix(N):
    """N x (N+1) LGR differentiation matrix.

    Entry (k, i) is the derivative of the i-th Lagrange basis polynomial on
    the nodes plus +1, evaluated at collocation node k.
    """
    N = _check_order(N)
    x = np.append(_nodes(N), 1.0)
    return _diff_matrix(x, N)


def map_time(tau, t0, tf):
    """Map reference time tau in [-1, 1] to physical time in [t0, tf]."""
    if not tf > t0:
        raise ValueError(f"need tf > t0, got t0={t0}, tf={tf}")
    return 0.5 * (tf - t0) * np.asarray(tau) + 0.5 * (tf + t0)


def unmap_time(t, t0, tf):
    if not tf > t0:
        raise ValueError(f"need tf > t0, got t0={t0}, tf={tf}")
    return (2.0 * np.asarray(t) - (tf + t0)) / (tf - t0)


@dataclass(frozen=True, eq=False)
class LgrGrid:
    """Immutable collocation data for one segment.

    Attributes
    ----------
    order : int
        Number of collocation nodes N.
    nodes : (N,) ndarray
        LGR nodes, nodes[0] == -1.
    weights : (N,) ndarray
        Quadrature weights.
    diff_matrix : (N, N+1) ndarray
        Maps values at ``points`` to derivatives at ``nodes``.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray
    regression_point: float = 1.0

    @property
    def points(self):
        """The N+1 interpolation points: nodes followed by +1."""
        return np.append(self.nodes, self.regression_point)

    def interpolate(self, values, tau):
        """Interpolate samples at ``points`` (shape (N+1, ...)) at reference times."""
        return lagrange_interpolate(self.points, values, tau)


@lru_cache(maxsize=None)
def lgr_grid(N):
    """Cached `LgrGrid` of order N."""
    N = _check_order(N)
    arrays = [lgr_nodes(N), lgr_weights(N), diff_matrix(N)]
    for a in arrays:
        a.setflags(write=False)
    return LgrGrid(N, *arrays)
