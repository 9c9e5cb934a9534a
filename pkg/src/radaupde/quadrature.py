"""Legendre-Gauss-Radau rules, Lagrange interpolation and differentiation.

Two Radau variants are provided.  The *standard* rule contains the left
endpoint ``-1``; the *flipped* rule is its mirror image and contains ``+1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class RadauRule:
    """Radau quadrature rule on ``[-1, 1]``.

    Attributes
    ----------
    nodes : ndarray
        Ascending abscissae.  ``nodes[-1] == 1`` for a flipped rule and
        ``nodes[0] == -1`` for a standard one.
    weights : ndarray
        Positive weights summing to 2.
    flipped : bool
        Which endpoint the rule includes.
    """

    nodes: np.ndarray
    weights: np.ndarray
    flipped: bool

    @property
    def n_points(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> float:
        """Apply the rule to sampled ``values`` or to a callable on [-1, 1]."""
        if callable(values):
            values = values(self.nodes)
        return float(np.dot(self.weights, values))


@dataclass(frozen=True, eq=False)
class DiffMatrix:
    """Lagrange differentiation matrix.

    ``entries[i, n]`` is the derivative of the n-th Lagrange basis
    polynomial on ``support_points`` evaluated at ``eval_points[i]``.
    """

    support_points: np.ndarray
    eval_points: np.ndarray
    entries: np.ndarray


def legendre_eval(n: int, r):
    """Evaluate the Legendre polynomial P_n at ``r`` by three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    r = np.asarray(r, dtype=float)
    p_prev = np.ones_like(r)
    if n == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = r.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * r * p - k * p_prev) / (k + 1)
    return p if p.ndim else float(p)


def _legendre_and_derivative(n, r):
    # P_n and P_n' on interior points (|r| < 1)
    p_prev = np.ones_like(r)
    if n == 0:
        return p_prev, np.zeros_like(r)
    p = r.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * r * p - k * p_prev) / (k + 1)
    dp = n * (r * p - p_prev) / (r * r - 1.0)
    return p, dp


@lru_cache(maxsize=None)
def _standard_radau(n: int, tol: float = 1e-14, maxiter: int = 100):
    if n < 1:
        raise ValueError("a Radau rule needs at least one point")
    x = np.empty(n)
    x[0] = -1.0
    if n > 1:
        # Chebyshev-Gauss-Radau points as the starting guess.
        x[1:] = -np.cos(2.0 * np.pi * np.arange(1, n) / (2 * n - 1))
        free = x[1:].copy()
        for _ in range(maxiter):
            pn1, dpn1 = _legendre_and_derivative(n - 1, free)
            pn, dpn = _legendre_and_derivative(n, free)
            step = (pn1 + pn) / (dpn1 + dpn)
            free -= step
            if np.max(np.abs(step)) <= tol:
                break
        else:
            raise RuntimeError(f"Radau root-finding did not converge for n={n}")
        x[1:] = np.sort(free)
    w = np.empty(n)
    w[0] = 2.0 / n**2
    if n > 1:
        pn1 = legendre_eval(n - 1, x[1:])
        w[1:] = (1.0 - x[1:]) / (n * pn1) ** 2
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def standard_lgr_rule(n: int) -> RadauRule:
    """Legendre-Gauss-Radau rule with ``n`` points including ``-1``."""
    x, w = _standard_radau(int(n))
    return RadauRule(x, w, flipped=False)


def flipped_lgr_rule(n: int) -> RadauRule:
    """Flipped LGR rule: the negated roots of ``P_{n-1} + P_n``, including ``+1``."""
    x, w = _standard_radau(int(n))
    nodes = -x[::-1]
    nodes[-1] = 1.0
    weights = w[::-1].copy()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadauRule(nodes, weights, flipped=True)


def barycentric_weights(support) -> np.ndarray:
    support = np.asarray(support, dtype=float)
    diff = support[:, None] - support[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("support points must be distinct")
    return 1.0 / np.prod(diff, axis=1)


def lagrange_diff_matrix(support, eval_points) -> DiffMatrix:
    """Differentiation matrix of the Lagrange basis on ``support``.

    Every evaluation point must coincide with one of the support points.
    The off-diagonal entries use the barycentric formula and the diagonal
    is fixed by the constant-annihilation identity.
    """
    support = np.asarray(support, dtype=float)
    eval_points = np.asarray(eval_points, dtype=float)
    lam = barycentric_weights(support)
    m = support.size
    full = np.zeros((m, m))
    for i in range(m):
        for n in range(m):
            if i != n:
                full[i, n] = lam[n] / lam[i] / (support[i] - support[n])
        full[i, i] = -np.sum(full[i])
    rows = []
    for r in eval_points:
        hit = np.flatnonzero(support == r)
        if hit.size != 1:
            raise ValueError(f"evaluation point {r!r} is not a support point")
        rows.append(hit[0])
    return DiffMatrix(support, eval_points, full[rows])


def lagrange_interpolate(support, values, query):
    """Barycentric evaluation of the interpolant through ``(support, values)``.

    ``values`` may carry trailing dimensions; the first axis runs over the
    support points.  ``query`` may be a scalar or an array.
    """
    support = np.asarray(support, dtype=float)
    values = np.asarray(values, dtype=float)
    lam = barycentric_weights(support)
    query = np.asarray(query, dtype=float)
    scalar = query.ndim == 0
    q = np.atleast_1d(query)
    out = np.empty((q.size,) + values.shape[1:])
    for j, x in enumerate(q):
        d = x - support
        hit = np.flatnonzero(d == 0.0)
        if hit.size:
            out[j] = values[hit[0]]
            continue
        c = lam / d
        out[j] = np.tensordot(c, values, axes=(0, 0)) / c.sum()
    if scalar:
        return out[0] if out.ndim > 1 else float(out[0])
    return out
