"""Galerkin P-1/P-2 basis functions and quadrature-assembled operators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import SpatialGrid


def shape_eval(degree, xi):
    """Local Lagrange shape functions on the unit element.

    Returns ``(values, derivatives)`` with derivatives taken with respect
    to the local coordinate ``xi`` in ``[0, 1]``; divide by the element
    width to get physical derivatives.  ``xi`` may be an array, in which
    case the results have shape ``(len(xi), degree + 1)``.
    """
    xi = np.asarray(xi, dtype=float)
    if degree == 1:
        vals = np.stack([1.0 - xi, xi], axis=-1)
        ders = np.stack([-np.ones_like(xi), np.ones_like(xi)], axis=-1)
    elif degree == 2:
        vals = np.stack(
            [2.0 * (xi - 0.5) * (xi - 1.0), -4.0 * xi * (xi - 1.0), 2.0 * xi * (xi - 0.5)],
            axis=-1,
        )
        ders = np.stack([4.0 * xi - 3.0, 4.0 - 8.0 * xi, 4.0 * xi - 1.0], axis=-1)
    else:
        raise ValueError("only P-1 and P-2 elements are supported")
    return vals, ders


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Mass ``M``, convection ``N`` and stiffness ``A`` matrices.

    ``N[i, k]`` integrates ``phi_k' * phi_i``.  ``basis`` and ``dbasis``
    hold the global basis (and its x-derivative) sampled at the spatial
    quadrature points; the objective and load assembly reuse them.
    """

    M: sp.csr_matrix
    N: sp.csr_matrix
    A: sp.csr_matrix
    e_first: np.ndarray
    e_last: np.ndarray
    basis: sp.csr_matrix
    dbasis: sp.csr_matrix
    weights: np.ndarray
    points: np.ndarray


def basis_at_quadrature(grid: SpatialGrid):
    """Global basis values and x-derivatives at every quadrature point.

    Element-local shape tables are scattered into ``(n_quadrature,
    n_nodes)`` sparse matrices.
    """
    xi = 0.5 * (grid.element_rule.nodes + 1.0)
    vals, ders = shape_eval(grid.degree, xi)
    nq, nloc = vals.shape
    rows, cols, v, d = [], [], [], []
    for e, (conn, h) in enumerate(zip(grid.elements, grid.element_widths)):
        r = e * nq + np.arange(nq)
        rr, cc = np.meshgrid(r, conn, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        v.append(vals.ravel())
        d.append((ders / h).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (grid.n_quadrature, grid.n_nodes)
    phi = sp.csr_matrix((np.concatenate(v), (rows, cols)), shape=shape)
    dphi = sp.csr_matrix((np.concatenate(d), (rows, cols)), shape=shape)
    return phi, dphi


def assemble_operators(grid: SpatialGrid) -> DiscreteOperators:
    phi, dphi = basis_at_quadrature(grid)
    W = sp.diags(grid.quadrature_weights)
    M = (phi.T @ W @ phi).tocsr()
    N = (phi.T @ W @ dphi).tocsr()
    A = (dphi.T @ W @ dphi).tocsr()
    for mat in (M, N, A):
        mat.eliminate_zeros()
    e_first = np.zeros(grid.n_nodes)
    e_first[0] = 1.0
    e_last = np.zeros(grid.n_nodes)
    e_last[-1] = 1.0
    return DiscreteOperators(
        M, N, A, e_first, e_last, phi, dphi, grid.quadrature_weights, grid.quadrature_points
    )


def assemble_load(grid: SpatialGrid, source, t, ops: DiscreteOperators | None = None):
    """Load vector ``int q(x, t) phi_i dx`` by the element quadrature."""
    if ops is None:
        ops = assemble_operators(grid)
    if source is None:
        return np.zeros(grid.n_nodes)
    q = np.broadcast_to(source(ops.points, t), ops.points.shape)
    return ops.basis.T @ (ops.weights * q)


def evaluate_solution(grid: SpatialGrid, coeffs, x):
    """Evaluate the finite-element function with nodal values ``coeffs`` at ``x``.

    ``coeffs`` may be 2-D with nodes along the last axis.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < grid.nodes[0] - 1e-14) or np.any(x > grid.nodes[-1] + 1e-14):
        raise ValueError("evaluation point outside the spatial domain")
    coeffs = np.asarray(coeffs, dtype=float)
    xs = np.atleast_1d(x)
    left = grid.nodes[grid.elements[:, 0]]
    e = np.clip(np.searchsorted(left, xs, side="right") - 1, 0, grid.n_elements - 1)
    xi = (xs - left[e]) / grid.element_widths[e]
    vals, _ = shape_eval(grid.degree, xi)
    local = coeffs[..., grid.elements[e]]  # (..., len(xs), degree+1)
    out = np.sum(local * vals, axis=-1)
    return out if x.ndim else out[..., 0]
