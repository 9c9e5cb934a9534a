"""Multi-interval temporal mesh and 1-D spatial element grid."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .quadrature import (
    RadauRule,
    flipped_lgr_rule,
    lagrange_diff_matrix,
    standard_lgr_rule,
)


@dataclass(frozen=True, eq=False)
class TemporalMesh:
    """Partition of ``[t0, tf]`` into intervals, each carrying a Radau rule.

    Support points are shared at interval boundaries.  With flipped rules
    the first support point of every interval is noncollocated; with
    standard rules the last one is.  The global support count is
    ``n_collocation + 1`` either way.

    Quantities that depend on the endpoint times accept optional ``t0``
    and ``tf`` overrides so that they can be evaluated at the values held
    in a decision vector.
    """

    t0: float
    tf: float
    mesh_points: np.ndarray
    points_per_interval: tuple
    rules: tuple
    flipped: bool = True
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offsets = np.concatenate(([0], np.cumsum(self.points_per_interval)))
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_intervals(self) -> int:
        return len(self.points_per_interval)

    @property
    def n_collocation(self) -> int:
        return int(self._offsets[-1])

    @property
    def n_support(self) -> int:
        return self.n_collocation + 1

    @property
    def interval_widths(self) -> np.ndarray:
        """Interval widths in physical time."""
        return 0.5 * (self.tf - self.t0) * np.diff(self.mesh_points)

    def psi(self, t0=None, tf=None) -> np.ndarray:
        """Per-interval scale ``dt/dtau * dtau/dr``."""
        t0 = self.t0 if t0 is None else t0
        tf = self.tf if tf is None else tf
        return 0.5 * (tf - t0) * 0.5 * np.diff(self.mesh_points)

    def interval_support(self, j: int) -> np.ndarray:
        """Global support indices of interval ``j``."""
        return np.arange(self._offsets[j], self._offsets[j + 1] + 1)

    def interval_collocation(self, j: int) -> np.ndarray:
        """Global collocation indices of interval ``j``."""
        return np.arange(self._offsets[j], self._offsets[j + 1])

    def local_support(self, j: int) -> np.ndarray:
        nodes = self.rules[j].nodes
        if self.flipped:
            return np.concatenate(([-1.0], nodes))
        return np.concatenate((nodes, [1.0]))

    @cached_property
    def interval_of_collocation(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_intervals), self.points_per_interval)

    @cached_property
    def collocation_support_index(self) -> np.ndarray:
        """Support index at which each collocation point sits."""
        idx = np.arange(self.n_collocation)
        return idx + 1 if self.flipped else idx

    @cached_property
    def support_tau(self) -> np.ndarray:
        tau = np.empty(self.n_support)
        for j in range(self.n_intervals):
            a, b = self.mesh_points[j], self.mesh_points[j + 1]
            tau[self.interval_support(j)] = a + 0.5 * (b - a) * (self.local_support(j) + 1.0)
        # interval boundaries exactly on the mesh points
        tau[self._offsets] = self.mesh_points
        return tau

    @cached_property
    def collocation_tau(self) -> np.ndarray:
        return self.support_tau[self.collocation_support_index]

    def support_times(self, t0=None, tf=None) -> np.ndarray:
        t0 = self.t0 if t0 is None else t0
        tf = self.tf if tf is None else tf
        t = t0 + 0.5 * (tf - t0) * (self.support_tau + 1.0)
        t[0], t[-1] = t0, tf
        return t

    def collocation_times(self, t0=None, tf=None) -> np.ndarray:
        return self.support_times(t0, tf)[self.collocation_support_index]

    def alpha(self, t0=None, tf=None) -> np.ndarray:
        """``psi`` repeated at every collocation point of its interval."""
        return self.psi(t0, tf)[self.interval_of_collocation]

    @cached_property
    def collocation_weights(self) -> np.ndarray:
        """Per-interval Radau weights, concatenated (no time scaling)."""
        return np.concatenate([r.weights for r in self.rules])

    def omega(self, t0=None, tf=None) -> np.ndarray:
        """Global-time quadrature weights at the collocation points."""
        return self.alpha(t0, tf) * self.collocation_weights

    @cached_property
    def interval_diff_matrices(self) -> tuple:
        mats = []
        for j, rule in enumerate(self.rules):
            mats.append(lagrange_diff_matrix(self.local_support(j), rule.nodes).entries)
        return tuple(mats)

    @cached_property
    def diff_matrix(self) -> sp.csr_matrix:
        return assemble_global_diff_matrix(self)

    @cached_property
    def diff_matrix_dense(self) -> np.ndarray:
        return self.diff_matrix.toarray()


def build_temporal_mesh(t0, tf, interval_fractions=(1.0,), points_per_interval=(5,), flipped=True):
    """Build a static multi-interval mesh on ``[t0, tf]``.

    Parameters
    ----------
    interval_fractions : sequence of float
        Relative interval widths; normalized to sum to one.
    points_per_interval : int or sequence of int
        Collocation points in each interval.  A scalar is broadcast.
    flipped : bool
        Use flipped Radau rules (default).  ``False`` selects standard
        rules, whose terminal support point is noncollocated.
    """
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    fractions = np.asarray(interval_fractions, dtype=float)
    if fractions.ndim != 1 or fractions.size == 0 or np.any(fractions <= 0):
        raise ValueError("interval fractions must be positive")
    fractions = fractions / fractions.sum()
    if np.isscalar(points_per_interval):
        points_per_interval = [points_per_interval] * fractions.size
    points = tuple(int(n) for n in points_per_interval)
    if len(points) != fractions.size:
        raise ValueError("need one point count per interval")
    if min(points) < 1:
        raise ValueError("each interval needs at least one collocation point")
    mesh_points = np.concatenate(([0.0], np.cumsum(fractions))) * 2.0 - 1.0
    mesh_points[0], mesh_points[-1] = -1.0, 1.0
    if np.any(np.diff(mesh_points) <= 0):
        raise ValueError("mesh points must be strictly increasing")
    make = flipped_lgr_rule if flipped else standard_lgr_rule
    rules = tuple(make(n) for n in points)
    return TemporalMesh(float(t0), float(tf), mesh_points, points, rules, flipped)


def uniform_temporal_mesh(t0, tf, n_intervals, points_per_interval, flipped=True):
    return build_temporal_mesh(
        t0, tf, np.ones(n_intervals), [points_per_interval] * n_intervals, flipped
    )


def assemble_global_diff_matrix(mesh: TemporalMesh) -> sp.csr_matrix:
    """Block differentiation matrix, ``n_collocation x (n_collocation + 1)``.

    Consecutive blocks overlap in one column: the shared boundary support
    point.
    """
    rows, cols, vals = [], [], []
    for j, block in enumerate(mesh.interval_diff_matrices):
        r = mesh.interval_collocation(j)
        c = mesh.interval_support(j)
        rr, cc = np.meshgrid(r, c, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(block.ravel())
    shape = (mesh.n_collocation, mesh.n_support)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Nodes and elements of a P-1 or P-2 Lagrange grid on ``[0, 1]``.

    Each element carries ``quad_points`` standard LGR points.
    """

    nodes: np.ndarray
    degree: int
    quad_points: int
    elements: np.ndarray  # (n_elements, degree + 1) node indices

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def element_widths(self) -> np.ndarray:
        return self.nodes[self.elements[:, -1]] - self.nodes[self.elements[:, 0]]

    @cached_property
    def element_rule(self) -> RadauRule:
        return standard_lgr_rule(self.quad_points)

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        """All spatial quadrature abscissae, element by element."""
        left = self.nodes[self.elements[:, 0]]
        xi = 0.5 * (self.element_rule.nodes + 1.0)
        return (left[:, None] + self.element_widths[:, None] * xi[None, :]).ravel()

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """``h_p w_p / 2`` for every quadrature point."""
        return (0.5 * self.element_widths[:, None] * self.element_rule.weights[None, :]).ravel()

    @property
    def n_quadrature(self) -> int:
        return self.n_elements * self.quad_points

    def contains_node(self, x, atol=1e-12) -> bool:
        return bool(np.any(np.abs(self.nodes - x) <= atol))

    def node_index(self, x, atol=1e-12) -> int:
        hit = np.flatnonzero(np.abs(self.nodes - x) <= atol)
        if hit.size == 0:
            raise ValueError(f"{x!r} is not a grid node")
        return int(hit[0])


def grid_from_nodes(nodes, degree=1, quad_points=3) -> SpatialGrid:
    nodes = np.asarray(nodes, dtype=float)
    if degree not in (1, 2):
        raise ValueError("only P-1 and P-2 elements are supported")
    if quad_points < degree + 1:
        raise ValueError("need at least degree + 1 quadrature points per element")
    if nodes.size < 3 or np.any(np.diff(nodes) <= 0):
        raise ValueError("need at least 3 strictly increasing nodes")
    if degree == 2 and nodes.size % 2 == 0:
        raise ValueError("P-2 grids need an odd node count")
    n_el = (nodes.size - 1) // degree
    elements = np.arange(n_el)[:, None] * degree + np.arange(degree + 1)[None, :]
    return SpatialGrid(nodes, degree, int(quad_points), elements)


def build_spatial_grid(n_elements, degree=1, quad_points=3) -> SpatialGrid:
    """Uniform grid of ``n_elements`` elements on ``[0, 1]``."""
    if n_elements < 2:
        raise ValueError("need at least two elements")
    if degree not in (1, 2):
        raise ValueError("only P-1 and P-2 elements are supported")
    nodes = np.linspace(0.0, 1.0, degree * n_elements + 1)
    return grid_from_nodes(nodes, degree, quad_points)
