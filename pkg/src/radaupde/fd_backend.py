"""Method-of-lines finite-difference spatial backend.

Second-order central differences on interior nodes, second-order one-sided
stencils for the Neumann boundary rows, and a trapezoidal rule in space for
the objective.  The decision vector and constraint ordering are the same as
for the Galerkin transcription, so the NLP layer and the studies treat both
backends alike.  Row 0 and row ``K`` of every collocation block hold the
boundary closures at ``x=0`` and ``x=1``; the rows in between hold the
interior dynamics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .derivatives import SparsityPattern
from .mesh import SpatialGrid, TemporalMesh
from .transcription import INF, DecisionLayout, DecisionVector, ProblemDefinition, _bound_values


@dataclass(frozen=True, eq=False)
class FdOperators:
    """Central difference matrices acting from all nodes onto interior nodes."""

    Dx: sp.csr_matrix
    Dxx: sp.csr_matrix
    h: float


def fd_operators(nodes) -> FdOperators:
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if n < 4:
        raise ValueError("finite differencing needs at least 4 nodes")
    h = float(nodes[1] - nodes[0])
    if not np.allclose(np.diff(nodes), h, rtol=1e-10, atol=0.0):
        raise ValueError("finite differencing needs a uniform grid")
    m = n - 2
    Dx = sp.diags([-np.ones(m), np.ones(m)], [0, 2], shape=(m, n)) / (2 * h)
    Dxx = sp.diags([np.ones(m), -2 * np.ones(m), np.ones(m)], [0, 1, 2], shape=(m, n)) / h**2
    return FdOperators(Dx.tocsr(), Dxx.tocsr(), h)


def trapezoid_weights(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    w = np.zeros(nodes.size)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def fd_semidiscretize(nodes, prob: ProblemDefinition):
    """Right-hand side of the interior ODEs and the boundary residuals.

    Returns ``(interior_rhs, boundary_residual)`` where
    ``interior_rhs(Y, t)`` gives ``dY_k/dt`` for the interior nodes and
    ``boundary_residual(Y, u1, u2)`` gives the two one-sided closure rows.
    ``Y`` may carry leading time dimensions.
    """
    _check_problem(prob)
    ops = fd_operators(nodes)
    nodes = np.asarray(nodes, dtype=float)
    kappa = prob.convection.slope if prob.convection is not None else None

    def interior_rhs(Y, t):
        Y = np.asarray(Y, dtype=float)
        rhs = (ops.Dxx @ prob.diffusion.value(Y).T).T
        if kappa is not None:
            rhs = rhs - kappa(Y[..., 1:-1]) * (ops.Dx @ Y.T).T
        if prob.source is not None:
            rhs = rhs + prob.source(nodes[1:-1], np.asarray(t)[..., None])
        return rhs

    def boundary_residual(Y, u1, u2):
        Y = np.asarray(Y, dtype=float)
        h = ops.h
        left = (-Y[..., 2] + 4 * Y[..., 1] - 3 * Y[..., 0]) / (2 * h) - u1
        right = (Y[..., -3] - 4 * Y[..., -2] + 3 * Y[..., -1]) / (2 * h) - u2
        return left, right

    return interior_rhs, boundary_residual


def _check_problem(prob: ProblemDefinition):
    if prob.boundary != "neumann":
        raise ValueError("the finite-difference backend supports Neumann controls only")
    if prob.capacity is not None:
        raise ValueError("the finite-difference backend has no capacity term")


# one-sided first-derivative stencils on the three nodes nearest each boundary
_LEFT = np.array([-3.0, 4.0, -1.0])
_RIGHT = np.array([1.0, -4.0, 3.0])


class FdTranscription:
    """Finite-difference-in-space, Radau-in-time transcription."""

    backend = "fd"

    def __init__(self, problem: ProblemDefinition, mesh: TemporalMesh, grid: SpatialGrid):
        _check_problem(problem)
        if grid.degree != 1:
            raise ValueError("the finite-difference backend uses the grid nodes only (degree 1)")
        self.problem = problem
        self.mesh = mesh
        self.grid = grid
        self.fd = fd_operators(grid.nodes)
        self.h = self.fd.h
        self.trap = trapezoid_weights(grid.nodes)
        self.layout = DecisionLayout(mesh.n_support, grid.n_nodes, mesh.n_collocation,
                                     tuple(problem.controls))
        self.coll_support = mesh.collocation_support_index
        self.ctrl_index = self.coll_support - 1
        self.has_ctrl = self.ctrl_index >= 0
        self._pattern = None

    # -- helpers -----------------------------------------------------------
    def unpack(self, z) -> DecisionVector:
        return self.layout.unpack(z)

    def pack(self, dv: DecisionVector) -> np.ndarray:
        return self.layout.pack(dv)

    def control_times(self, t0=None, tf=None):
        return self.mesh.support_times(t0, tf)[1:]

    def _controls_at_collocation(self, dv: DecisionVector):
        out = {}
        for name in self.problem.controls:
            u = getattr(dv, name)
            v = np.zeros(self.mesh.n_collocation)
            v[self.has_ctrl] = u[self.ctrl_index[self.has_ctrl]]
            out[name] = v
        return out

    def _source(self, times, derivative=False):
        prob = self.problem
        x = self.grid.nodes[None, 1:-1]
        shape = (times.size, x.size)
        if prob.source is None:
            return np.zeros(shape)
        if not derivative:
            return np.broadcast_to(prob.source(x, times[:, None]), shape)
        if prob.source_dt is not None:
            return np.broadcast_to(prob.source_dt(x, times[:, None]), shape)
        h = 1e-6 * max(1.0, float(np.max(np.abs(times))))
        return (np.broadcast_to(prob.source(x, times[:, None] + h), shape)
                - np.broadcast_to(prob.source(x, times[:, None] - h), shape)) / (2 * h)

    def _spatial(self, Yc, times):
        """Interior spatial operator ``kappa Y_x - B(Y)_xx - q`` at collocation points."""
        prob = self.problem
        S = -(self.fd.Dxx @ prob.diffusion.value(Yc).T).T
        if prob.convection is not None:
            S = S + prob.convection.slope(Yc[:, 1:-1]) * (self.fd.Dx @ Yc.T).T
        return S - self._source(times)

    # -- residuals ---------------------------------------------------------
    def dynamics_residual(self, z) -> np.ndarray:
        dv = self.unpack(z) if not isinstance(z, DecisionVector) else z
        Yc = dv.state[self.coll_support]
        times = self.mesh.collocation_times(dv.t0, dv.tf)
        alpha = self.mesh.alpha(dv.t0, dv.tf)
        R = np.empty((self.mesh.n_collocation, self.layout.n_nodes))
        R[:, 1:-1] = (self.mesh.diff_matrix @ dv.state)[:, 1:-1] + alpha[:, None] * self._spatial(Yc, times)
        U = self._controls_at_collocation(dv)
        zero = np.zeros(self.mesh.n_collocation)
        R[:, 0] = Yc[:, :3] @ _LEFT / (2 * self.h) - U.get("u1", zero)
        R[:, -1] = Yc[:, -3:] @ _RIGHT / (2 * self.h) - U.get("u2", zero)
        return R

    def initial_condition_residual(self, z) -> np.ndarray:
        dv = self.unpack(z) if not isinstance(z, DecisionVector) else z
        return dv.state[0] - self.problem.initial(self.grid.nodes)

    def constraints(self, z) -> np.ndarray:
        dv = self.unpack(z)
        return np.concatenate(
            [self.initial_condition_residual(dv), self.dynamics_residual(dv).ravel()]
        )

    # -- objective ---------------------------------------------------------
    def _tracking(self, dv):
        obj = self.problem.objective
        Yc = dv.state[self.coll_support]
        times = self.mesh.collocation_times(dv.t0, dv.tf)
        if obj.boundary:
            err = Yc[:, -1] - obj.target(times)
            return err**2, err
        err = Yc - obj.target(self.grid.nodes[None, :], times[:, None])
        return err**2 @ self.trap, err

    def objective_terms(self, dv):
        obj = self.problem.objective
        L, _ = self._tracking(dv)
        P = sum(u**2 for u in self._controls_at_collocation(dv).values())
        return 0.5 * obj.state_weight * L + 0.5 * obj.control_weight * P

    def objective(self, z) -> float:
        dv = self.unpack(z) if not isinstance(z, DecisionVector) else z
        return float(self.mesh.omega(dv.t0, dv.tf) @ self.objective_terms(dv))

    def bounds(self):
        lo = np.full(self.layout.size, -INF)
        hi = np.full(self.layout.size, INF)
        times = self.control_times()
        for name in self.problem.controls:
            sl = self.layout.control_slice(name)
            lo[sl] = _bound_values(self.problem.control_lower, times)
            hi[sl] = _bound_values(self.problem.control_upper, times)
        lo[-2] = hi[-2] = self.problem.t0
        lo[-1] = hi[-1] = self.problem.tf
        return lo, hi

    # -- derivatives -------------------------------------------------------
    def _target_dt(self, times, shape):
        obj = self.problem.objective
        if obj.boundary:
            f, args = obj.target, (lambda t: (t,))
        else:
            x = self.grid.nodes[None, :]
            f, args = obj.target, (lambda t: (x, t[:, None]))
        if obj.target_dt is not None:
            return np.broadcast_to(obj.target_dt(*args(times)), shape)
        h = 1e-6 * max(1.0, float(np.max(np.abs(times))))
        return np.broadcast_to((f(*args(times + h)) - f(*args(times - h))) / (2 * h), shape)

    def gradient(self, z) -> np.ndarray:
        lay = self.layout
        dv = self.unpack(z)
        obj = self.problem.objective
        omega = self.mesh.omega(dv.t0, dv.tf)
        times = self.mesh.collocation_times(dv.t0, dv.tf)
        _, err = self._tracking(dv)
        g = np.zeros(lay.size)
        gY = np.zeros((lay.n_support, lay.n_nodes))
        if obj.boundary:
            gY[self.coll_support, -1] = omega * obj.state_weight * err
            dL = -2.0 * err * self._target_dt(times, err.shape)
        else:
            gY[self.coll_support] = (omega * obj.state_weight)[:, None] * err * self.trap
            dL = -2.0 * (err * self._target_dt(times, err.shape)) @ self.trap
        g[: lay.n_state] = gY.T.ravel()
        for c, (name, u) in enumerate(self._controls_at_collocation(dv).items()):
            idx = lay.control_offset(c) + self.ctrl_index[self.has_ctrl]
            np.add.at(g, idx, (omega * obj.control_weight * u)[self.has_ctrl])
        terms = self.objective_terms(dv)
        span = dv.tf - dv.t0
        tau = self.mesh.collocation_tau
        dterm = 0.5 * obj.state_weight * dL
        g[lay.t0_index] = np.sum(-omega / span * terms + omega * dterm * 0.5 * (1.0 - tau))
        g[lay.tf_index] = np.sum(omega / span * terms + omega * dterm * 0.5 * (1.0 + tau))
        return g

    def _jacobian_entries(self, dv):
        """Row, column and value arrays for every structural entry."""
        lay, mesh, prob = self.layout, self.mesh, self.problem
        nx, nsup = lay.n_nodes, lay.n_support
        h = self.h
        Yc = dv.state[self.coll_support]
        alpha = mesh.alpha(dv.t0, dv.tf)
        times = mesh.collocation_times(dv.t0, dv.tf)
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c, v = np.broadcast_arrays(r, c, v)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel().astype(float))

        k = np.arange(nx)
        add(k, k * nsup, 1.0)

        interior = np.arange(1, nx - 1)
        dB = prob.diffusion.slope(Yc)
        kap = prob.convection.slope(Yc[:, 1:-1]) if prob.convection is not None else 0 * Yc[:, 1:-1]
        dkap = prob.convection.curvature(Yc[:, 1:-1]) if prob.convection is not None else 0 * kap
        grad = (Yc[:, 2:] - Yc[:, :-2]) / (2 * h)
        for j, block in enumerate(mesh.interval_diff_matrices):
            ci = mesh.interval_collocation(j)
            si = mesh.interval_support(j)
            # time derivative: rows (i, interior k), columns (s, k)
            r = nx + ci[:, None, None] * nx + interior[None, None, :]
            c = interior[None, None, :] * nsup + si[None, :, None]
            add(r, c, block[:, :, None])
        ic = np.arange(mesh.n_collocation)
        s = self.coll_support
        r = nx + ic[:, None] * nx + interior[None, :]
        a = alpha[:, None]
        add(r, interior[None, :] * nsup + s[:, None],
            a * (dkap * grad + 2.0 * dB[:, 1:-1] / h**2))
        add(r, (interior[None, :] + 1) * nsup + s[:, None],
            a * (kap / (2 * h) - dB[:, 2:] / h**2))
        add(r, (interior[None, :] - 1) * nsup + s[:, None],
            a * (-kap / (2 * h) - dB[:, :-2] / h**2))

        # boundary closures
        r0 = nx + ic * nx
        r1 = nx + ic * nx + nx - 1
        for m in range(3):
            add(r0, m * nsup + s, _LEFT[m] / (2 * h))
            add(r1, (nx - 3 + m) * nsup + s, _RIGHT[m] / (2 * h))
        for c, name in enumerate(prob.controls):
            row = r0 if name == "u1" else r1
            sel = self.has_ctrl
            add(row[sel], lay.control_offset(c) + self.ctrl_index[sel], -1.0)

        # endpoint times through alpha and the source times
        S = self._spatial(Yc, times)
        span = dv.tf - dv.t0
        dq = self._source(times, derivative=True)
        tau = mesh.collocation_tau
        d_t0 = -a / span * S - a * dq * (0.5 * (1.0 - tau))[:, None]
        d_tf = a / span * S - a * dq * (0.5 * (1.0 + tau))[:, None]
        add(r, lay.t0_index, d_t0)
        add(r, lay.tf_index, d_tf)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def jacobian(self, z) -> sp.csr_matrix:
        dv = self.unpack(z)
        r, c, v = self._jacobian_entries(dv)
        shape = (self.layout.n_constraints, self.layout.size)
        return sp.csr_matrix((v, (r, c)), shape=shape)

    def pattern(self) -> SparsityPattern:
        if self._pattern is None:
            z = np.zeros(self.layout.size)
            z[-2], z[-1] = self.problem.t0, self.problem.tf
            r, c, _ = self._jacobian_entries(self.unpack(z))
            key = np.unique(r.astype(np.int64) * self.layout.size + c)
            rows, cols = np.divmod(key, self.layout.size)
            self._pattern = SparsityPattern(rows, cols,
                                            (self.layout.n_constraints, self.layout.size))
        return self._pattern

    def hessian(self, z, lam, obj_factor=1.0) -> sp.csr_matrix:
        """Lagrangian Hessian in the state and control variables."""
        lay, mesh, prob = self.layout, self.mesh, self.problem
        dv = self.unpack(z)
        nx, nsup = lay.n_nodes, lay.n_support
        h = self.h
        obj = prob.objective
        omega = mesh.omega(dv.t0, dv.tf)
        alpha = mesh.alpha(dv.t0, dv.tf)
        s = self.coll_support
        Yc = dv.state[s]
        lamD = np.asarray(lam[nx:]).reshape(mesh.n_collocation, nx)[:, 1:-1]
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c, v = np.broadcast_arrays(r, c, v)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel().astype(float))

        k = np.arange(nx)
        idx = k[None, :] * nsup + s[:, None]  # (n_coll, nx)
        if obj.boundary:
            add(idx[:, -1], idx[:, -1], obj_factor * omega * obj.state_weight)
        else:
            add(idx, idx, obj_factor * (omega * obj.state_weight)[:, None] * self.trap[None, :])
        for c, _ in enumerate(prob.controls):
            sel = self.has_ctrl
            j = lay.control_offset(c) + self.ctrl_index[sel]
            add(j, j, obj_factor * omega[sel] * obj.control_weight)

        la = lamD * alpha[:, None]
        d2B = prob.diffusion.curvature(Yc)
        add(idx[:, 1:-1], idx[:, 1:-1], la * 2.0 * d2B[:, 1:-1] / h**2)
        add(idx[:, 2:], idx[:, 2:], -la * d2B[:, 2:] / h**2)
        add(idx[:, :-2], idx[:, :-2], -la * d2B[:, :-2] / h**2)
        if prob.convection is not None:
            dk = prob.convection.curvature(Yc[:, 1:-1])
            d2k = prob.convection.third(Yc[:, 1:-1])
            grad = (Yc[:, 2:] - Yc[:, :-2]) / (2 * h)
            add(idx[:, 1:-1], idx[:, 1:-1], la * d2k * grad)
            for nb, sign in ((idx[:, 2:], 1.0), (idx[:, :-2], -1.0)):
                v = la * dk * sign / (2 * h)
                add(idx[:, 1:-1], nb, v)
                add(nb, idx[:, 1:-1], v)
        H = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(lay.size, lay.size),
        )
        return H


def fd_transcribe(mesh: TemporalMesh, grid: SpatialGrid, prob: ProblemDefinition, x0=None):
    """Build the finite-difference NLP for ``prob``."""
    from .nlp import build_nlp

    return build_nlp(FdTranscription(prob, mesh, grid), x0)
