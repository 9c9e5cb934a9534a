"""Analytic objective gradient, constraint Jacobian and Lagrangian Hessian.

All derivatives are exact for the discrete functions in
:mod:`radaupde.transcription`.  The coefficient-wise transform enters the
Jacobian as a diagonal scaling by ``beta'(Y) = kappa(Y)``.

The Hessian treats the endpoint times as parameters: its ``t0``/``tf``
rows and columns are left empty, which is exact whenever the times are
fixed by their bounds (every benchmark here).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple

    @property
    def nnz(self) -> int:
        return self.rows.size

    def to_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.ones(self.nnz), (self.rows, self.cols)), shape=self.shape
        )

    def contains(self, rows, cols) -> np.ndarray:
        """Membership test for ``(rows, cols)`` pairs."""
        key = self.rows.astype(np.int64) * self.shape[1] + self.cols
        probe = np.asarray(rows, dtype=np.int64) * self.shape[1] + np.asarray(cols)
        return np.isin(probe, key)

    def write(self, path, header: str = "") -> None:
        """Coordinate list, one ``i j`` line per structural nonzero (1-based)."""
        order = np.lexsort((self.cols, self.rows))
        with open(path, "w") as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.write(f"# rows {self.shape[0]} cols {self.shape[1]} nnz {self.nnz}\n")
            for r, c in zip(self.rows[order], self.cols[order]):
                fh.write(f"{r + 1} {c + 1}\n")


class _FemStructure:
    """Index bookkeeping shared by the Jacobian and Hessian assembly."""

    def __init__(self, tr):
        lay, mesh = tr.layout, tr.mesh
        nx, nsup = lay.n_nodes, lay.n_support
        spatial = (abs(tr.M) + abs(tr.N) + abs(tr.A)).tocoo()
        keys = set(zip(spatial.row.tolist(), spatial.col.tolist()))
        keys.add((0, 0))
        pk, pl = (np.array(v, dtype=int) for v in zip(*sorted(keys)))
        ii, nn, kk, ll = [], [], [], []
        for j in range(mesh.n_intervals):
            I = mesh.interval_collocation(j)
            S = mesh.interval_support(j)
            i3, n3, p3 = np.meshgrid(I, S, np.arange(pk.size), indexing="ij")
            ii.append(i3.ravel())
            nn.append(n3.ravel())
            kk.append(pk[p3.ravel()])
            ll.append(pl[p3.ravel()])
        self.i = np.concatenate(ii)
        self.n = np.concatenate(nn)
        self.k = np.concatenate(kk)
        self.l = np.concatenate(ll)
        self.diag = self.n == tr.coll_support[self.i]
        block_rows = lay.dynamics_row(self.i, self.k)
        block_cols = lay.state_index(self.n, self.l)

        ic_rows = np.arange(nx)
        ic_cols = lay.state_index(0, np.arange(nx))

        icol = np.flatnonzero(tr.has_ctrl)
        c_rows, c_cols, c_sign = [], [], []
        prob = tr.problem
        for c, name in enumerate(prob.controls):
            node = 0 if name == "u1" else nx - 1
            c_rows.append(lay.dynamics_row(icol, node))
            c_cols.append(lay.control_offset(c) + tr.ctrl_index[icol])
            if prob.boundary == "robin":
                sign = -prob.robin_coefficient
            else:
                sign = prob.neumann_scale if name == "u1" else -prob.neumann_scale
            c_sign.append(np.full(icol.size, sign))
        self.ctrl_i = np.tile(icol, len(prob.controls))
        self.ctrl_sign = np.concatenate(c_sign) if c_sign else np.zeros(0)
        c_rows = np.concatenate(c_rows) if c_rows else np.zeros(0, int)
        c_cols = np.concatenate(c_cols) if c_cols else np.zeros(0, int)

        dyn_rows = np.arange(nx, lay.n_constraints)
        t_rows = np.concatenate([dyn_rows, dyn_rows])
        t_cols = np.concatenate([np.full(dyn_rows.size, lay.t0_index),
                                 np.full(dyn_rows.size, lay.tf_index)])

        self.rows = np.concatenate([ic_rows, block_rows, c_rows, t_rows]).astype(np.int64)
        self.cols = np.concatenate([ic_cols, block_cols, c_cols, t_cols]).astype(np.int64)
        self.shape = (lay.n_constraints, lay.size)
        self.Md = tr.M.toarray()
        self.Nd = tr.N.toarray()
        self.Ad = tr.A.toarray()


def _structure(tr) -> _FemStructure:
    if getattr(tr, "_structure", None) is None:
        tr._structure = _FemStructure(tr)
    return tr._structure


def sparsity_pattern(tr) -> SparsityPattern:
    """Structural nonzeros of the constraint Jacobian (independent of ``z``)."""
    st = _structure(tr)
    return SparsityPattern(st.rows, st.cols, st.shape)


def _target_dt(tr, times, err_shape):
    obj = tr.problem.objective
    if obj.boundary:
        f = obj.target
        args = lambda t: (t,)
    else:
        x = tr.ops.points[None, :]
        f = lambda *a: obj.target(*a)
        args = lambda t: (x, t[:, None])
    if obj.target_dt is not None:
        out = obj.target_dt(*args(times))
    else:
        h = 1e-6 * max(1.0, float(np.max(np.abs(times))))
        out = (f(*args(times + h)) - f(*args(times - h))) / (2 * h)
    return np.broadcast_to(out, err_shape)


def objective_gradient(tr, z) -> np.ndarray:
    lay = tr.layout
    dv = tr.unpack(z)
    obj = tr.problem.objective
    mesh = tr.mesh
    omega = mesh.omega(dv.t0, dv.tf)
    times = mesh.collocation_times(dv.t0, dv.tf)
    L, err = tr.tracking_error(dv)
    g = np.zeros(lay.size)

    gY = np.zeros((lay.n_support, lay.n_nodes))
    if obj.boundary:
        gY[tr.coll_support, -1] = omega * obj.state_weight * err
        dL = 2.0 * err * -_target_dt(tr, times, err.shape)
    else:
        werr = err * tr.ops.weights[None, :]
        gY[tr.coll_support] = (omega * obj.state_weight)[:, None] * np.asarray(werr @ tr.ops.basis)
        dL = -2.0 * np.sum(werr * _target_dt(tr, times, err.shape), axis=1)
    g[: lay.n_state] = gY.T.ravel()

    for c, u in enumerate(tr._controls_at_collocation(dv)):
        idx = lay.control_offset(c) + tr.ctrl_index[tr.has_ctrl]
        np.add.at(g, idx, (omega * obj.control_weight * u)[tr.has_ctrl])

    terms = tr.objective_terms(dv)
    span = dv.tf - dv.t0
    tau = mesh.collocation_tau
    dterm = 0.5 * obj.state_weight * dL
    g[lay.t0_index] = np.sum(-omega / span * terms + omega * dterm * 0.5 * (1.0 - tau))
    g[lay.tf_index] = np.sum(omega / span * terms + omega * dterm * 0.5 * (1.0 + tau))
    return g


def constraint_jacobian(tr, z) -> sp.csr_matrix:
    st = _structure(tr)
    prob = tr.problem
    mesh = tr.mesh
    dv = tr.unpack(z)
    alpha = mesh.alpha(dv.t0, dv.tf)
    Yc = dv.state[tr.coll_support]
    D = mesh.diff_matrix_dense
    i, n, k, l = st.i, st.n, st.k, st.l

    Mkl = st.Md[k, l]
    if prob.capacity is None:
        time = Mkl * D[i, n]
    else:
        T = D @ dv.state
        cp = prob.capacity.slope(Yc)[i, l]
        cpp = prob.capacity.curvature(Yc)[i, l]
        time = Mkl * (cp * D[i, n] + st.diag * cpp * T[i, l])
    spatial = st.Ad[k, l] * prob.diffusion.slope(Yc)[i, l]
    if prob.convection is not None:
        spatial = spatial + st.Nd[k, l] * prob.convection.slope(Yc)[i, l]
    if prob.boundary == "robin":
        spatial = spatial + prob.robin_coefficient * ((k == 0) & (l == 0))
    block = time + st.diag * alpha[i] * spatial

    ctrl = alpha[st.ctrl_i] * st.ctrl_sign

    S = tr.spatial_terms(dv)
    times = mesh.collocation_times(dv.t0, dv.tf)
    dload = tr.load_matrix(times, derivative=True)
    span = dv.tf - dv.t0
    tau = mesh.collocation_tau
    d_t0 = -(alpha / span)[:, None] * S - (alpha * 0.5 * (1.0 - tau))[:, None] * dload
    d_tf = (alpha / span)[:, None] * S - (alpha * 0.5 * (1.0 + tau))[:, None] * dload

    vals = np.concatenate([np.ones(tr.layout.n_nodes), block, ctrl, d_t0.ravel(), d_tf.ravel()])
    return sp.csr_matrix((vals, (st.rows, st.cols)), shape=st.shape)


def lagrangian_hessian(tr, z, lam, obj_factor=1.0) -> sp.csr_matrix:
    """Hessian of ``obj_factor * objective + lam @ constraints``."""
    lay = tr.layout
    prob = tr.problem
    obj = prob.objective
    mesh = tr.mesh
    dv = tr.unpack(z)
    alpha = mesh.alpha(dv.t0, dv.tf)
    omega = mesh.omega(dv.t0, dv.tf)
    sc = tr.coll_support
    Yc = dv.state[sc]
    Lam = np.asarray(lam[lay.n_nodes:]).reshape(lay.n_collocation, lay.n_nodes)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.broadcast_to(v, np.shape(r)).ravel())

    ncoll = lay.n_collocation
    if obj.boundary:
        idx = lay.state_index(sc, lay.n_nodes - 1)
        add(idx, idx, obj_factor * obj.state_weight * omega)
    else:
        Mc = tr.M.tocoo()
        r = lay.state_index(sc[:, None], Mc.row[None, :])
        c = lay.state_index(sc[:, None], Mc.col[None, :])
        add(r, c, obj_factor * obj.state_weight * omega[:, None] * Mc.data[None, :])
    ic = np.flatnonzero(tr.has_ctrl)
    for cidx in range(prob.n_controls):
        idx = lay.control_offset(cidx) + tr.ctrl_index[ic]
        add(idx, idx, obj_factor * obj.control_weight * omega[ic])

    diag = (np.asarray(Lam @ tr.A.toarray()) * prob.diffusion.curvature(Yc)) * alpha[:, None]
    if prob.convection is not None:
        diag = diag + (Lam @ tr.N.toarray()) * prob.convection.curvature(Yc) * alpha[:, None]
    if prob.capacity is not None:
        mu = Lam @ tr.M.toarray()
        T = mesh.diff_matrix @ dv.state
        diag = diag + mu * prob.capacity.third(Yc) * T
        D = mesh.diff_matrix_dense
        cpp = prob.capacity.curvature(Yc)
        for j in range(mesh.n_intervals):
            I = mesh.interval_collocation(j)
            S = mesh.interval_support(j)
            i3, n3, l3 = np.meshgrid(I, S, np.arange(lay.n_nodes), indexing="ij")
            v = mu[i3, l3] * cpp[i3, l3] * D[i3, n3]
            a = lay.state_index(n3, l3)
            b = lay.state_index(sc[i3], l3)
            add(a, b, v)
            add(b, a, v)
    r = lay.state_index(sc[:, None], np.arange(lay.n_nodes)[None, :])
    add(r, r, diag)
    H = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(lay.size, lay.size),
    )
    H.sum_duplicates()
    return H


@dataclass
class FdReport:
    """Worst relative discrepancy per block between analytic and FD derivatives."""

    gradient: dict
    jacobian: dict
    pattern_misses: int

    @property
    def worst(self) -> float:
        vals = list(self.gradient.values()) + list(self.jacobian.values())
        return max(vals) if vals else 0.0


def _steps(z, rel):
    return rel * np.maximum(1.0, np.abs(z))


def fd_jacobian(fun, z, rel=1e-6):
    """Dense central-difference Jacobian of a vector function."""
    z = np.asarray(z, dtype=float)
    h = _steps(z, rel)
    cols = []
    for j in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[j] += h[j]
        zm[j] -= h[j]
        cols.append((np.atleast_1d(fun(zp)) - np.atleast_1d(fun(zm))) / (2 * h[j]))
    return np.stack(cols, axis=-1)


def _rel(a, b):
    scale = np.max(np.abs(b)) if np.size(b) else 0.0
    diff = np.max(np.abs(a - b)) if np.size(b) else 0.0
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def fd_verify(tr, z, rel=1e-6, max_vars=2000) -> FdReport:
    """Compare analytic derivatives with central differences, block by block.

    Also counts FD-detected Jacobian nonzeros lying outside the structural
    pattern.
    """
    z = np.asarray(z, dtype=float)
    if z.size > max_vars:
        raise ValueError(f"finite-difference check limited to {max_vars} variables")
    lay = tr.layout
    g = tr.gradient(z)
    g_fd = fd_jacobian(lambda v: np.array([tr.objective(v)]), z, rel)[0]
    J = tr.jacobian(z).toarray()
    J_fd = fd_jacobian(tr.constraints, z, rel)
    grad_err, jac_err = {}, {}
    cblocks = lay.constraint_blocks()
    for name, sl in lay.variable_blocks().items():
        grad_err[name] = _rel(g[sl], g_fd[sl])
        for cname, rs in cblocks.items():
            jac_err[f"{cname}/{name}"] = _rel(J[rs, sl], J_fd[rs, sl])
    thresh = 1e-9 * max(1.0, np.max(np.abs(J_fd)))
    r, c = np.nonzero(np.abs(J_fd) > thresh)
    misses = int(np.sum(~tr.pattern().contains(r, c)))
    return FdReport(grad_err, jac_err, misses)
