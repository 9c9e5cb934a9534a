"""Decision-vector layout and the fully discrete residuals and objective.

The state matrix ``Y`` has one row per temporal support point and one
column per spatial node.  It is stored column-major in the decision
vector (all times for node 0, then node 1, ...), followed by the control
vectors and the endpoint times ``t0``, ``tf``.

The constraint vector stacks the initial-condition residual (one entry per
node) on top of the dynamics residual, ordered collocation point by
collocation point with all nodes of a point contiguous.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import derivatives
from .fem import DiscreteOperators, assemble_operators
from .mesh import SpatialGrid, TemporalMesh

INF = 1e19


def _zero(s):
    return np.zeros_like(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class Kirchhoff:
    """Antiderivative ``F`` of a state-dependent coefficient ``f = F'``.

    Applied node by node to the state coefficients.  ``slope`` is ``F'``,
    ``curvature`` is ``F''`` and ``third`` is ``F'''``.
    """

    value: Callable
    slope: Callable
    curvature: Callable
    third: Callable = _zero

    @classmethod
    def quadratic(cls, c1: float, c2: float = 0.0) -> "Kirchhoff":
        """``F(s) = c1 s + c2 s^2 / 2`` so that ``F'(s) = c1 + c2 s``."""
        return cls(
            value=lambda s: c1 * s + 0.5 * c2 * s * s,
            slope=lambda s: c1 + c2 * s,
            curvature=lambda s: c2 + 0.0 * s,
        )


def kirchhoff_transform(state, beta):
    """Coefficient-wise transform ``beta(Y_ik)``.

    ``beta`` is either a :class:`Kirchhoff` pair or a plain callable.
    """
    f = beta.value if isinstance(beta, Kirchhoff) else beta
    return f(np.asarray(state, dtype=float))


@dataclass(frozen=True)
class TrackingObjective:
    """``1/2 int c_s (y - y_d)^2 + 1/2 int c_u |u|^2``.

    With ``boundary=True`` the state term tracks ``y(1, t)`` against
    ``target(t)``; otherwise it is integrated over space against
    ``target(x, t)``.  ``target_dt`` is the time derivative of the target,
    needed only for endpoint-time sensitivities.
    """

    target: Callable
    state_weight: float = 1.0
    control_weight: float = 1.0
    boundary: bool = False
    target_dt: Optional[Callable] = None


@dataclass(frozen=True)
class ProblemDefinition:
    """A 1-D parabolic boundary-control problem in divergence form.

    The PDE is ``d C(y)/dt + d beta(y)/dx = d/dx (d B(y)/dx) + q`` with
    ``C`` the optional ``capacity`` pair (identity when absent), ``beta``
    the optional ``convection`` pair and ``B`` the ``diffusion`` pair.

    ``boundary="neumann"`` gives the flux ``neumann_scale * u1`` entering at
    ``x=0`` and ``neumann_scale * u2`` leaving at ``x=1``.
    ``boundary="robin"`` gives ``dB/dx = g (y - u1)`` at ``x=0`` and zero
    flux at ``x=1``.
    """

    name: str
    t0: float
    tf: float
    initial: Callable
    diffusion: Kirchhoff
    objective: TrackingObjective
    convection: Optional[Kirchhoff] = None
    capacity: Optional[Kirchhoff] = None
    controls: tuple = ("u1", "u2")
    boundary: str = "neumann"
    neumann_scale: float = 1.0
    robin_coefficient: float = 0.0
    source: Optional[Callable] = None
    source_dt: Optional[Callable] = None
    control_lower: object = -INF
    control_upper: object = INF
    params: dict = field(default_factory=dict)

    @property
    def n_controls(self) -> int:
        return len(self.controls)


@dataclass
class DecisionVector:
    state: np.ndarray  # (n_support, n_nodes)
    u1: Optional[np.ndarray]
    u2: Optional[np.ndarray]
    t0: float
    tf: float

    def controls(self):
        return [u for u in (self.u1, self.u2) if u is not None]


@dataclass(frozen=True)
class DecisionLayout:
    n_support: int
    n_nodes: int
    n_collocation: int
    controls: tuple

    @property
    def n_state(self) -> int:
        return self.n_support * self.n_nodes

    @property
    def size(self) -> int:
        return self.n_state + len(self.controls) * self.n_collocation + 2

    @property
    def n_constraints(self) -> int:
        return self.n_nodes * (self.n_collocation + 1)

    def state_index(self, s, k):
        return np.asarray(k) * self.n_support + np.asarray(s)

    def control_slice(self, name) -> slice:
        c = self.controls.index(name)
        start = self.n_state + c * self.n_collocation
        return slice(start, start + self.n_collocation)

    def control_offset(self, c: int) -> int:
        return self.n_state + c * self.n_collocation

    @property
    def t0_index(self) -> int:
        return self.size - 2

    @property
    def tf_index(self) -> int:
        return self.size - 1

    def dynamics_row(self, i, k):
        return self.n_nodes + np.asarray(i) * self.n_nodes + np.asarray(k)

    def unpack(self, z) -> DecisionVector:
        z = np.asarray(z, dtype=float)
        if z.size != self.size:
            raise ValueError(f"decision vector has length {z.size}, expected {self.size}")
        state = z[: self.n_state].reshape(self.n_nodes, self.n_support).T
        ctrl = {name: z[self.control_slice(name)] for name in self.controls}
        return DecisionVector(
            state, ctrl.get("u1"), ctrl.get("u2"), float(z[-2]), float(z[-1])
        )

    def pack(self, dv: DecisionVector) -> np.ndarray:
        z = np.empty(self.size)
        state = np.asarray(dv.state, dtype=float)
        if state.shape != (self.n_support, self.n_nodes):
            raise ValueError("state matrix has the wrong shape")
        z[: self.n_state] = state.T.ravel()
        for name in self.controls:
            z[self.control_slice(name)] = getattr(dv, name)
        z[-2], z[-1] = dv.t0, dv.tf
        return z

    def variable_blocks(self) -> dict:
        blocks = {"state": slice(0, self.n_state)}
        for name in self.controls:
            blocks[name] = self.control_slice(name)
        blocks["t0"] = slice(self.size - 2, self.size - 1)
        blocks["tf"] = slice(self.size - 1, self.size)
        return blocks

    def constraint_blocks(self) -> dict:
        return {
            "initial_condition": slice(0, self.n_nodes),
            "dynamics": slice(self.n_nodes, self.n_constraints),
        }


def _bound_values(bound, times):
    if callable(bound):
        return np.asarray(bound(times), dtype=float) * np.ones_like(times)
    return np.full_like(times, float(bound))


class Transcription:
    """Galerkin-in-space, Radau-in-time transcription of a problem.

    Holds the cached operators and exposes the NLP functions.  Derivatives
    live in :mod:`radaupde.derivatives` and are re-exported as methods.
    """

    backend = "fem"

    def __init__(self, problem: ProblemDefinition, mesh: TemporalMesh, grid: SpatialGrid,
                 ops: DiscreteOperators | None = None):
        if problem.boundary not in ("neumann", "robin"):
            raise ValueError(f"unknown boundary form {problem.boundary!r}")
        if problem.boundary == "robin" and problem.controls != ("u1",):
            raise ValueError("the Robin form takes a single control u1 at x=0")
        self.problem = problem
        self.mesh = mesh
        self.grid = grid
        self.ops = ops if ops is not None else assemble_operators(grid)
        self.layout = DecisionLayout(mesh.n_support, grid.n_nodes, mesh.n_collocation,
                                     tuple(problem.controls))
        self.M = self.ops.M
        self.N = self.ops.N
        self.A = self.ops.A
        self.coll_support = mesh.collocation_support_index
        # control variables live at support points 1..n_collocation
        self.ctrl_index = self.coll_support - 1
        self.has_ctrl = self.ctrl_index >= 0
        self._structure = None

    # -- helpers -----------------------------------------------------------
    def unpack(self, z) -> DecisionVector:
        return self.layout.unpack(z)

    def pack(self, dv: DecisionVector) -> np.ndarray:
        return self.layout.pack(dv)

    def control_times(self, t0=None, tf=None):
        return self.mesh.support_times(t0, tf)[1:]

    def _controls_at_collocation(self, dv: DecisionVector):
        out = []
        for u in dv.controls():
            v = np.zeros(self.mesh.n_collocation)
            v[self.has_ctrl] = u[self.ctrl_index[self.has_ctrl]]
            out.append(v)
        return out

    def load_matrix(self, times, derivative=False):
        """Rows of ``int q(x, t_i) phi_k dx`` (or of its time derivative)."""
        prob = self.problem
        fn = prob.source_dt if derivative else prob.source
        if prob.source is None:
            return np.zeros((times.size, self.grid.n_nodes))
        x = self.ops.points
        if fn is None:
            h = 1e-6 * max(1.0, float(np.max(np.abs(times))))
            q = (prob.source(x[None, :], times[:, None] + h)
                 - prob.source(x[None, :], times[:, None] - h)) / (2 * h)
        else:
            q = fn(x[None, :], times[:, None])
        q = np.broadcast_to(q, (times.size, x.size))
        return np.asarray((self.ops.basis.T @ (q * self.ops.weights).T).T)

    # -- residuals ---------------------------------------------------------
    def spatial_terms(self, dv: DecisionVector):
        """Everything multiplied by ``alpha`` in the dynamics residual."""
        prob = self.problem
        Yc = dv.state[self.coll_support]
        S = (self.A @ kirchhoff_transform(Yc, prob.diffusion).T).T
        if prob.convection is not None:
            S = S + (self.N @ kirchhoff_transform(Yc, prob.convection).T).T
        U = self._controls_at_collocation(dv)
        if prob.boundary == "neumann":
            for name, u in zip(prob.controls, U):
                if name == "u1":
                    S[:, 0] += prob.neumann_scale * u
                else:
                    S[:, -1] -= prob.neumann_scale * u
        else:
            S[:, 0] += prob.robin_coefficient * (Yc[:, 0] - U[0])
        times = self.mesh.collocation_times(dv.t0, dv.tf)
        return S - self.load_matrix(times)

    def time_terms(self, dv: DecisionVector):
        T = self.mesh.diff_matrix @ dv.state
        if self.problem.capacity is not None:
            Yc = dv.state[self.coll_support]
            T = self.problem.capacity.slope(Yc) * T
        return (self.M @ T.T).T

    def dynamics_residual(self, z) -> np.ndarray:
        """``(n_collocation, n_nodes)`` residual of the fully discrete dynamics."""
        dv = self.unpack(z) if not isinstance(z, DecisionVector) else z
        alpha = self.mesh.alpha(dv.t0, dv.tf)
        return self.time_terms(dv) + alpha[:, None] * self.spatial_terms(dv)

    def initial_condition_residual(self, z) -> np.ndarray:
        dv = self.unpack(z) if not isinstance(z, DecisionVector) else z
        return dv.state[0] - self.problem.initial(self.grid.nodes)

    def constraints(self, z) -> np.ndarray:
        dv = self.unpack(z)
        return np.concatenate(
            [self.initial_condition_residual(dv), self.dynamics_residual(dv).ravel()]
        )

    # -- objective ---------------------------------------------------------
    def tracking_error(self, dv: DecisionVector):
        """Per-collocation integrated squared state error and the raw error."""
        obj = self.problem.objective
        Yc = dv.state[self.coll_support]
        times = self.mesh.collocation_times(dv.t0, dv.tf)
        if obj.boundary:
            err = Yc[:, -1] - obj.target(times)
            return err**2, err
        yq = (self.ops.basis @ Yc.T).T
        err = yq - obj.target(self.ops.points[None, :], times[:, None])
        return err**2 @ self.ops.weights, err

    def objective_terms(self, dv: DecisionVector):
        obj = self.problem.objective
        L, _ = self.tracking_error(dv)
        P = sum(u**2 for u in self._controls_at_collocation(dv)) if dv.controls() else 0.0
        return 0.5 * obj.state_weight * L + 0.5 * obj.control_weight * P

    def objective(self, z) -> float:
        """Radau-in-time, element-quadrature-in-space objective."""
        dv = self.unpack(z) if not isinstance(z, DecisionVector) else z
        omega = self.mesh.omega(dv.t0, dv.tf)
        return float(omega @ self.objective_terms(dv))

    # -- bounds and guesses ------------------------------------------------
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
    def gradient(self, z):
        return derivatives.objective_gradient(self, z)

    def jacobian(self, z):
        return derivatives.constraint_jacobian(self, z)

    def hessian(self, z, lam, obj_factor=1.0):
        return derivatives.lagrangian_hessian(self, z, lam, obj_factor)

    def pattern(self):
        return derivatives.sparsity_pattern(self)
