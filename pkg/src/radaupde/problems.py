"""Benchmark problems: Burgers' tracking and the nonlinear heat (kiln probe) problem."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mesh import build_spatial_grid, uniform_temporal_mesh
from .nlp import build_nlp
from .transcription import INF, Kirchhoff, ProblemDefinition, TrackingObjective, Transcription

# Burgers' tracking problem
BURGERS_SIGMA = 0.01
BURGERS_NU = 0.1
BURGERS_U_MIN = -0.015
BURGERS_U_MAX = 0.015
BURGERS_TARGET = 0.035
BURGERS_T0 = 0.0
BURGERS_TF = 1.0

# Heat problem
HEAT_A1 = 4.0
HEAT_A2 = 1.0
HEAT_A3 = 4.0
HEAT_A4 = -1.0
HEAT_RHO = -1.0
HEAT_TF = 0.5
HEAT_GAMMA = 1e-3
HEAT_G = 1.0
HEAT_U_MIN = -INF
HEAT_U_MAX = 0.1

# Reference optimal objectives used by the acceptance checks, keyed by
# (n_t, intervals, n_nodes).
BURGERS_REFERENCE = {
    (5, 3, 34): 2.8709506e-5,
    (3, 10, 34): 2.8709897e-5,
    (5, 3, 68): 2.8905775e-5,
    (2, 22, 68): 2.8903518e-5,
}
HEAT_REFERENCE = {
    (7, 3, 20): 3.6232288e-5,
    (3, 33, 50): 3.8283815e-5,
    (7, 3, 50): 3.8283491e-5,
    (4, 10, 50): 3.8283552e-5,
}
HEAT_CONSTRAINED_REFERENCE = {
    (3, 17, 50): 3.8669419e-5,
    (5, 10, 50): 3.8669506e-5,
    (3, 17, 100): 3.8954568e-5,
    (5, 10, 100): 3.8954649e-5,
}


@dataclass(frozen=True)
class MeshConfig:
    """Temporal and spatial resolution of one transcription.

    ``n_nodes`` counts spatial nodes; a P-2 grid needs an odd count.
    """

    n_t: int = 5
    intervals: int = 3
    n_nodes: int = 34
    degree: int = 1
    quad_points: int = 3
    flipped: bool = True

    def __post_init__(self):
        if self.n_t < 1 or self.intervals < 1:
            raise ValueError("need at least one interval with one collocation point")
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if self.n_nodes < 3 or (self.n_nodes - 1) % self.degree:
            raise ValueError("node count incompatible with the element degree")

    @property
    def n_elements(self) -> int:
        return (self.n_nodes - 1) // self.degree

    @property
    def key(self) -> tuple:
        return (self.n_t, self.intervals, self.n_nodes)

    def with_(self, **changes) -> "MeshConfig":
        return replace(self, **changes)


def burgers_problem(neumann_scale: float = BURGERS_NU) -> ProblemDefinition:
    """Viscous Burgers' equation with Neumann boundary controls at both ends.

    ``neumann_scale`` multiplies the boundary flux term of the weak form;
    integrating ``nu * y_xx`` by parts gives ``nu``.
    """
    return ProblemDefinition(
        name="burgers",
        t0=BURGERS_T0,
        tf=BURGERS_TF,
        initial=lambda x: x**2 * (1.0 - x) ** 2,
        diffusion=Kirchhoff.quadratic(BURGERS_NU),
        convection=Kirchhoff.quadratic(0.0, 1.0),
        objective=TrackingObjective(
            target=lambda x, t: np.full(np.broadcast(x, t).shape, BURGERS_TARGET),
            state_weight=1.0,
            control_weight=BURGERS_SIGMA,
            target_dt=lambda x, t: np.zeros(np.broadcast(x, t).shape),
        ),
        controls=("u1", "u2"),
        boundary="neumann",
        neumann_scale=neumann_scale,
        control_lower=BURGERS_U_MIN,
        control_upper=BURGERS_U_MAX,
        params={"sigma": BURGERS_SIGMA, "nu": BURGERS_NU, "target": BURGERS_TARGET},
    )


def heat_target(t):
    return 2.0 - np.exp(HEAT_RHO * t)


def heat_target_dt(t):
    return -HEAT_RHO * np.exp(HEAT_RHO * t)


def heat_initial(x):
    return 2.0 + np.cos(np.pi * x)


def heat_source(x, t):
    a1, a2, a3, a4, rho = HEAT_A1, HEAT_A2, HEAT_A3, HEAT_A4, HEAT_RHO
    e1 = np.exp(rho * t)
    e2 = e1 * e1
    c = np.cos(np.pi * x)
    return ((rho * (a1 + 2 * a2) + np.pi**2 * (a3 + 2 * a4)) * e1 * c
            - a4 * np.pi**2 * e2 + (2 * a4 * np.pi**2 + rho * a2) * e2 * c**2)


def heat_source_dt(x, t):
    a1, a2, a3, a4, rho = HEAT_A1, HEAT_A2, HEAT_A3, HEAT_A4, HEAT_RHO
    e1 = np.exp(rho * t)
    e2 = e1 * e1
    c = np.cos(np.pi * x)
    return (rho * (rho * (a1 + 2 * a2) + np.pi**2 * (a3 + 2 * a4)) * e1 * c
            + 2 * rho * (-a4 * np.pi**2 * e2 + (2 * a4 * np.pi**2 + rho * a2) * e2 * c**2))


def heat_exact_state(x, t):
    """State solving the heat PDE with the given source when ``u = 2 + e^(rho t)``."""
    return 2.0 + np.exp(HEAT_RHO * t) * np.cos(np.pi * x)


def heat_exact_control(t):
    return 2.0 + np.exp(HEAT_RHO * t)


def cosine_control_bound(t):
    return HEAT_U_MAX * (1.0 + np.cos(4.0 * np.pi * t)) / 2.0


def heat_problem(constrained: bool = False) -> ProblemDefinition:
    """Nonlinear heat equation in divergence form with a Robin control at ``x=0``.

    Capacity ``C(s) = a1 s + a2 s^2/2`` and conduction ``B(s) = a3 s + a4 s^2/2``.
    """
    return ProblemDefinition(
        name="heat-constrained" if constrained else "heat",
        t0=0.0,
        tf=HEAT_TF,
        initial=heat_initial,
        diffusion=Kirchhoff.quadratic(HEAT_A3, HEAT_A4),
        capacity=Kirchhoff.quadratic(HEAT_A1, HEAT_A2),
        objective=TrackingObjective(
            target=heat_target,
            state_weight=1.0,
            control_weight=HEAT_GAMMA,
            boundary=True,
            target_dt=heat_target_dt,
        ),
        controls=("u1",),
        boundary="robin",
        robin_coefficient=HEAT_G,
        source=heat_source,
        source_dt=heat_source_dt,
        control_lower=HEAT_U_MIN,
        control_upper=cosine_control_bound if constrained else HEAT_U_MAX,
        params={"a": (HEAT_A1, HEAT_A2, HEAT_A3, HEAT_A4), "rho": HEAT_RHO,
                "gamma": HEAT_GAMMA, "g": HEAT_G},
    )


def transcribe(problem: ProblemDefinition, config: MeshConfig) -> Transcription:
    mesh = uniform_temporal_mesh(problem.t0, problem.tf, config.intervals, config.n_t,
                                 flipped=config.flipped)
    grid = build_spatial_grid(config.n_elements, config.degree, config.quad_points)
    return Transcription(problem, mesh, grid)


def build_burgers(config: MeshConfig = MeshConfig(), **problem_options):
    """Return ``(problem, nlp)``; the transcription is ``nlp.transcription``."""
    problem = burgers_problem(**problem_options)
    return problem, build_nlp(transcribe(problem, config))


def build_heat(config: MeshConfig = MeshConfig(7, 3, 50), constrained: bool = False):
    problem = heat_problem(constrained)
    return problem, build_nlp(transcribe(problem, config))


PROBLEMS = {
    "burgers": lambda: burgers_problem(),
    "heat": lambda: heat_problem(False),
    "heat-constrained": lambda: heat_problem(True),
}


def reference_objective(name: str, config: MeshConfig):
    """Reference optimal objective for this problem and mesh, if any."""
    table = {"burgers": BURGERS_REFERENCE, "heat": HEAT_REFERENCE,
             "heat-constrained": HEAT_CONSTRAINED_REFERENCE}[name]
    if config.degree != 1:
        return None
    return table.get(config.key)


@dataclass
class LgrComparison:
    flipped_empty_columns: np.ndarray
    standard_empty_columns: np.ndarray
    standard_empty_names: list
    n_columns: int

    @property
    def flipped_ok(self) -> bool:
        return self.flipped_empty_columns.size == 0


def _empty_columns(tr) -> np.ndarray:
    pat = tr.pattern()
    counts = np.bincount(pat.cols, minlength=tr.layout.size)
    empty = np.flatnonzero(counts == 0)
    # endpoint times are fixed parameters; only state and control columns count
    return empty[empty < tr.layout.t0_index]


def _column_name(layout, col) -> str:
    if col < layout.n_state:
        k, s = divmod(col, layout.n_support)
        return f"state[t{s},x{k}]"
    for name in layout.controls:
        sl = layout.control_slice(name)
        if sl.start <= col < sl.stop:
            return f"{name}[{col - sl.start}]"
    return f"col{col}"


def flgr_vs_lgr_demo(problem: ProblemDefinition, config: MeshConfig) -> LgrComparison:
    """Compare Jacobian column coverage of flipped and standard Radau transcriptions.

    With standard rules the terminal support point carries no dynamics
    residual, so the control variables placed there do not appear in any
    constraint.
    """
    flipped = transcribe(problem, config.with_(flipped=True))
    standard = transcribe(problem, config.with_(flipped=False))
    if flipped.layout.size != standard.layout.size:
        raise RuntimeError("flipped and standard layouts differ in size")
    std_empty = _empty_columns(standard)
    return LgrComparison(
        flipped_empty_columns=_empty_columns(flipped),
        standard_empty_columns=std_empty,
        standard_empty_names=[_column_name(standard.layout, c) for c in std_empty],
        n_columns=standard.layout.size,
    )
