"""Benchmark runs, self-convergence studies, sparsity export and figures.

Every function here is deterministic for a given configuration.  File
outputs are CSV for vectors and matrices, JSON for summaries and PNG for
figures; run timings are printed by the CLI but kept out of the files so
that repeated runs produce identical outputs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fd_backend import FdTranscription
from .fem import evaluate_solution
from .mesh import build_spatial_grid, build_temporal_mesh
from .nlp import SolveOptions, SolveReport, build_nlp, solve
from .problems import PROBLEMS, MeshConfig, reference_objective
from .quadrature import lagrange_interpolate
from .transcription import Transcription

log = logging.getLogger(__name__)

# comparison points for the self-convergence studies
COMPARISON_X = {"burgers": 0.2388, "heat": 1.0 / 3.0, "heat-constrained": 1.0 / 3.0}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to build and solve one transcription.

    ``n_nodes`` counts spatial nodes.  ``grading`` bends the interval
    boundaries towards ``t0`` as ``(j/J)**grading``; 1 gives uniform
    intervals.  ``breakpoints`` are times that replace the nearest interval
    boundary, used to put a boundary on a control switching time.
    """

    problem: str = "burgers"
    backend: str = "fem"
    degree: int = 1
    n_nodes: int = 34
    intervals: int = 3
    n_t: int = 5
    quad_points: int = 3
    tol: float = 1e-8
    max_iter: int = 300
    grading: float = 1.0
    breakpoints: tuple = ()

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.backend not in ("fem", "fd"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "fd" and (self.problem != "burgers" or self.degree != 1):
            raise ConfigError("the finite-difference backend covers P-1 Burgers' only")
        if self.degree not in (1, 2):
            raise ConfigError("degree must be 1 or 2")
        if min(self.intervals, self.n_t, self.quad_points) < 1:
            raise ConfigError("interval, point and quadrature counts must be positive")
        if self.n_nodes < 3 or (self.n_nodes - 1) % self.degree:
            raise ConfigError("node count incompatible with the element degree")
        if self.backend == "fd" and self.n_nodes < 4:
            raise ConfigError("the finite-difference backend needs at least 4 nodes")
        if self.quad_points < self.degree + 1:
            raise ConfigError("need at least degree + 1 quadrature points per element")
        if not self.tol > 0 or self.grading < 1.0:
            raise ConfigError("tolerance must be positive and grading at least 1")
        return self

    @property
    def mesh_config(self) -> MeshConfig:
        return MeshConfig(self.n_t, self.intervals, self.n_nodes, self.degree, self.quad_points)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def interval_edges(t0, tf, intervals, grading=1.0, breakpoints=()) -> np.ndarray:
    """Interval boundaries graded towards ``t0`` with optional pinned breakpoints."""
    edges = t0 + (tf - t0) * (np.arange(intervals + 1) / intervals) ** grading
    for b in sorted(breakpoints):
        if intervals < 2:
            break
        k = int(np.argmin(np.abs(edges[1:-1] - b))) + 1
        edges[k] = b
    edges = np.sort(edges)
    if np.any(np.diff(edges) <= 0):
        raise ConfigError("breakpoints collapse an interval; use more intervals")
    return edges


def make_transcription(config: RunConfig, flipped: bool = True):
    config.validate()
    problem = PROBLEMS[config.problem]()
    edges = interval_edges(problem.t0, problem.tf, config.intervals, config.grading,
                           config.breakpoints)
    mesh = build_temporal_mesh(problem.t0, problem.tf, np.diff(edges), config.n_t, flipped)
    n_el = (config.n_nodes - 1) // config.degree
    grid = build_spatial_grid(n_el, config.degree, config.quad_points)
    if config.backend == "fd":
        return FdTranscription(problem, mesh, grid)
    return Transcription(problem, mesh, grid)


def solve_config(config: RunConfig):
    """Build and solve; returns ``(transcription, report)``."""
    tr = make_transcription(config)
    opts = SolveOptions(tol=config.tol, constr_viol_tol=config.tol, max_iter=config.max_iter)
    return tr, solve(build_nlp(tr), opts)


# -- sampling solved states ----------------------------------------------------
def _node_values(tr, z, x) -> np.ndarray:
    """Spatial interpolant of every support-point row at ``x``."""
    return evaluate_solution(tr.grid, tr.unpack(z).state, x)


def state_time_series(tr, z, x, times) -> np.ndarray:
    """State at spatial point ``x`` and the given times.

    Each time is served by the Lagrange interpolant of the interval that
    contains it.
    """
    values = _node_values(tr, z, x)
    return _interpolate_in_time(tr.mesh, values, np.asarray(times, dtype=float))


def _interpolate_in_time(mesh, values, times):
    support = mesh.support_times()
    out = np.empty(times.shape + values.shape[1:])
    edges = support[[mesh.interval_support(j)[0] for j in range(mesh.n_intervals)] + [-1]]
    which = np.clip(np.searchsorted(edges, times, side="right") - 1, 0, mesh.n_intervals - 1)
    for j in range(mesh.n_intervals):
        sel = which == j
        if np.any(sel):
            idx = mesh.interval_support(j)
            out[sel] = lagrange_interpolate(support[idx], values[idx], times[sel])
    return out


def state_at_time(tr, z, t) -> np.ndarray:
    """Nodal state vector at time ``t``."""
    state = tr.unpack(z).state
    return _interpolate_in_time(tr.mesh, state, np.array([float(t)]))[0]


def control_trajectories(tr, z) -> dict:
    dv = tr.unpack(z)
    return {name: getattr(dv, name) for name in tr.problem.controls}


def estimate_switch_times(tr, z, active_tol=1e-6) -> np.ndarray:
    """Times where a control enters or leaves one of its bounds.

    The free arc next to each transition is fitted by a cubic and the
    crossing with the bound is taken as the switching time; if the fit
    gives no root near the transition the midpoint is used.
    """
    times = tr.control_times()
    lo, hi = tr.bounds()
    span = tr.problem.tf - tr.problem.t0
    found = []
    for name in tr.problem.controls:
        sl = tr.layout.control_slice(name)
        u = z[sl]
        at_hi = np.abs(hi[sl] - u) <= active_tol * np.maximum(1.0, np.abs(hi[sl]))
        at_lo = np.abs(u - lo[sl]) <= active_tol * np.maximum(1.0, np.abs(lo[sl]))
        active = at_hi | at_lo
        for i in np.flatnonzero(np.diff(active.astype(int)) != 0):
            edge = i if active[i] else i + 1
            bound = hi[sl][edge] if at_hi[edge] else lo[sl][edge]
            free = (np.arange(i + 1, min(i + 7, times.size)) if active[i]
                    else np.arange(max(0, i - 5), i + 1))
            guess = 0.5 * (times[i] + times[i + 1])
            if free.size >= 2:
                deg = min(3, free.size - 1)
                coef = np.polynomial.polynomial.polyfit(times[free], u[free] - bound, deg)
                roots = np.polynomial.polynomial.polyroots(coef)
                roots = roots[np.abs(roots.imag) < 1e-12].real
                lo_t, hi_t = times[max(i - 1, 0)], times[min(i + 2, times.size - 1)]
                roots = roots[(roots >= lo_t) & (roots <= hi_t)]
                if roots.size:
                    guess = roots[np.argmin(np.abs(roots - guess))]
            found.append(float(guess))
    keep = []
    for t in sorted(found):
        if t - tr.problem.t0 < 1e-3 * span or tr.problem.tf - t < 1e-3 * span:
            continue
        if keep and t - keep[-1] < 1e-6 * span:
            continue
        keep.append(t)
    return np.array(keep)


# -- convergence studies -------------------------------------------------------
@dataclass
class ConvergenceReport:
    kind: str  # "temporal" (L-infinity) or "spatial" (relative L2)
    problem: str
    point: float
    h: np.ndarray
    errors: np.ndarray
    slope: float
    used: np.ndarray
    reference: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("h", "errors", "used"):
            d[key] = np.asarray(d[key]).tolist()
        return d


def fit_slope(h, errors, floor=0.0):
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    Points with error at or below ``floor`` are left out; the mask of
    points used is returned with the slope.
    """
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    used = errors > floor
    if used.sum() < 2:
        return float("nan"), used
    slope = np.polyfit(np.log(h[used]), np.log(errors[used]), 1)[0]
    return float(slope), used


def _reference_with_switches(config: RunConfig, align: bool, passes: int = 4):
    """Solve the reference, re-pinning its boundaries on estimated switch times."""
    breaks = np.array([])
    tr, rep = solve_config(config)
    for _ in range(passes if align else 0):
        new = estimate_switch_times(tr, rep.x)
        if new.size == breaks.size and (new.size == 0 or np.max(np.abs(new - breaks)) < 1e-10):
            break
        breaks = new
        tr, rep = solve_config(config.with_(breakpoints=tuple(breaks)))
    return tr, rep, tuple(float(b) for b in breaks)


def _require_success(rep: SolveReport, what: str):
    if not rep.success:
        raise RuntimeError(f"{what} did not converge ({rep.status})")


def temporal_self_convergence(
    config: RunConfig,
    coarse_intervals: Sequence[int] = (4, 8, 16, 32),
    refine: int = 4,
    x_c: Optional[float] = None,
    align_switches: bool = True,
) -> ConvergenceReport:
    """L-infinity temporal self-convergence at a fixed spatial point.

    The reference uses ``refine`` times the largest coarse interval count
    with the same points per interval and spatial grid.  The errors are
    taken at ``2 n_t`` equispaced points in every coarse interval, with
    both solutions evaluated through their per-interval Lagrange
    interpolants.  With ``align_switches`` the interval boundaries nearest
    the control switching times of the reference are moved onto them, for
    the reference and for every coarse mesh.
    """
    coarse_intervals = sorted(int(j) for j in coarse_intervals)
    fine_j = refine * coarse_intervals[-1]
    if refine < 2:
        raise ConfigError("the reference must be strictly finer than the coarse meshes")
    x_c = COMPARISON_X[config.problem] if x_c is None else float(x_c)
    fine_cfg = config.with_(intervals=fine_j)
    tr_f, rep_f, breaks = _reference_with_switches(fine_cfg, align_switches)
    _require_success(rep_f, "reference solve")
    problem = tr_f.problem
    notes = []
    if not tr_f.grid.contains_node(x_c):
        notes.append(f"x_c={x_c} is not a grid node; both solutions use the same "
                     "finite-element interpolant there")
    h, errors = [], []
    for J in coarse_intervals:
        cfg = config.with_(intervals=J, breakpoints=breaks)
        tr, rep = solve_config(cfg)
        _require_success(rep, f"coarse solve J={J}")
        edges = interval_edges(problem.t0, problem.tf, J, cfg.grading, breaks)
        times = np.concatenate([np.linspace(edges[j], edges[j + 1], 2 * config.n_t)
                                for j in range(J)])
        diff = state_time_series(tr, rep.x, x_c, times) - state_time_series(tr_f, rep_f.x, x_c, times)
        h.append(float(np.max(np.diff(edges))))
        errors.append(float(np.max(np.abs(diff))))
        log.info("temporal J=%d h=%.3e error=%.3e", J, h[-1], errors[-1])
    slope, used = fit_slope(h, errors, floor=10.0 * config.tol)
    return ConvergenceReport(
        kind="temporal", problem=config.problem, point=x_c, h=np.array(h),
        errors=np.array(errors), slope=slope, used=used,
        reference={"intervals": fine_j, "n_t": config.n_t, "n_nodes": config.n_nodes,
                   "grading": config.grading, "switch_times": list(breaks)},
        notes=notes,
    )


def relative_l2_error(fine, coarse, rel_floor=1e-12):
    """Root-mean-square of the pointwise relative differences.

    Nodes where the fine solution vanishes (below ``rel_floor`` times its
    largest magnitude) are left out; their indices are returned.
    """
    fine = np.asarray(fine, dtype=float)
    coarse = np.asarray(coarse, dtype=float)
    keep = np.abs(fine) > rel_floor * np.max(np.abs(fine))
    rel = (fine[keep] - coarse[keep]) / fine[keep]
    return float(np.sqrt(np.mean(rel**2))), np.flatnonzero(~keep)


def spatial_self_convergence(
    config: RunConfig,
    coarse_elements: Sequence[int] = (4, 8, 16, 32),
    refine: int = 4,
    t_c: Optional[float] = None,
) -> ConvergenceReport:
    """Relative L2 spatial self-convergence at a fixed time.

    All solves share the temporal mesh of ``config``.  The reference has
    ``refine`` times the largest coarse element count and is evaluated at
    the coarse nodes.
    """
    coarse_elements = sorted(int(n) for n in coarse_elements)
    if refine < 2:
        raise ConfigError("the reference must be strictly finer than the coarse meshes")
    problem = PROBLEMS[config.problem]()
    t_c = problem.tf if t_c is None else float(t_c)
    p = config.degree
    fine_cfg = config.with_(n_nodes=p * refine * coarse_elements[-1] + 1)
    tr_f, rep_f = solve_config(fine_cfg)
    _require_success(rep_f, "reference solve")
    if not np.any(np.isclose(tr_f.mesh.support_times(), t_c, rtol=0, atol=1e-12)):
        raise ConfigError("t_c must be a support time of the temporal mesh")
    y_fine = state_at_time(tr_f, rep_f.x, t_c)
    h, errors, notes = [], [], []
    for n_el in coarse_elements:
        cfg = config.with_(n_nodes=p * n_el + 1)
        tr, rep = solve_config(cfg)
        _require_success(rep, f"coarse solve with {n_el} elements")
        y_c = state_at_time(tr, rep.x, t_c)
        y_f = evaluate_solution(tr_f.grid, y_fine, tr.grid.nodes)
        err, dropped = relative_l2_error(y_f, y_c)
        if dropped.size:
            notes.append(f"{n_el} elements: nodes {dropped.tolist()} excluded (zero reference)")
        h.append(1.0 / n_el)
        errors.append(err)
        log.info("spatial elements=%d error=%.3e", n_el, err)
    slope, used = fit_slope(h, errors, floor=10.0 * config.tol)
    return ConvergenceReport(
        kind="spatial", problem=config.problem, point=t_c, h=np.array(h),
        errors=np.array(errors), slope=slope, used=used,
        reference={"elements": refine * coarse_elements[-1], "degree": p,
                   "n_t": config.n_t, "intervals": config.intervals,
                   "grading": config.grading},
        notes=notes,
    )


# -- file outputs --------------------------------------------------------------
def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_benchmark(config: RunConfig, out_dir=None, figures: bool = True):
    """Solve one configuration and write its outputs.

    Files: ``state.csv`` (support times by nodes), ``controls.csv``
    (control values at their times), ``summary.json`` and, with
    ``figures``, ``state.png`` and ``controls.png``.  Returns
    ``(transcription, report, summary)``.
    """
    tr, rep = solve_config(config)
    ref = reference_objective(config.problem, config.mesh_config) if config.backend == "fem" else None
    if config.grading != 1.0 or config.breakpoints:
        ref = None
    summary = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "objective": rep.objective,
        "reference_objective": ref,
        "relative_difference": None if ref is None else rep.objective / ref - 1.0,
        "constraint_violation": rep.constraint_violation,
        "optimality": rep.optimality,
        "iterations": rep.iterations,
        "status": rep.status,
        "success": rep.success,
        "n_variables": tr.layout.size,
        "n_constraints": tr.layout.n_constraints,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        state = tr.unpack(rep.x).state
        times = tr.mesh.support_times()
        write_csv(out / "state.csv", ["t"] + [f"x={x:.10g}" for x in tr.grid.nodes],
                  np.column_stack([times, state]))
        ctrl = control_trajectories(tr, rep.x)
        write_csv(out / "controls.csv", ["t"] + list(ctrl),
                  np.column_stack([tr.control_times()] + list(ctrl.values())))
        _write_json(out / "summary.json", summary)
        if figures:
            plot_solution(tr, rep.x, out / "state.png", out / "controls.png")
    return tr, rep, summary


def write_convergence(report: ConvergenceReport, out_dir, figures: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{report.kind}_convergence"
    write_csv(out / f"{stem}.csv", ["h", "error", "used"],
              np.column_stack([report.h, report.errors, report.used.astype(float)]))
    _write_json(out / f"{stem}.json", report.to_dict())
    if figures:
        plot_convergence(report, out / f"{stem}.png")


def export_sparsity(config: RunConfig, path, figure: bool = True):
    """Write the constraint Jacobian pattern as a 1-based coordinate list."""
    tr = make_transcription(config)
    pattern = tr.pattern()
    header = (f"problem {config.problem} backend {config.backend} n_t {config.n_t} "
              f"intervals {config.intervals} n_nodes {config.n_nodes} degree {config.degree}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pattern.write(path, header)
    if figure:
        plot_sparsity(pattern, path.with_suffix(".png"))
    return pattern


# -- figures -------------------------------------------------------------------
def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> None:
    fig.savefig(path, dpi=120, metadata={"Software": None})
    _pyplot().close(fig)


def plot_solution(tr, z, state_path, controls_path) -> None:
    plt = _pyplot()
    state = tr.unpack(z).state
    times = tr.mesh.support_times()
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(tr.grid.nodes, times, state, shading="gouraud")
    fig.colorbar(mesh, ax=ax, label="y")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(f"{tr.problem.name}: optimal state")
    _save(fig, state_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    t = tr.control_times()
    for name, u in control_trajectories(tr, z).items():
        ax.plot(t, u, marker=".", label=name)
    lo, hi = tr.bounds()
    sl = tr.layout.control_slice(tr.problem.controls[0])
    for b in (lo[sl], hi[sl]):
        if np.all(np.abs(b) < 1e18):
            ax.plot(t, b, "k--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.legend()
    ax.set_title(f"{tr.problem.name}: optimal controls")
    _save(fig, controls_path)


def plot_convergence(report: ConvergenceReport, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(report.h, report.errors, "o-", label=f"slope {report.slope:.2f}")
    ax.set_xlabel("interval width h" if report.kind == "temporal" else "element width h")
    ax.set_ylabel("L-infinity error" if report.kind == "temporal" else "relative L2 error")
    ax.set_title(f"{report.problem}: {report.kind} self-convergence")
    ax.legend()
    ax.grid(True, which="both", lw=0.3)
    _save(fig, path)


def plot_sparsity(pattern, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.spy(pattern.to_matrix(), markersize=1.5)
    ax.set_title(f"nnz = {pattern.nnz}")
    _save(fig, path)
