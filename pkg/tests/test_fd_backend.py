import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from radaupde.derivatives import fd_jacobian, fd_verify
from radaupde.fd_backend import (
    FdTranscription,
    fd_operators,
    fd_semidiscretize,
    fd_transcribe,
    trapezoid_weights,
)
from radaupde.mesh import build_spatial_grid, grid_from_nodes, uniform_temporal_mesh
from radaupde.nlp import SolveOptions, solve
from radaupde.problems import burgers_problem, heat_problem

from conftest import random_point


def _fd(n_nodes=6, n_t=3, J=2, problem=None):
    mesh = uniform_temporal_mesh(0.0, 1.0, J, n_t)
    return FdTranscription(problem or burgers_problem(), mesh, build_spatial_grid(n_nodes - 1))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 20), c=st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_stencils_exact_for_quadratics(n, c):
    x = np.linspace(0, 1, n)
    y = c[0] + c[1] * x + c[2] * x**2
    ops = fd_operators(x)
    np.testing.assert_allclose(ops.Dx @ y, c[1] + 2 * c[2] * x[1:-1], atol=1e-9)
    np.testing.assert_allclose(ops.Dxx @ y, 2 * c[2], atol=1e-7)
    _, boundary = fd_semidiscretize(x, burgers_problem())
    left, right = boundary(y, c[1], c[1] + 2 * c[2])
    assert abs(left) < 1e-9 and abs(right) < 1e-9


def test_trapezoid_weights():
    x = np.linspace(0, 1, 5)
    w = trapezoid_weights(x)
    np.testing.assert_allclose(w, [0.125, 0.25, 0.25, 0.25, 0.125])
    assert w @ (3 * x + 1) == pytest.approx(2.5)


def test_operator_preconditions():
    with pytest.raises(ValueError):
        fd_operators([0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        fd_operators([0.0, 0.1, 0.5, 1.0])
    mesh = uniform_temporal_mesh(0.0, 0.5, 2, 2)
    with pytest.raises(ValueError):
        FdTranscription(heat_problem(), mesh, build_spatial_grid(5))
    with pytest.raises(ValueError):
        FdTranscription(burgers_problem(), mesh, build_spatial_grid(4, degree=2))
    with pytest.raises(ValueError):
        FdTranscription(burgers_problem(), mesh, grid_from_nodes([0.0, 0.2, 0.3, 1.0]))


def test_constant_state_residual_vanishes():
    tr = _fd()
    dv = tr.unpack(np.zeros(tr.layout.size))
    dv.state[:] = 0.4
    dv.tf = 1.0
    assert np.max(np.abs(tr.dynamics_residual(tr.pack(dv)))) < 1e-14


def test_derivatives_match_finite_differences(rng):
    tr = _fd()
    z = random_point(tr, rng)
    report = fd_verify(tr, z)
    assert report.worst < 1e-6 and report.pattern_misses == 0
    lam = rng.normal(size=tr.layout.n_constraints)
    H = tr.hessian(z, lam).toarray()
    H_fd = fd_jacobian(lambda v: tr.gradient(v) + tr.jacobian(v).T @ lam, z)
    inner = slice(0, tr.layout.size - 2)
    err = np.max(np.abs(H[inner, inner] - H_fd[inner, inner])) / np.max(np.abs(H_fd))
    assert err < 1e-6
    np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_fixed_control_solution_matches_method_of_lines_integration():
    """Solve with controls pinned by their bounds; compare with solve_ivp."""
    u = 0.01
    prob = dataclasses.replace(burgers_problem(), control_lower=u, control_upper=u)
    n_nodes = 11
    nlp = fd_transcribe(uniform_temporal_mesh(0.0, 1.0, 8, 5), build_spatial_grid(n_nodes - 1), prob)
    rep = solve(nlp, SolveOptions(tol=1e-12))
    assert rep.success
    tr = nlp.transcription
    dv = tr.unpack(rep.x)

    x = tr.grid.nodes
    h = x[1] - x[0]
    interior_rhs, _ = fd_semidiscretize(x, prob)

    def full_state(inner):
        y = np.empty(n_nodes)
        y[1:-1] = inner
        y[0] = (4 * y[1] - y[2] - 2 * h * u) / 3
        y[-1] = (4 * y[-2] - y[-3] + 2 * h * u) / 3
        return y

    ts = tr.mesh.support_times()
    sol = solve_ivp(lambda t, v: interior_rhs(full_state(v), t), (0.0, 1.0),
                    prob.initial(x)[1:-1], t_eval=ts[1:], rtol=1e-11, atol=1e-13, method="Radau")
    ref = np.array([full_state(v) for v in sol.y.T])
    assert np.max(np.abs(dv.state[1:] - ref)) < 1e-6


def test_pattern_and_bounds_follow_the_shared_layout():
    tr = _fd()
    lo, hi = tr.bounds()
    sl = tr.layout.control_slice("u2")
    assert np.all(lo[sl] == -0.015) and np.all(hi[sl] == 0.015)
    assert lo[-1] == hi[-1] == 1.0
    pat = tr.pattern()
    assert pat.shape == (tr.layout.n_constraints, tr.layout.size)
