import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radaupde.nlp import SolveOptions, build_nlp, solve
from radaupde.problems import (
    BURGERS_REFERENCE,
    HEAT_A1,
    HEAT_A2,
    HEAT_A3,
    HEAT_A4,
    HEAT_RHO,
    MeshConfig,
    PROBLEMS,
    burgers_problem,
    cosine_control_bound,
    flgr_vs_lgr_demo,
    heat_exact_control,
    heat_exact_state,
    heat_initial,
    heat_problem,
    heat_source,
    heat_source_dt,
    heat_target,
    reference_objective,
    transcribe,
)


def test_burgers_constants():
    p = burgers_problem()
    assert (p.t0, p.tf) == (0.0, 1.0)
    assert (p.control_lower, p.control_upper) == (-0.015, 0.015)
    assert p.objective.control_weight == 0.01
    assert p.diffusion.slope(0.0) == 0.1
    assert p.neumann_scale == 0.1
    assert p.controls == ("u1", "u2")
    np.testing.assert_allclose(p.initial(np.array([0.0, 0.5, 1.0])), [0.0, 0.0625, 0.0])
    assert np.all(p.objective.target(np.linspace(0, 1, 4), 0.3) == 0.035)


def test_heat_constants_and_compatibility():
    p = heat_problem()
    assert p.tf == 0.5 and p.controls == ("u1",)
    assert p.objective.control_weight == 1e-3 and p.objective.boundary
    assert p.control_upper == 0.1 and p.control_lower <= -1e18
    assert p.robin_coefficient == 1.0
    # the initial profile at x = 1 meets the target at t = 0
    assert heat_initial(1.0) == pytest.approx(1.0)
    assert heat_target(0.0) == pytest.approx(1.0)
    assert heat_exact_state(0.3, 0.0) == pytest.approx(heat_initial(0.3))


def test_cosine_bound_values():
    np.testing.assert_allclose(cosine_control_bound(np.array([0.0, 0.125, 0.25, 0.5])),
                               [0.1, 0.05, 0.0, 0.1], atol=1e-15)
    assert heat_problem(constrained=True).control_upper is cosine_control_bound


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.05, 0.95), t=st.floats(0.0, 0.5))
def test_source_makes_exact_state_a_solution(x, t):
    """C'(y) y_t - d/dx (B'(y) y_x) equals the source for the exact state."""
    h = 1e-4
    y = heat_exact_state

    def capacity_slope(s):
        return HEAT_A1 + HEAT_A2 * s

    def kirchhoff(s):
        return HEAT_A3 * s + 0.5 * HEAT_A4 * s * s

    y_t = (y(x, t + h) - y(x, t - h)) / (2 * h)
    b_xx = (kirchhoff(y(x + h, t)) - 2 * kirchhoff(y(x, t)) + kirchhoff(y(x - h, t))) / h**2
    assert capacity_slope(y(x, t)) * y_t - b_xx == pytest.approx(heat_source(x, t), abs=1e-5)
    q_t = (heat_source(x, t + h) - heat_source(x, t - h)) / (2 * h)
    assert heat_source_dt(x, t) == pytest.approx(q_t, abs=1e-6)


def test_exact_solution_satisfies_boundary_conditions():
    t = np.linspace(0, 0.5, 7)
    h = 1e-6
    slope0 = (heat_exact_state(h, t) - heat_exact_state(0.0, t)) / h
    np.testing.assert_allclose(slope0, 0.0, atol=1e-5)
    # Robin: zero flux and y(0, t) equal to the exact control
    np.testing.assert_allclose(heat_exact_state(0.0, t), heat_exact_control(t), atol=1e-15)
    assert HEAT_RHO == -1.0


def test_manufactured_solution_converges_at_second_order():
    base = heat_problem()
    prob = dataclasses.replace(base, control_lower=heat_exact_control,
                               control_upper=heat_exact_control)
    errors = []
    for n_el in (4, 8, 16):
        tr = transcribe(prob, MeshConfig(4, 4, n_el + 1))
        rep = solve(build_nlp(tr), SolveOptions(tol=1e-12))
        assert rep.success
        dv = tr.unpack(rep.x)
        exact = heat_exact_state(tr.grid.nodes[None, :], tr.mesh.support_times()[:, None])
        errors.append(np.max(np.abs(dv.state - exact)))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    # observed error ratios are about 3.96 and 3.99
    assert np.all(rates > 1.9), errors


def test_flipped_rule_covers_every_column():
    res = flgr_vs_lgr_demo(burgers_problem(), MeshConfig(3, 2, 5))
    assert res.flipped_ok
    assert res.standard_empty_names == ["u1[5]", "u2[5]"]
    np.testing.assert_array_equal(res.standard_empty_columns, [40, 46])
    assert res.n_columns == 49


def test_mesh_config_validation_and_keys():
    cfg = MeshConfig(5, 3, 34)
    assert cfg.key == (5, 3, 34) and cfg.n_elements == 33
    assert MeshConfig(3, 2, 9, degree=2).n_elements == 4
    for bad in (dict(n_t=0), dict(degree=3), dict(n_nodes=2), dict(n_nodes=8, degree=2)):
        with pytest.raises(ValueError):
            MeshConfig(**bad)


def test_reference_lookup():
    assert reference_objective("burgers", MeshConfig(5, 3, 34)) == BURGERS_REFERENCE[(5, 3, 34)]
    assert reference_objective("heat", MeshConfig(7, 3, 50)) == 3.8283491e-5
    assert reference_objective("heat-constrained", MeshConfig(3, 17, 50)) == 3.8669419e-5
    assert reference_objective("burgers", MeshConfig(5, 3, 33)) is None
    assert reference_objective("burgers", MeshConfig(5, 3, 35, degree=2)) is None
    assert set(PROBLEMS) == {"burgers", "heat", "heat-constrained"}
