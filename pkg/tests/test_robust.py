import numpy as np
import pytest

from paroforge.fme import eliminate
from paroforge.geometry import sample_uniform, vertices_of
from paroforge.model import UncertaintySet, evaluate
from paroforge.robust import (
    BackSubstitutionRule,
    LinearDecisionRule,
    LinearRule,
    OptimalRecourseRule,
    RecourseInfeasibleError,
    RobustInfeasibleError,
    RuleInfeasibleError,
    StaticRule,
    optimal_recourse,
    solve_aro_vertices,
    solve_static_ldr,
    worst_case,
)
from paroforge.toy import (
    constraintwise_example,
    greedy_example,
    hybrid_example,
    radiation_therapy,
    simplex_example,
)

from instances import random_box_problem, random_rhs_problem


@pytest.mark.parametrize("delta", [0.5, 1.0])
def test_radiation_therapy_opt(delta):
    res = solve_aro_vertices(radiation_therapy(delta))
    assert res.opt == pytest.approx(60 * delta, abs=1e-9)
    assert res.OPT == res.opt
    assert 20 - 1e-9 <= res.x[0] <= 40 + 1e-9


@pytest.mark.parametrize("make", [constraintwise_example, hybrid_example, simplex_example])
def test_examples_have_x_one_half(make):
    res = solve_aro_vertices(make())
    assert res.x[0] == pytest.approx(0.5, abs=1e-9)
    assert res.opt == pytest.approx(0.5, abs=1e-9)


def test_per_vertex_recourse_feasible():
    p = radiation_therapy()
    res = solve_aro_vertices(p)
    for z, y in zip(res.vertices, res.per_vertex_y):
        assert evaluate(p, res.x, y, z).feasible()


def test_robust_infeasible():
    p = radiation_therapy()
    # demand up to 90 cannot be met with x, y <= 40
    U = UncertaintySet.box([50, 50], [90, 60])
    with pytest.raises(RobustInfeasibleError):
        solve_aro_vertices(p.replace(uncertainty=U))


@pytest.mark.parametrize("z,y,obj", [((50, 55), 30, 27.5), ((60, 60), 35, 30), ((50, 50), 25, 25)])
def test_optimal_recourse_table(z, y, obj):
    rec = optimal_recourse(radiation_therapy(), [25], z)
    assert rec.y[0] == pytest.approx(y, abs=1e-9)
    assert rec.objective == pytest.approx(obj, abs=1e-9)
    assert rec.basis is not None


def test_optimal_recourse_infeasible():
    with pytest.raises(RecourseInfeasibleError):
        optimal_recourse(radiation_therapy(), [10], [60, 60])


def test_worst_case_optimal_recourse_ties():
    wc = worst_case(radiation_therapy(), [25], OptimalRecourseRule())
    assert wc.value == pytest.approx(30)
    # (50, 60), (60, 50) and (60, 60) all reach 30; the lowest index wins
    assert wc.values[wc.index] == pytest.approx(30)
    assert wc.index == int(np.flatnonzero(np.isclose(wc.values, 30))[0])
    assert wc.exact


def test_worst_case_static_rule():
    wc = worst_case(radiation_therapy(), [25], StaticRule([35]))
    assert wc.value == pytest.approx(30)
    np.testing.assert_allclose(wc.values, 30)


def test_worst_case_infeasible_rule():
    with pytest.raises(RuleInfeasibleError):
        worst_case(radiation_therapy(), [25], StaticRule([20]))


def test_worst_case_equals_opt_for_aro_solution():
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = random_rhs_problem(rng)
        res = solve_aro_vertices(p)
        assert worst_case(p, res.x, OptimalRecourseRule()).value == pytest.approx(res.opt, abs=1e-7)


def test_worst_case_refuses_uncertain_a():
    rng = np.random.default_rng(1)
    p = random_box_problem(rng)
    with pytest.raises(ValueError, match="constant in z"):
        worst_case(p, np.zeros(p.n_x), OptimalRecourseRule())


def test_worst_case_with_uncertain_a_bounds_interior():
    # with z in A, the vertex maximum still bounds every sampled interior scenario
    rng = np.random.default_rng(3)
    done = 0
    while done < 5:
        p = random_box_problem(rng)
        try:
            res = solve_aro_vertices(p)
        except (RobustInfeasibleError, RuntimeError):
            continue
        wc = worst_case(p, res.x, OptimalRecourseRule(), allow_uncertain_a=True)
        for z in sample_uniform(p.uncertainty, 20, seed=0):
            assert optimal_recourse(p, res.x, z).objective <= wc.value + 1e-7
        done += 1


def test_back_substitution_rule_not_exact():
    p = greedy_example()
    rule = BackSubstitutionRule(eliminate(p))
    wc = worst_case(p, [0.5], rule)
    assert not wc.exact


def test_static_ldr_constraintwise():
    res = solve_static_ldr(constraintwise_example(), np.zeros((2, 3), bool))
    assert res.x[0] == pytest.approx(0.5)
    np.testing.assert_allclose(res.rule.w, [1.0, 1.5], atol=1e-9)
    np.testing.assert_allclose(res.rule.W, 0.0, atol=1e-12)


def test_hybrid_ldr_in_shared_parameter():
    mask = np.zeros((2, 4), bool)
    mask[:, 0] = True
    res = solve_static_ldr(hybrid_example(), mask)
    assert res.x[0] == pytest.approx(0.5)
    assert res.rule.w[1] == pytest.approx(1.5)
    np.testing.assert_allclose(res.rule.W[1], [0.5, 0, 0, 0], atol=1e-9)
    np.testing.assert_allclose(res.rule.W[:, 1:], 0.0)


def test_simplex_ldr_and_upper_rule():
    p = simplex_example()
    res = solve_static_ldr(p)
    assert res.x[0] == pytest.approx(0.5)
    assert res.value == pytest.approx(0.5)
    upper = LinearDecisionRule(LinearRule([1.0, 1.5], [[0.5, 0, 0.5], [0.5, 0, 0.5]]))
    wc = worst_case(p, [0.5], upper)
    assert wc.value == pytest.approx(0.5)


def test_static_rule_on_radiation_therapy():
    p = radiation_therapy()
    res = solve_static_ldr(p, np.zeros((1, 2), bool))
    assert res.value == pytest.approx(30)
    assert res.x[0] + res.rule.w[0] == pytest.approx(60)


def test_decision_rule_hierarchy():
    rng = np.random.default_rng(4)
    for _ in range(15):
        p = random_rhs_problem(rng)
        opt = solve_aro_vertices(p).opt
        ldr = solve_static_ldr(p).value
        static = solve_static_ldr(p, np.zeros((p.n_y, p.L), bool))
        wc_static = worst_case(p, static.x, StaticRule(static.rule.w)).value
        assert opt <= ldr + 1e-7
        assert ldr <= wc_static + 1e-7


def test_linear_rule_algebra():
    a = LinearRule([1.0], [[2.0, 0.0]])
    b = LinearRule([0.5], [[0.0, 1.0]])
    np.testing.assert_allclose((a + b)([1.0, 2.0]), [1 + 2 + 0.5 + 2])
    with pytest.raises(ValueError):
        LinearRule([np.nan], [[0.0]])


def _recourse_value(p, x, z):
    return optimal_recourse(p, x, z).objective


def test_recourse_value_convex_along_segments():
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = random_rhs_problem(rng)
        x = solve_aro_vertices(p).x
        Z = sample_uniform(p.uncertainty, 40, seed=1)
        for a, b in zip(Z[::2], Z[1::2]):
            mid = _recourse_value(p, x, 0.5 * (a + b))
            assert mid <= 0.5 * (_recourse_value(p, x, a) + _recourse_value(p, x, b)) + 1e-7


def test_recourse_value_affine_on_constant_basis():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(10):
        p = random_rhs_problem(rng)
        x = solve_aro_vertices(p).x
        for a in sample_uniform(p.uncertainty, 10, seed=2):
            b = a + 1e-2 * rng.normal(size=p.L)
            if not p.uncertainty.contains(b):
                continue
            ra, rb, rm = (optimal_recourse(p, x, z) for z in (a, b, 0.5 * (a + b)))
            if ra.basis == rb.basis == rm.basis:
                assert rm.objective == pytest.approx(0.5 * (ra.objective + rb.objective), abs=1e-7)
                checked += 1
    assert checked >= 20
