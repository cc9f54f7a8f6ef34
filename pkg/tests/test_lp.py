import itertools

import numpy as np
import pytest

from paroforge.lp import LpProblem, LpStatus, solve_lp, solve_milp

from oracles import brute_force_lp


def random_lp(rng):
    n = int(rng.integers(1, 7))
    k = int(rng.integers(1, 11))
    A = rng.integers(-5, 6, size=(k, n)).astype(float)
    b = rng.integers(-3, 10, size=k).astype(float)
    lb = -rng.integers(0, 4, size=n).astype(float)
    ub = rng.integers(1, 5, size=n).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    return c, A, b, lb, ub


def test_trivial_examples():
    sol = solve_lp(LpProblem.build([-1, -1], [[1, 1]], [1], lb=0))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-1)
    sol = solve_lp(LpProblem.build([1], [[1]], [-1], lb=0))
    assert sol.status is LpStatus.INFEASIBLE


def test_unbounded():
    sol = solve_lp(LpProblem.build([-1, 0], [[0, 1]], [1], lb=0))
    assert sol.status is LpStatus.UNBOUNDED


def test_equalities_and_free_variables():
    # min x + 2y  s.t.  x + y = 3, x - y <= 1, y free, x >= 0
    sol = solve_lp(LpProblem.build([1, 2], [[1, -1]], [1], A_eq=[[1, 1]], b_eq=[3], lb=[0, -np.inf]))
    assert sol.ok
    np.testing.assert_allclose(sol.x, [2, 1], atol=1e-9)


def test_random_lps_match_brute_force():
    rng = np.random.default_rng(11)
    counts = {"optimal": 0, "infeasible": 0}
    for _ in range(200):
        c, A, b, lb, ub = random_lp(rng)
        expected = brute_force_lp(c, A, b, lb, ub)
        p = LpProblem.build(c, A, b, lb=lb, ub=ub)
        sol = solve_lp(p)
        if np.isinf(expected):
            assert sol.status is LpStatus.INFEASIBLE
            counts["infeasible"] += 1
        else:
            assert sol.ok
            assert sol.objective == pytest.approx(expected, abs=1e-7)
            counts["optimal"] += 1
    assert counts["optimal"] > 100 and counts["infeasible"] > 0


def test_duality_and_complementary_slackness():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(100):
        c, A, b, lb, ub = random_lp(rng)
        p = LpProblem.build(c, A, b, lb=lb, ub=ub)
        sol = solve_lp(p)
        if not sol.ok:
            continue
        checked += 1
        assert np.all(sol.slack(p) >= -1e-7)
        assert np.all(sol.duals <= 1e-12)
        np.testing.assert_allclose(A.T @ sol.duals + sol.reduced_costs, c, atol=1e-9)
        assert sol.dual_objective(p) == pytest.approx(sol.objective, abs=1e-6 * (1 + abs(sol.objective)))
        assert np.all(np.abs(sol.duals * sol.slack(p)) <= 1e-6)
    assert checked > 50


def test_deterministic_basis():
    rng = np.random.default_rng(3)
    c, A, b, lb, ub = random_lp(rng)
    p = LpProblem.build(c, A, np.abs(b) + 1, lb=lb, ub=ub)
    assert solve_lp(p).basis == solve_lp(p).basis


def test_degenerate_problem_terminates():
    # many constraints through the optimum
    A = np.array([[1, 1], [1, 2], [2, 1], [1, 0], [0, 1], [3, 3]], float)
    b = np.array([2, 3, 3, 1, 1, 6], float)
    sol = solve_lp(LpProblem.build([-1, -1], A, b, lb=0))
    assert sol.ok and sol.objective == pytest.approx(-2)


def test_milp_small_example():
    sol = solve_milp(LpProblem.build([-3, -2], [[1, 1]], [1], binary=[True, True]))
    assert sol.ok
    assert -sol.objective == pytest.approx(3)
    np.testing.assert_allclose(sol.x, [1, 0])


def test_milp_integral_relaxation_does_not_branch():
    p = LpProblem.build([-1, -1], [[1, 0], [0, 1]], [1, 1], binary=[True, True])
    sol = solve_milp(p)
    assert sol.nodes == 1
    assert sol.objective == pytest.approx(solve_lp(p.relaxed()).objective)


@pytest.mark.parametrize("backend", ["simplex", "bnb-highs", "highs"])
def test_knapsacks_match_enumeration(backend):
    rng = np.random.default_rng(21)
    for _ in range(50):
        n = int(rng.integers(1, 11))
        w = rng.integers(1, 20, size=n).astype(float)
        v = rng.integers(1, 30, size=n).astype(float)
        cap = float(rng.integers(1, int(w.sum()) + 1))
        best = max(v @ np.array(bits) for bits in itertools.product([0, 1], repeat=n)
                   if w @ np.array(bits) <= cap)
        sol = solve_milp(LpProblem.build(-v, [w], [cap], binary=np.ones(n, bool)), backend=backend)
        assert sol.ok
        assert -sol.objective == pytest.approx(best, abs=1e-9)
        assert w @ sol.x <= cap + 1e-9


def test_binary_bounds_checked():
    p = LpProblem(np.ones(1), np.zeros((0, 1)), np.zeros(0), np.array([-1.0]), np.array([1.0]),
                  np.array([True]))
    with pytest.raises(ValueError):
        solve_milp(p)


def test_highs_backend_agrees():
    rng = np.random.default_rng(8)
    for _ in range(30):
        c, A, b, lb, ub = random_lp(rng)
        p = LpProblem.build(c, A, b, lb=lb, ub=ub)
        a, h = solve_lp(p), solve_lp(p, backend="highs")
        assert a.status == h.status
        if a.ok:
            assert a.objective == pytest.approx(h.objective, abs=1e-7)
