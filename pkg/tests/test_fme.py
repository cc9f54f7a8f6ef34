import numpy as np
import pytest
from scipy.optimize import linprog

from paroforge.fme import (
    BoundKind,
    EliminationBlowupError,
    EmptyIntervalError,
    eliminate,
    filter_redundant,
    recourse_intervals,
    reconstruct_recourse,
)
from paroforge.geometry import vertices_of
from paroforge.model import TwoStageProblem, UncertaintySet, epigraph, evaluate
from paroforge.robust import solve_aro_vertices
from paroforge.toy import greedy_example, hybrid_example, radiation_therapy

from instances import random_box_problem, random_rhs_problem


def row_signatures(rows):
    """Each row as ``(G0 | Gt | -F | -f0)`` scaled to unit max-norm, so ``sig @ (x, z x, z, 1) <= 0``."""
    out = []
    for i in range(rows.count):
        v = np.concatenate([rows.G0[i], rows.Gt[:, i, :].ravel(), -rows.F[i], [-rows.f0[i]]])
        out.append(v / np.max(np.abs(v)))
    return np.array(out)


def contains_rows(sig, expected):
    return all(any(np.allclose(s, e, atol=1e-9) for s in sig) for e in expected)


def stage2_feasible(problem, x, z):
    res = linprog(np.zeros(problem.n_y), A_ub=problem.B, b_ub=problem.r_at(z) - problem.A_at(z) @ x,
                  bounds=(None, None), method="highs")
    return res.status == 0


def static_feasible(result, x, z, tol=1e-6):
    return bool(np.all(result.system.residual(x, z) <= tol))


def test_radiation_therapy_epigraph_families():
    delta = 0.5
    res = eliminate(epigraph(radiation_therapy(delta)))
    assert res.complete and res.rows_before == 7
    # variables (x, t), parameters (z1, z2): row layout (x, t, -z1, -z2, -const)
    fams = [
        [0, -1 / delta, 1, 0, 0],        # z1 <= t / delta
        [0, -1 / delta, 0, 1, 0],        # z2 <= t / delta
        [1, -1 / delta, 0, 0, 20],       # 20 <= t / delta - x
        [-1, 0, 1, 0, -40],              # z1 - x <= 40
        [-1, 0, 0, 1, -40],              # z2 - x <= 40
    ]
    fams = [np.array(f, float) / np.max(np.abs(f)) for f in fams]
    trivial = np.array([0, 0, 0, 0, -20.0]) / 20.0   # 0 <= 20, from 20 <= y <= 40
    sig = row_signatures(res.system)
    # Gt is zero here; drop its columns from the comparison
    sig = np.hstack([sig[:, :2], sig[:, -3:]])
    assert contains_rows(sig, fams)
    assert contains_rows(sig, [trivial])
    filtered = filter_redundant(res, "syntactic")
    assert filtered.rows_after == res.rows_after - 1
    fsig = row_signatures(filtered.system)
    fsig = np.hstack([fsig[:, :2], fsig[:, -3:]])
    assert contains_rows(fsig, fams)
    assert not contains_rows(fsig, [trivial])


def test_no_stage2_variables():
    U = UncertaintySet.box([0], [1])
    p = TwoStageProblem.create(c0=[1.0], d=np.zeros(0), A0=[[1.0], [-1.0]], B=np.zeros((2, 0)),
                               r0=[2.0, 0.0], R=[[1.0], [0.0]], uncertainty=U)
    res = eliminate(p)
    assert res.ledger == {} and res.complete
    np.testing.assert_array_equal(res.system.G0, p.A0)
    np.testing.assert_array_equal(res.system.f0, p.r0)
    np.testing.assert_array_equal(res.system.F, p.R)


def test_partial_elimination_keeps_remaining_variables():
    p = hybrid_example()
    res = eliminate(p, count=1)
    assert not res.complete and res.order == (0,)
    assert res.system.has_stage2()
    with pytest.raises(ValueError):
        reconstruct_recourse(res, [0.5], np.zeros(p.L))


def test_custom_order_and_bad_order():
    p = hybrid_example()
    assert eliminate(p, order=[1, 0]).order == (1, 0)
    with pytest.raises(ValueError):
        eliminate(p, order=[0, 0])


def test_sign_and_representation_of_bound_records():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_box_problem(rng, n_y_max=3, m_max=6)
        res = eliminate(p)
        x, z, y = rng.normal(size=p.n_x), rng.normal(size=p.L), rng.normal(size=p.n_y)
        phi = p.r_at(z) - p.A_at(z) @ x
        for k, (lo, up) in res.ledger.items():
            for rec in lo + up:
                assert rec.variable == k
                signs = np.sign(list(rec.alpha.values()))
                assert np.all(signs == (-1 if rec.kind is BoundKind.LOWER else 1))
                expected = sum(a * phi[i] for i, a in rec.alpha.items()) + \
                    sum(b * y[l] for l, b in rec.beta.items())
                assert rec.value(x, z, y) == pytest.approx(expected, abs=1e-8)


def test_static_system_matches_stage2_feasibility():
    rng = np.random.default_rng(1)
    mismatches = 0
    for _ in range(40):
        p = random_box_problem(rng)
        res = eliminate(p)
        V = vertices_of(p.uncertainty)
        for _ in range(10):
            x = 2 * rng.normal(size=p.n_x)
            a = all(static_feasible(res, x, z) for z in V)
            b = all(stage2_feasible(p, x, z) for z in V)
            mismatches += a != b
    assert mismatches == 0


def test_duplicate_row_removed():
    p = radiation_therapy()
    dup = p.replace(A0=np.vstack([p.A0, p.A0[:1]]), B=np.vstack([p.B, p.B[:1]]),
                    r0=np.append(p.r0, p.r0[0]), R=np.vstack([p.R, p.R[:1]]),
                    A=np.concatenate([p.A, p.A[:, :1]], axis=1))
    a = filter_redundant(eliminate(p), "syntactic")
    b = filter_redundant(eliminate(dup), "syntactic")
    assert b.rows_after == a.rows_after
    assert eliminate(dup).rows_after > eliminate(p).rows_after


def _static_opt(problem, result):
    """min t over the static system of the epigraph problem, enforced at every vertex."""
    V = vertices_of(problem.uncertainty)
    n = problem.n_x
    G = np.vstack([result.system.G_at(z) for z in V])
    f = np.concatenate([result.system.f_at(z) for z in V])
    c = np.zeros(n)
    c[-1] = 1.0
    sol = linprog(c, A_ub=G, b_ub=f, bounds=(None, None), method="highs")
    assert sol.status == 0
    return sol.fun


@pytest.mark.parametrize("level", ["none", "syntactic", "lp"])
def test_filters_preserve_worst_case_value(level):
    rng = np.random.default_rng(6)
    for _ in range(8):
        p = random_rhs_problem(rng)
        e = epigraph(p)
        res = eliminate(e)
        kw = {"vertices": vertices_of(e.uncertainty)} if level == "lp" else {}
        filtered = filter_redundant(res, level, **kw)
        assert filtered.rows_after <= res.rows_after
        opt = solve_aro_vertices(p).opt
        assert _static_opt(e, filtered) == pytest.approx(opt, abs=1e-7)


def test_lp_filter_needs_vertices():
    with pytest.raises(ValueError):
        filter_redundant(eliminate(radiation_therapy()), "lp")


def test_blowup_guard(monkeypatch):
    import paroforge.fme as fme

    monkeypatch.setattr(fme, "MAX_ROWS", 3)
    with pytest.raises(EliminationBlowupError):
        eliminate(radiation_therapy())


def test_greedy_example_back_substitution():
    res = eliminate(greedy_example())
    y = reconstruct_recourse(res, [0.5], [0, 1, 0, 0], "objective-greedy")
    np.testing.assert_allclose(y, [1.0, 1.5], atol=1e-9)
    y = reconstruct_recourse(res, [0.5], [1, 1, 0, 0], "objective-greedy")
    np.testing.assert_allclose(y, [1.5, 2.0], atol=1e-9)


@pytest.mark.parametrize("policy", ["lower", "upper", "midpoint", "objective-greedy"])
def test_hybrid_example_interval_is_a_point(policy):
    p = hybrid_example()
    res = eliminate(p)
    for zhat, expected in ((0, 1.5), (1, 2.0)):
        y = reconstruct_recourse(res, [0.5], [zhat, 1, 0, 0], policy)
        assert y[1] == pytest.approx(expected, abs=1e-9)


def test_reconstructed_recourse_is_feasible():
    rng = np.random.default_rng(12)
    checked = 0
    for _ in range(30):
        p = random_box_problem(rng, n_y_max=3, m_max=6)
        res = eliminate(p)
        V = vertices_of(p.uncertainty)
        for _ in range(5):
            x = rng.normal(size=p.n_x)
            z = V[rng.integers(len(V))]
            if not static_feasible(res, x, z, 1e-9):
                continue
            for policy in ("lower", "upper", "midpoint", "objective-greedy"):
                try:
                    y = reconstruct_recourse(res, x, z, policy)
                except EmptyIntervalError:
                    continue
                assert evaluate(p, x, y, z).slack.min() >= -1e-6
                checked += 1
    assert checked > 50


def test_policies_bracket_midpoint():
    rng = np.random.default_rng(13)
    for _ in range(30):
        p = random_box_problem(rng, n_y_max=3, m_max=6)
        res = eliminate(p)
        x, z = rng.normal(size=p.n_x), vertices_of(p.uncertainty)[0]
        if not static_feasible(res, x, z, 1e-9):
            continue
        y, lows, ups = recourse_intervals(res, x, z, "midpoint")
        assert np.all(lows <= y + 1e-9) and np.all(y <= ups + 1e-9)
        # the first variable substituted sees the same interval under every policy
        k = res.order[-1]
        lo = reconstruct_recourse(res, x, z, "lower")[k]
        up = reconstruct_recourse(res, x, z, "upper")[k]
        assert lo - 1e-9 <= y[k] <= up + 1e-9


def test_static_row_violation_reported():
    res = eliminate(radiation_therapy())
    with pytest.raises(ValueError, match="violates"):
        reconstruct_recourse(res, [10.0], [55, 55])


def test_to_dict_is_json_ready():
    import json

    json.dumps(eliminate(radiation_therapy()).to_dict())
