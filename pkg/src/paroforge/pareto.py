"""Pareto refinement of worst-case optimal Stage-1 decisions.

The improvement problem compares a fixed Stage-1 decision ``x_hat`` against
any other worst-case optimal ``x_bar`` and looks for the scenario where the
gap ``value(x_bar, z) - value(x_hat, z)`` is most negative.  Both solvers
here are local alternating schemes, so their results are never certified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import interior_point, is_simplex, sample_uniform, vertices_of
from .lp import LpProblem, LpStatus, solve_lp
from .model import TwoStageProblem, detect_structure
from .robust import (
    DecisionRule,
    LdrLayout,
    LdrResult,
    LinearRule,
    OptimalRecourseRule,
    RecourseInfeasibleError,
    RobustInfeasibleError,
    _solve,
    ldr_rows,
    optimal_recourse,
    recourse_lp,
    solve_aro_vertices,
    solve_static_ldr,
    split_rows,
    stage1_bounds,
    worst_case,
)

CONV_TOL = 1e-7
MAX_ITERS = 100
DEFAULT_SAMPLES = 4


def _require_rhs(problem: TwoStageProblem) -> None:
    if not problem.rhs_only:
        raise ValueError("this method needs right-hand-side uncertainty only (A and c constant in z)")


# -- value ledger -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ValueLedger:
    """Scenarios ``Z[i]`` paired with required objective values ``v[i]``."""

    Z: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, float))
        v = np.asarray(self.v, float).ravel()
        if len(Z) != len(v):
            raise ValueError("ledger scenarios and values differ in length")
        if not np.all(np.isfinite(v)):
            raise ValueError("ledger values must be finite")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_vertices(cls, vertices, opt: float) -> "ValueLedger":
        V = np.asarray(vertices, float)
        return cls(V, np.full(len(V), float(opt)))

    def __len__(self) -> int:
        return len(self.v)

    @property
    def entries(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.Z, self.v))

    def append(self, z, value: float) -> "ValueLedger":
        return ValueLedger(np.vstack([self.Z, np.asarray(z, float)]), np.append(self.v, value))


# -- improvement problem ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class BilinearState:
    lam: np.ndarray
    z_bar: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    ledger_recourse: np.ndarray
    dual_residual: float
    duality_gap: float


@dataclass(frozen=True, eq=False)
class ImprovementResult:
    p: float
    z_bar: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    y_hat: np.ndarray
    ledger_recourse: np.ndarray
    method: str
    iterations: int
    converged: bool
    warm_start: int
    history: tuple[float, ...] = ()
    bilinear: BilinearState | None = None
    certified: bool = False


class _BlockModel:
    """LP over ``(z_bar, x_bar, y_bar, y_bar^1..y_bar^|V|)``.

    Rows: ``A x_bar + B y_bar - R z_bar <= r0``, the ledger rows
    ``A x_bar + B y^i <= r(z^i)`` and ``c x_bar + d y^i <= v^i``, and
    ``H z_bar <= h``.  Z-free single-variable rows become bounds.
    """

    def __init__(self, problem: TwoStageProblem, ledger: ValueLedger | None,
                 x_fixed=None, coupling: bool = False, backend: str = "simplex"):
        self.problem = problem
        self.backend = backend
        L, n_x, n_y = problem.L, problem.n_x, problem.n_y
        nV = 0 if ledger is None else len(ledger)
        self.nV = nV
        self.z = slice(0, L)
        self.x = slice(L, L + n_x)
        self.y = slice(L + n_x, L + n_x + n_y)
        self.n = L + n_x + n_y * (1 + nV)
        split = split_rows(problem)
        g = np.flatnonzero(split.general)
        A, B, R = problem.A0, problem.B, problem.R
        U = problem.uncertainty
        blocks, rhs = [], []
        top = np.zeros((len(g), self.n))
        top[:, self.z] = -R[g]
        top[:, self.x] = A[g]
        top[:, self.y] = B[g]
        blocks.append(top)
        rhs.append(problem.r0[g])
        for i in range(nV):
            zi = ledger.Z[i]
            cols = self._ycopy(i)
            feas = np.zeros((len(g), self.n))
            feas[:, self.x] = A[g]
            feas[:, cols] = B[g]
            blocks.append(feas)
            rhs.append(problem.r_at(zi)[g])
            obj = np.zeros((1, self.n))
            obj[0, self.x] = problem.c0
            obj[0, cols] = problem.d
            blocks.append(obj)
            rhs.append([ledger.v[i]])
        Hrows = np.zeros((len(U.h), self.n))
        Hrows[:, self.z] = U.H
        blocks.append(Hrows)
        rhs.append(U.h)
        self.n_fixed_rows = sum(len(b) for b in blocks)
        # coupling rows keep a fixed y_hat admissible at z_bar: -R z_bar <= r0 - A x_hat - B y_hat
        self.coupling_rows = np.flatnonzero(np.any(np.abs(R) > 0, axis=1)) if coupling else np.zeros(0, int)
        if len(self.coupling_rows):
            cp = np.zeros((len(self.coupling_rows), self.n))
            cp[:, self.z] = -R[self.coupling_rows]
            blocks.append(cp)
            rhs.append(np.zeros(len(self.coupling_rows)))
        self.A_ub = np.vstack(blocks)
        self.b_ub = np.concatenate(rhs)
        xlo, xhi = stage1_bounds(problem, split)
        self.lb = np.concatenate([np.full(L, -np.inf), xlo, np.tile(split.y_lb, 1 + nV)])
        self.ub = np.concatenate([np.full(L, np.inf), xhi, np.tile(split.y_ub, 1 + nV)])
        if x_fixed is not None:
            self.lb[self.x] = self.ub[self.x] = np.asarray(x_fixed, float)
        self.binary = np.zeros(self.n, bool)
        if x_fixed is None:
            self.binary[self.x] = problem.integrality

    def _ycopy(self, i: int) -> slice:
        n_y = self.problem.n_y
        start = self.y.stop + i * n_y
        return slice(start, start + n_y)

    def solve(self, cost: np.ndarray, coupling_rhs: np.ndarray | None = None, z_fixed=None):
        b = self.b_ub
        if len(self.coupling_rows):
            b = b.copy()
            b[self.n_fixed_rows:] = coupling_rhs[self.coupling_rows]
        lb, ub = self.lb, self.ub
        if z_fixed is not None:
            lb, ub = lb.copy(), ub.copy()
            lb[self.z] = ub[self.z] = z_fixed
        sol = _solve(LpProblem.build(cost, self.A_ub, b, lb=lb, ub=ub,
                                     binary=self.binary), self.backend)
        if sol.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"improvement block problem ended with status {sol.status.value}")
        return sol

    def unpack(self, v: np.ndarray):
        Y = np.array([v[self._ycopy(i)] for i in range(self.nV)]).reshape(self.nV, self.problem.n_y)
        return v[self.z].copy(), v[self.x].copy(), v[self.y].copy(), Y


def _inner(problem: TwoStageProblem, x_hat, z, backend: str):
    """Exact adversary: optimal recourse of ``x_hat`` at ``z``."""
    try:
        return optimal_recourse(problem, x_hat, z, backend=backend)
    except RecourseInfeasibleError:
        raise RecourseInfeasibleError(
            f"x_hat is not feasible at scenario {np.round(z, 9).tolist()}") from None


def _dual_step(problem: TwoStageProblem, x_hat, z, backend: str) -> tuple[np.ndarray, float]:
    """``max lam @ (r(z) - A x_hat)`` over ``B^T lam = d, lam <= 0``."""
    b = problem.r_at(z) - problem.A0 @ x_hat
    m = problem.m
    p = LpProblem.build(-b, A_eq=problem.B.T, b_eq=problem.d, lb=np.full(m, -np.inf), ub=np.zeros(m))
    sol = solve_lp(p, backend=backend)
    if sol.status is LpStatus.UNBOUNDED:
        raise RecourseInfeasibleError(
            f"x_hat is not feasible at scenario {np.round(z, 9).tolist()}")
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"dual step ended with status {sol.status.value}")
    return sol.x, float(b @ sol.x)


def _true_gap(problem, x_hat, z_bar, x_bar, y_bar, backend):
    inner = _inner(problem, x_hat, z_bar, backend)
    value = float(problem.c0 @ x_bar + problem.d @ y_bar) - inner.objective
    return value, inner


def _mountain(problem, x_hat, model: _BlockModel, z0, backend, max_iters, tol):
    c = problem.c0
    cost = np.zeros(model.n)
    cost[model.x] = c
    cost[model.y] = problem.d
    z = np.asarray(z0, float)
    best = None
    history = []
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        inner = _inner(problem, x_hat, z, backend)
        y_hat = inner.y
        coupling_rhs = problem.r0 - problem.A0 @ x_hat - problem.B @ y_hat
        # x-step at the current scenario: exact gap, since y_hat is optimal there
        sol = model.solve(cost, coupling_rhs, z_fixed=z)
        _, xb, yb, Y = model.unpack(sol.x)
        value = sol.objective - inner.objective
        if best is None or value < best[0] - 1e-12:
            best = (value, z.copy(), xb, yb, y_hat, Y)
        sol = model.solve(cost, coupling_rhs)
        lp_value = sol.objective - float(c @ x_hat + problem.d @ y_hat)
        history.append(lp_value)
        z, xb, yb, Y = model.unpack(sol.x)
        value, inner_new = _true_gap(problem, x_hat, z, xb, yb, backend)
        if best is None or value < best[0] - 1e-12:
            best = (value, z, xb, yb, inner_new.y, Y)
        if prev is not None and abs(lp_value - prev) <= tol:
            converged = True
            break
        prev = lp_value
    return best, it, converged, tuple(history), None


def _bilinear(problem, x_hat, model: _BlockModel, z0, backend, max_iters, tol):
    c, R = problem.c0, problem.R
    z = np.asarray(z0, float)
    lam, _ = _dual_step(problem, x_hat, z, backend)
    history = []
    prev = None
    converged = False
    state = None
    it = 0
    for it in range(1, max_iters + 1):
        cost = np.zeros(model.n)
        cost[model.x] = c
        cost[model.y] = problem.d
        cost[model.z] = -(R.T @ lam)
        sol = model.solve(cost)
        z, xb, yb, Y = model.unpack(sol.x)
        const = -float(c @ x_hat) - float(lam @ (problem.r0 - problem.A0 @ x_hat))
        joint = sol.objective + const
        history.append(joint)
        state = (z, xb, yb, Y)
        lam, _ = _dual_step(problem, x_hat, z, backend)
        if prev is not None and abs(joint - prev) <= tol:
            converged = True
            break
        prev = joint
    z, xb, yb, Y = state
    # lam was re-optimized at the final z_bar, so the joint objective is the true gap
    value, inner = _true_gap(problem, x_hat, z, xb, yb, backend)
    b = problem.r_at(z) - problem.A0 @ x_hat
    resid = float(np.max(np.abs(problem.B.T @ lam - problem.d), initial=0.0))
    resid = max(resid, float(np.max(lam, initial=0.0)))
    gap = abs(float(lam @ b) - float(problem.d @ inner.y))
    bstate = BilinearState(lam, z, xb, yb, Y, resid, gap)
    return (value, z, xb, yb, inner.y, Y), it, converged, tuple(history), bstate


def default_warm_starts(problem: TwoStageProblem, count: int = DEFAULT_SAMPLES,
                        seed: int = 0, vertices=None) -> np.ndarray:
    """Interior point of U followed by ``count`` hit-and-run samples."""
    U = problem.uncertainty
    V = vertices_of(U) if vertices is None else np.asarray(vertices, float)
    starts = [interior_point(U, V).z]
    if count:
        starts.extend(sample_uniform(U, count, seed, vertices=V))
    return np.array(starts)


def improvement(problem: TwoStageProblem, x_hat, ledger: ValueLedger, method: str = "mountain",
                warm_starts=None, *, x_fixed=None, max_iters: int = MAX_ITERS,
                tol: float = CONV_TOL, backend: str = "simplex",
                seed: int = 0) -> ImprovementResult:
    """Heuristic value of the improvement problem and its best solution.

    ``method`` is ``mountain`` (alternate the adversary's recourse with the
    joint LP) or ``bilinear`` (alternate the inner dual with the joint LP).
    The best of all warm starts wins; ties keep the lowest warm-start index.
    With ``x_fixed`` the candidate Stage-1 decision is pinned and ledger rows
    are ignored.
    """
    _require_rhs(problem)
    if method not in ("mountain", "bilinear"):
        raise ValueError(f"unknown method {method!r}")
    x_hat = np.asarray(x_hat, float)
    if warm_starts is None:
        warm_starts = default_warm_starts(problem, seed=seed)
    warm_starts = np.atleast_2d(np.asarray(warm_starts, float))
    use_ledger = None if x_fixed is not None else ledger
    model = _BlockModel(problem, use_ledger, x_fixed, coupling=(method == "mountain"),
                        backend=backend)
    runner = _mountain if method == "mountain" else _bilinear
    best = None
    for k, z0 in enumerate(warm_starts):
        found, its, conv, hist, bstate = runner(problem, x_hat, model, z0, backend, max_iters, tol)
        if best is None or found[0] < best[0][0] - 1e-12:
            best = (found, its, conv, hist, bstate, k)
    (value, z, xb, yb, y_hat, Y), its, conv, hist, bstate, k = best
    if x_fixed is None and value > 0:
        # the unchanged decision is always admissible and scores zero
        z = warm_starts[k]
        inner = _inner(problem, x_hat, z, backend)
        value, xb, yb, y_hat = 0.0, x_hat.copy(), inner.y, inner.y
        Y = _ledger_recourse(problem, x_hat, ledger, backend)
    return ImprovementResult(float(value), z, xb, yb, y_hat, Y, method, its, conv, k, hist, bstate)


def _ledger_recourse(problem, x, ledger: ValueLedger, backend) -> np.ndarray:
    return np.array([optimal_recourse(problem, x, z, backend=backend).y for z in ledger.Z]
                    ).reshape(len(ledger), problem.n_y)


# -- iterative Pareto refinement ----------------------------------------------

@dataclass(frozen=True, eq=False)
class TraceStep:
    p: float
    z: np.ndarray
    value: float
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class Algorithm1Result:
    x: np.ndarray
    opt: float
    trace: tuple[TraceStep, ...]
    ledger: ValueLedger
    certified: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(), "opt": self.opt, "certified": self.certified,
            "trace": [{"p": s.p, "z": s.z.tolist(), "value": s.value, "x": s.x.tolist()}
                      for s in self.trace],
            "ledger": {"Z": self.ledger.Z.tolist(), "v": self.ledger.v.tolist()},
        }


def algorithm1(problem: TwoStageProblem, x0=None, *, method: str = "mountain",
               warm_starts=None, max_iters: int = MAX_ITERS, tol: float = CONV_TOL,
               backend: str = "simplex", seed: int = 0, vertices=None) -> Algorithm1Result:
    """Iterative improvement towards a Pareto optimal Stage-1 decision.

    Each round solves the improvement problem for the current decision; a
    strictly negative value moves to the improving decision and records the
    scenario with the value the previous decision attains there.  On exit the
    decision whose improvement value was nonnegative is returned, labelled
    uncertified because the improvement solver is a heuristic.
    """
    _require_rhs(problem)
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    aro = solve_aro_vertices(problem, V, backend=backend)
    opt = aro.opt
    x = aro.x if x0 is None else np.asarray(x0, float)
    if x0 is not None:
        wc = worst_case(problem, x, OptimalRecourseRule(backend), V).value
        if wc > opt + 1e-6 * (1 + abs(opt)):
            raise ValueError(f"x0 is not worst-case optimal: {wc} > {opt}")
    if warm_starts is None:
        warm_starts = default_warm_starts(problem, seed=seed, vertices=V)
    ledger = ValueLedger.from_vertices(V, opt)
    trace: list[TraceStep] = []
    for k in range(1, max_iters + 1):
        res = improvement(problem, x, ledger, method, warm_starts, max_iters=max_iters,
                          tol=tol, backend=backend)
        trace.append(TraceStep(res.p, res.z_bar, float(problem.c0 @ res.x_bar + problem.d @ res.y_bar),
                               res.x_bar))
        if res.p >= -tol:
            break
        # record what the new decision guarantees at the improving scenario
        attained = optimal_recourse(problem, res.x_bar, res.z_bar, backend=backend).objective
        ledger = ledger.append(res.z_bar, attained + 1e-9 * (1 + abs(attained)))
        x = res.x_bar
    return Algorithm1Result(np.array(x), opt, tuple(trace), ledger)


def max_difference_scenario(problem: TwoStageProblem, x_a, x_b, *, method: str = "mountain",
                            warm_starts=None, backend: str = "simplex", seed: int = 0,
                            vertices=None) -> tuple[np.ndarray, float]:
    """Scenario where ``x_b`` beats ``x_a`` the most under optimal recourse.

    Returns ``(z, gap)`` with ``gap = value(x_a, z) - value(x_b, z)``.  The
    best vertex is added to the warm starts, so two worst-case optimal
    decisions always give ``gap >= 0``.
    """
    _require_rhs(problem)
    x_a = np.asarray(x_a, float)
    x_b = np.asarray(x_b, float)
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    if warm_starts is None:
        warm_starts = default_warm_starts(problem, seed=seed, vertices=V)
    gaps = [optimal_recourse(problem, x_a, z, backend=backend).objective
            - optimal_recourse(problem, x_b, z, backend=backend).objective for z in V]
    best_v = int(np.argmax(gaps))
    starts = np.vstack([warm_starts, V[best_v]])
    res = improvement(problem, x_a, ValueLedger(np.zeros((0, problem.L)), []), method, starts,
                      x_fixed=x_b, backend=backend)
    gap = -res.p
    z = res.z_bar
    if gaps[best_v] > gap:
        gap, z = float(gaps[best_v]), V[best_v]
    return z, float(gap)


# -- d = 0 refinement and uniqueness ------------------------------------------

def refine_d0(problem: TwoStageProblem, opt: float, z_bar, vertices=None, *,
              backend: str = "simplex") -> np.ndarray:
    """Best worst-case optimal ``x`` at an interior scenario ``z_bar`` (needs ``d = 0``)."""
    if np.any(np.abs(problem.d) > 0):
        raise ValueError("refine_d0 needs d = 0")
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    n_x, n_y, N = problem.n_x, problem.n_y, len(V)
    split = split_rows(problem)
    g = np.flatnonzero(split.general)
    n = n_x + N * n_y
    rows, rhs = [], []
    cap = opt + 1e-9 * (1 + abs(opt))
    for v, z in enumerate(V):
        cols = slice(n_x + v * n_y, n_x + (v + 1) * n_y)
        blk = np.zeros((len(g) + 1, n))
        blk[:len(g), :n_x] = problem.A_at(z)[g]
        blk[:len(g), cols] = problem.B[g]
        blk[len(g), :n_x] = problem.c_at(z)
        blk[len(g), cols] = problem.d
        rows.append(blk)
        rhs.append(np.append(problem.r_at(z)[g], cap))
    xlo, xhi = stage1_bounds(problem, split)
    lb = np.concatenate([xlo, np.tile(split.y_lb, N)])
    ub = np.concatenate([xhi, np.tile(split.y_ub, N)])
    cost = np.zeros(n)
    cost[:n_x] = problem.c_at(z_bar)
    binary = np.zeros(n, bool)
    binary[:n_x] = problem.integrality
    sol = _solve(LpProblem.build(cost, np.vstack(rows), np.concatenate(rhs), lb=lb, ub=ub,
                                 binary=binary), backend)
    if sol.status is LpStatus.INFEASIBLE:
        raise RobustInfeasibleError("no decision meets the optimal value at every vertex")
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"refinement LP ended with status {sol.status.value}")
    return sol.x[:n_x]


@dataclass(frozen=True, eq=False)
class UniquenessCertificate:
    x: np.ndarray
    value: float
    unique: bool
    ranges: np.ndarray
    robust_feasible: bool
    matches_opt: bool

    @property
    def paro(self) -> bool:
        """Unique finite-set optimum that is feasible on U and reaches OPT."""
        return self.unique and self.robust_feasible and self.matches_opt


def certify_unique(problem: TwoStageProblem, scenarios, *, opt: float | None = None,
                   backend: str = "simplex", tol: float = 1e-6) -> UniquenessCertificate:
    """Solve the min-max program over ``scenarios`` and test if its optimal x is unique.

    Uniqueness is decided by minimizing and maximizing each coordinate of x
    over the optimal face.
    """
    S = np.atleast_2d(np.asarray(scenarios, float))
    res = solve_aro_vertices(problem, S, backend=backend)
    n_x, n_y, N = problem.n_x, problem.n_y, len(S)
    # rebuild the finite program with the epigraph capped at its optimum
    split = split_rows(problem)
    g = np.flatnonzero(split.general)
    n = n_x + N * n_y
    rows, rhs = [], []
    cap = res.opt + 1e-9 * (1 + abs(res.opt))
    for v, z in enumerate(S):
        cols = slice(n_x + v * n_y, n_x + (v + 1) * n_y)
        blk = np.zeros((len(g) + 1, n))
        blk[:len(g), :n_x] = problem.A_at(z)[g]
        blk[:len(g), cols] = problem.B[g]
        blk[len(g), :n_x] = problem.c_at(z)
        blk[len(g), cols] = problem.d
        rows.append(blk)
        rhs.append(np.append(problem.r_at(z)[g], cap))
    A_ub, b_ub = np.vstack(rows), np.concatenate(rhs)
    xlo, xhi = stage1_bounds(problem, split)
    lb = np.concatenate([xlo, np.tile(split.y_lb, N)])
    ub = np.concatenate([xhi, np.tile(split.y_ub, N)])
    binary = np.zeros(n, bool)
    binary[:n_x] = problem.integrality
    ranges = np.zeros(n_x)
    for j in range(n_x):
        ends = []
        for sign in (1.0, -1.0):
            cost = np.zeros(n)
            cost[j] = sign
            sol = _solve(LpProblem.build(cost, A_ub, b_ub, lb=lb, ub=ub, binary=binary), backend)
            ends.append(np.inf if sol.status is LpStatus.UNBOUNDED else sign * sol.objective)
        ranges[j] = ends[1] - ends[0]
    unique = bool(np.all(ranges <= tol))
    V = vertices_of(problem.uncertainty)
    # a fixed x attains its worst case at a vertex: recourse is convex-combinable
    try:
        wc = max(optimal_recourse(problem, res.x, z, backend=backend).objective for z in V)
        feasible = True
    except RecourseInfeasibleError:
        wc, feasible = np.inf, False
    if opt is None:
        opt = solve_aro_vertices(problem, V, backend=backend).opt
    matches = feasible and abs(res.opt - opt) <= tol * (1 + abs(opt)) and wc <= opt + tol * (1 + abs(opt))
    return UniquenessCertificate(res.x, res.opt, unique, ranges, feasible, bool(matches))


# -- PRO step and decision-rule pipeline ---------------------------------------

@dataclass(frozen=True, eq=False)
class ProResult:
    x: np.ndarray
    rule: LinearRule
    step1: LdrResult
    nominal_change: float


def pro_ldr(problem: TwoStageProblem, z_bar, mask=None, vertices=None, *,
            backend: str = "simplex") -> ProResult:
    """Linear-rule solution re-optimized at ``z_bar`` without losing elsewhere.

    Step 1 solves the worst-case problem with ``y(z) = w + W z``.  Step 2 adds
    an adjustment ``(x2, w2, W2)`` that must not worsen the objective at any
    vertex, keeps the rule feasible at every vertex and minimizes the
    objective change at ``z_bar``.
    """
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    if mask is None:
        mask = np.ones((problem.n_y, problem.L), bool)
    step1 = solve_static_ldr(problem, mask, V, backend=backend)
    layout = LdrLayout(problem, mask)
    split = split_rows(problem)
    # variables (x, t, w, W): t is unused here and pinned at zero
    v1 = np.array(step1.solution.x)
    v1[layout.t] = 0.0
    A_feas, b_feas = ldr_rows(problem, layout, V, split, with_objective=False)
    # objective change at each vertex: obj(z, v) - obj(z, v1) <= 0
    nd_rows = []
    for z in V:
        row = np.zeros(layout.n)
        row[:layout.n_x] = problem.c_at(z)
        row += problem.d @ layout.y_map(z)
        nd_rows.append(row)
    nd = np.array(nd_rows)
    cost = np.zeros(layout.n)
    cost[:layout.n_x] = problem.c_at(z_bar)
    cost += problem.d @ layout.y_map(np.asarray(z_bar, float))
    xlo, xhi = stage1_bounds(problem, split)
    lb = np.full(layout.n, -np.inf)
    ub = np.full(layout.n, np.inf)
    lb[:layout.n_x], ub[:layout.n_x] = xlo, xhi
    lb[layout.t] = ub[layout.t] = 0.0
    binary = np.zeros(layout.n, bool)
    binary[:layout.n_x] = problem.integrality
    slack = 1e-9 * (1 + np.abs(nd @ v1))
    A_ub = np.vstack([A_feas, nd])
    b_ub = np.concatenate([b_feas, nd @ v1 + slack])
    sol = _solve(LpProblem.build(cost, A_ub, b_ub, lb=lb, ub=ub, binary=binary), backend)
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"PRO step ended with status {sol.status.value}")
    x = sol.x[:layout.n_x]
    rule = layout.rule(sol.x)
    change = float(cost @ sol.x - cost @ v1)
    return ProResult(x, rule, step1, change)


@dataclass(frozen=True, eq=False)
class DrParoResult:
    x: np.ndarray
    rule: LinearRule
    provenance: str
    mask: np.ndarray
    pro: ProResult


def dr_paro(problem: TwoStageProblem, *, backend: str = "simplex") -> DrParoResult:
    """Pareto optimal ``x`` for ``d = 0`` problems with exploitable structure.

    Constraintwise problems use static rules, block problems rules restricted
    to each block's parameters, hybrid problems rules in the shared
    parameters only, and simplex sets full linear rules.  The restricted
    worst-case problem is then refined at the interior point of U.
    """
    if np.any(np.abs(problem.d) > 0):
        raise ValueError("decision-rule pipeline needs d = 0")
    report = detect_structure(problem)
    n_y, L = problem.n_y, problem.L
    V = vertices_of(problem.uncertainty)
    if report.kind in ("constraintwise", "block", "hybrid"):
        mask = report.rule_mask(n_y, L)
        labels = {"constraintwise": "constraintwise: static rule",
                  "block": "block: rules in each block's parameters",
                  "hybrid": "hybrid: rules in the shared parameters"}
        provenance = labels[report.kind]
    elif is_simplex(problem.uncertainty, V).is_simplex:
        mask = np.ones((n_y, L), bool)
        provenance = "simplex: full linear rule"
    else:
        raise ValueError("no applicable structure (need constraintwise, block, hybrid or simplex U)")
    z_bar = interior_point(problem.uncertainty, V).z
    pro = pro_ldr(problem, z_bar, mask, V, backend=backend)
    return DrParoResult(pro.x, pro.rule, provenance, mask, pro)


# -- PARO extension check ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtensionCheck:
    bound: float
    z: np.ndarray
    y: np.ndarray
    certified: bool

    def is_extension(self, tol: float = 1e-7) -> bool:
        return self.bound <= tol


def check_extension(problem: TwoStageProblem, x, rule: DecisionRule, *, fallback: bool = False,
                    samples: int = 20, seed: int = 0, backend: str = "simplex") -> ExtensionCheck:
    """Largest advantage of optimal recourse over ``rule`` at fixed ``x``.

    For static and linear rules this is a single LP over ``(z, y)`` and the
    bound is exact.  Other rules need ``fallback=True``: vertices and
    ``samples`` hit-and-run points are scanned instead (uncertified).
    """
    x = np.asarray(x, float)
    L, n_y = problem.L, problem.n_y
    U = problem.uncertainty
    if not rule.affine:
        if not fallback:
            raise TypeError("rule is not affine in z; pass fallback=True for a sampled check")
        V = vertices_of(U)
        pts = np.vstack([V, sample_uniform(U, samples, seed, vertices=V)]) if samples else V
        best = None
        for z in pts:
            rec = optimal_recourse(problem, x, z, backend=backend)
            gap = float(problem.d @ (rule.evaluate(problem, x, z) - rec.y))
            if best is None or gap > best[0] + 1e-12:
                best = (gap, z, rec.y)
        return ExtensionCheck(best[0], best[1], best[2], False)
    lin = rule.affine_parts(L)
    # min d^T y - d^T W z over B y + (sum_l z_l A_l x - R z) <= r0 - A0 x, H z <= h
    n = L + n_y
    Ax = np.stack([problem.A[l] @ x for l in range(L)], axis=1) if L else np.zeros((problem.m, 0))
    top = np.hstack([Ax - problem.R, problem.B])
    Hrows = np.hstack([U.H, np.zeros((len(U.h), n_y))])
    cost = np.concatenate([-(lin.W.T @ problem.d), problem.d])
    sol = solve_lp(LpProblem.build(cost, np.vstack([top, Hrows]),
                                   np.concatenate([problem.r0 - problem.A0 @ x, U.h])),
                   backend=backend)
    if sol.status is LpStatus.UNBOUNDED:
        return ExtensionCheck(np.inf, np.full(L, np.nan), np.full(n_y, np.nan), True)
    if sol.status is not LpStatus.OPTIMAL:
        raise RecourseInfeasibleError("x has no feasible recourse anywhere in U")
    bound = float(problem.d @ lin.w) - sol.objective
    return ExtensionCheck(bound, sol.x[:L], sol.x[L:], True)
