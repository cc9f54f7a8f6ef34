"""Worst-case solves and evaluations over the vertices of the uncertainty set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fme import EliminationResult, reconstruct_recourse
from .geometry import vertices_of
from .lp import LpProblem, LpSolution, LpStatus, solve_lp, solve_milp
from .model import TwoStageProblem

FEAS_TOL = 1e-7


class RobustInfeasibleError(ValueError):
    """No Stage-1 decision satisfies the robust constraints."""


class RecourseInfeasibleError(ValueError):
    """The Stage-2 problem has no feasible point at the given (x, z)."""


class RecourseUnboundedError(ValueError):
    """The Stage-2 problem is unbounded below at the given (x, z)."""


class RuleInfeasibleError(ValueError):
    def __init__(self, vertex: int, violation: float):
        super().__init__(f"decision rule violates a constraint by {violation:.3g} at vertex {vertex}")
        self.vertex = vertex
        self.violation = violation


# -- shared LP assembly -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class RowSplit:
    """Constraint rows split into general rows and simple variable bounds.

    A row is turned into a bound when it involves a single variable and does
    not depend on z.
    """

    general: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    y_lb: np.ndarray
    y_ub: np.ndarray


def split_rows(problem: TwoStageProblem) -> RowSplit:
    m, n_x, n_y = problem.m, problem.n_x, problem.n_y
    lb = np.full(n_x + n_y, -np.inf)
    ub = np.full(n_x + n_y, np.inf)
    general = np.ones(m, bool)
    coef = np.hstack([problem.A0, problem.B])
    z_dep = np.any(np.abs(problem.R) > 0, axis=1)
    if problem.L:
        z_dep |= np.any(np.abs(problem.A) > 0, axis=(0, 2))
    for i in range(m):
        nz = np.flatnonzero(coef[i])
        if z_dep[i] or len(nz) != 1:
            continue
        j = nz[0]
        bound = problem.r0[i] / coef[i, j]
        if coef[i, j] > 0:
            ub[j] = min(ub[j], bound)
        else:
            lb[j] = max(lb[j], bound)
        general[i] = False
    if np.any(lb > ub):
        # contradictory bounds: keep everything as rows so the LP reports it
        return RowSplit(np.ones(m, bool), np.full(n_x, -np.inf), np.full(n_x, np.inf),
                        np.full(n_y, -np.inf), np.full(n_y, np.inf))
    return RowSplit(general, lb[:n_x], ub[:n_x], lb[n_x:], ub[n_x:])


def stage1_bounds(problem: TwoStageProblem, split: RowSplit) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = split.x_lb.copy(), split.x_ub.copy()
    b = problem.integrality
    lo[b] = np.maximum(lo[b], 0.0)
    hi[b] = np.minimum(hi[b], 1.0)
    return lo, hi


def _solve(p: LpProblem, backend: str) -> LpSolution:
    if p.binary.any():
        return solve_milp(p, backend=backend)
    return solve_lp(p, backend=backend)


# -- exact ARO over vertices ------------------------------------------------

@dataclass(frozen=True, eq=False)
class AroSolveResult:
    x: np.ndarray
    per_vertex_y: np.ndarray
    opt: float
    status: LpStatus
    vertices: np.ndarray

    @property
    def OPT(self) -> float:
        return self.opt


def solve_aro_vertices(problem: TwoStageProblem, vertices=None, *,
                       backend: str = "simplex") -> AroSolveResult:
    """Exact two-stage robust solve with one Stage-2 copy per vertex.

    Variables are ``(x, t, y^1, ..., y^N)``; the LP (MILP for binary x)
    minimizes ``t`` with ``c(z^i) @ x + d @ y^i <= t`` at every vertex.
    """
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    N = len(V)
    n_x, n_y = problem.n_x, problem.n_y
    split = split_rows(problem)
    g = np.flatnonzero(split.general)
    mg = len(g)
    nv = n_x + 1 + N * n_y
    rows = N * (mg + 1)
    A_ub = np.zeros((rows, nv))
    b_ub = np.zeros(rows)
    for v, z in enumerate(V):
        r0 = v * (mg + 1)
        ycols = slice(n_x + 1 + v * n_y, n_x + 1 + (v + 1) * n_y)
        A_ub[r0, :n_x] = problem.c_at(z)
        A_ub[r0, n_x] = -1.0
        A_ub[r0, ycols] = problem.d
        A_ub[r0 + 1:r0 + 1 + mg, :n_x] = problem.A_at(z)[g]
        A_ub[r0 + 1:r0 + 1 + mg, ycols] = problem.B[g]
        b_ub[r0 + 1:r0 + 1 + mg] = problem.r_at(z)[g]
    xlo, xhi = stage1_bounds(problem, split)
    lb = np.concatenate([xlo, [-np.inf], np.tile(split.y_lb, N)])
    ub = np.concatenate([xhi, [np.inf], np.tile(split.y_ub, N)])
    c = np.zeros(nv)
    c[n_x] = 1.0
    binary = np.zeros(nv, bool)
    binary[:n_x] = problem.integrality
    sol = _solve(LpProblem.build(c, A_ub, b_ub, lb=lb, ub=ub, binary=binary), backend)
    if sol.status is LpStatus.INFEASIBLE:
        raise RobustInfeasibleError("no Stage-1 decision is feasible for every vertex")
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"vertex LP ended with status {sol.status.value}")
    x = sol.x[:n_x]
    Y = sol.x[n_x + 1:].reshape(N, n_y)
    opt = max(float(problem.c_at(z) @ x + problem.d @ y) for z, y in zip(V, Y))
    return AroSolveResult(x, Y, opt, sol.status, V)


# -- optimal recourse -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RecourseResult:
    y: np.ndarray
    objective: float
    basis: tuple[int, ...]
    duals: np.ndarray


def recourse_lp(problem: TwoStageProblem, x, z) -> LpProblem:
    """``min d @ y  s.t.  B y <= r(z) - A(z) x`` with all rows kept."""
    x = np.asarray(x, float)
    rhs = problem.r_at(z) - problem.A_at(z) @ x
    return LpProblem.build(problem.d, problem.B, rhs)


def optimal_recourse(problem: TwoStageProblem, x, z, *, backend: str = "simplex") -> RecourseResult:
    """Best Stage-2 decision at ``(x, z)`` and the full objective value.

    ``duals`` are the row multipliers (nonpositive) of the Stage-2 LP.
    """
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    sol = solve_lp(recourse_lp(problem, x, z), backend=backend)
    if sol.status is LpStatus.INFEASIBLE:
        raise RecourseInfeasibleError("Stage-2 problem infeasible: x is not feasible at this scenario")
    if sol.status is LpStatus.UNBOUNDED:
        raise RecourseUnboundedError("Stage-2 problem unbounded at this scenario")
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"Stage-2 LP ended with status {sol.status.value}")
    obj = float(problem.c_at(z) @ x + problem.d @ sol.x)
    return RecourseResult(sol.x, obj, sol.basis, sol.duals)


# -- decision rules ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearRule:
    """``y(z) = w + W z``."""

    w: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, float).ravel()
        W = np.asarray(self.W, float).reshape(len(w), -1)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(W))):
            raise ValueError("linear rule has non-finite entries")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "W", W)

    def __call__(self, z) -> np.ndarray:
        return self.w + self.W @ np.asarray(z, float)

    def __add__(self, other: "LinearRule") -> "LinearRule":
        return LinearRule(self.w + other.w, self.W + other.W)


class DecisionRule:
    """Stage-2 decision as a function of ``(problem, x, z)``."""

    affine = False
    exact_worst_case = False

    def evaluate(self, problem: TwoStageProblem, x, z) -> np.ndarray:
        raise NotImplementedError

    def affine_parts(self, L: int) -> LinearRule:
        raise TypeError(f"{type(self).__name__} is not affine in z")


@dataclass(frozen=True, eq=False)
class StaticRule(DecisionRule):
    y: np.ndarray
    affine = True
    exact_worst_case = True

    def evaluate(self, problem, x, z):
        return np.asarray(self.y, float)

    def affine_parts(self, L: int) -> LinearRule:
        y = np.asarray(self.y, float)
        return LinearRule(y, np.zeros((len(y), L)))


@dataclass(frozen=True, eq=False)
class LinearDecisionRule(DecisionRule):
    rule: LinearRule
    affine = True
    exact_worst_case = True

    def evaluate(self, problem, x, z):
        return self.rule(z)

    def affine_parts(self, L: int) -> LinearRule:
        return self.rule


@dataclass(frozen=True, eq=False)
class BackSubstitutionRule(DecisionRule):
    elimination: EliminationResult
    policy: str = "objective-greedy"

    def evaluate(self, problem, x, z):
        return reconstruct_recourse(self.elimination, x, z, self.policy)


@dataclass(frozen=True, eq=False)
class OptimalRecourseRule(DecisionRule):
    backend: str = "simplex"
    exact_worst_case = True

    def evaluate(self, problem, x, z):
        return optimal_recourse(problem, x, z, backend=self.backend).y


@dataclass(frozen=True)
class WorstCase:
    value: float
    vertex: np.ndarray
    index: int
    values: np.ndarray
    exact: bool


def worst_case(problem: TwoStageProblem, x, rule: DecisionRule, vertices=None,
               tol: float = 1e-6, *, allow_uncertain_a: bool = False) -> WorstCase:
    """Largest realized objective over the vertices (lowest index on ties).

    ``exact`` is False for back-substitution rules, whose value need not peak
    at a vertex.  Optimal recourse requires ``A`` constant in z unless
    ``allow_uncertain_a`` is set; the vertex maximum is still exact then,
    because mixing vertex recourses gives a feasible recourse at every
    interior scenario.
    """
    if (isinstance(rule, OptimalRecourseRule) and not allow_uncertain_a
            and np.any(np.abs(problem.A) > 0)):
        raise ValueError("worst case under optimal recourse needs A constant in z")
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    x = np.asarray(x, float)
    values = np.empty(len(V))
    for i, z in enumerate(V):
        y = rule.evaluate(problem, x, z)
        slack = problem.r_at(z) - problem.A_at(z) @ x - problem.B @ y
        if slack.size and slack.min() < -tol:
            raise RuleInfeasibleError(i, float(-slack.min()))
        values[i] = problem.c_at(z) @ x + problem.d @ y
    best = int(np.argmax(values))
    # argmax returns the first maximum; honour ties up to roundoff too
    top = values[best]
    best = int(np.flatnonzero(values >= top - 1e-12 * max(1.0, abs(top)))[0])
    return WorstCase(float(values[best]), V[best], best, values, rule.exact_worst_case)


# -- linear decision rules --------------------------------------------------

@dataclass(frozen=True, eq=False)
class LdrResult:
    x: np.ndarray
    rule: LinearRule
    value: float
    solution: LpSolution


class LdrLayout:
    """Column layout ``(x, t, w, W[mask])`` for vertex-wise LDR programs."""

    def __init__(self, problem: TwoStageProblem, mask: np.ndarray):
        self.n_x, self.n_y, self.L = problem.n_x, problem.n_y, problem.L
        self.mask = np.asarray(mask, bool).reshape(self.n_y, self.L)
        self.pairs = np.argwhere(self.mask)
        self.t = self.n_x
        self.w = slice(self.n_x + 1, self.n_x + 1 + self.n_y)
        self.W0 = self.n_x + 1 + self.n_y
        self.n = self.W0 + len(self.pairs)

    def y_map(self, z) -> np.ndarray:
        """Matrix M with ``y(z) = M @ v[w_and_W]`` columns over the full vector."""
        M = np.zeros((self.n_y, self.n))
        M[:, self.w] = np.eye(self.n_y)
        for col, (k, l) in enumerate(self.pairs):
            M[k, self.W0 + col] = z[l]
        return M

    def rule(self, v: np.ndarray) -> LinearRule:
        W = np.zeros((self.n_y, self.L))
        for col, (k, l) in enumerate(self.pairs):
            W[k, l] = v[self.W0 + col]
        return LinearRule(v[self.w].copy(), W)


def ldr_rows(problem: TwoStageProblem, layout: LdrLayout, V: np.ndarray, split: RowSplit,
             with_objective: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Vertex-wise constraint rows (and epigraph rows) of an LDR program."""
    g = np.flatnonzero(split.general | ~_x_only(problem))
    blocks, rhs = [], []
    for z in V:
        M = layout.y_map(z)
        rows = np.zeros((len(g), layout.n))
        rows[:, :layout.n_x] = problem.A_at(z)[g]
        rows += problem.B[g] @ M
        blocks.append(rows)
        rhs.append(problem.r_at(z)[g])
        if with_objective:
            obj = np.zeros((1, layout.n))
            obj[0, :layout.n_x] = problem.c_at(z)
            obj[0, layout.t] = -1.0
            obj += problem.d @ M
            blocks.append(obj)
            rhs.append([0.0])
    return np.vstack(blocks), np.concatenate(rhs)


def _x_only(problem: TwoStageProblem) -> np.ndarray:
    """Rows that involve no Stage-2 variable."""
    return ~np.any(np.abs(problem.B) > 0, axis=1)


def solve_static_ldr(problem: TwoStageProblem, mask=None, vertices=None, *,
                     backend: str = "simplex") -> LdrResult:
    """Worst-case optimal ``x`` and rule ``y(z) = w + W z`` with ``W`` zero off ``mask``.

    ``mask`` is an ``n_y x L`` boolean array; ``None`` means a full linear
    rule and an all-false mask a static rule.
    """
    V = vertices_of(problem.uncertainty) if vertices is None else np.asarray(vertices, float)
    if mask is None:
        mask = np.ones((problem.n_y, problem.L), bool)
    layout = LdrLayout(problem, mask)
    split = split_rows(problem)
    A_ub, b_ub = ldr_rows(problem, layout, V, split)
    xlo, xhi = stage1_bounds(problem, split)
    lb = np.full(layout.n, -np.inf)
    ub = np.full(layout.n, np.inf)
    lb[:layout.n_x], ub[:layout.n_x] = xlo, xhi
    c = np.zeros(layout.n)
    c[layout.t] = 1.0
    binary = np.zeros(layout.n, bool)
    binary[:layout.n_x] = problem.integrality
    sol = _solve(LpProblem.build(c, A_ub, b_ub, lb=lb, ub=ub, binary=binary), backend)
    if sol.status is LpStatus.INFEASIBLE:
        raise RobustInfeasibleError("no feasible decision rule with the imposed structure")
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"LDR program ended with status {sol.status.value}")
    x = sol.x[:layout.n_x]
    rule = layout.rule(sol.x)
    value = max(float(problem.c_at(z) @ x + problem.d @ rule(z)) for z in V)
    return LdrResult(x, rule, value, sol)
