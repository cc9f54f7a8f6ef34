"""Dense linear programming.

A bounded-variable two-phase primal simplex (Dantzig pricing with a Bland
fallback once degenerate pivots pile up) and a best-first branch-and-bound
for binary variables. Every other module poses its LPs through
:func:`solve_lp` / :func:`solve_milp`.

Problems are always ``min c @ x  s.t.  A @ x <= b,  lb <= x <= ub``.
Duals follow the minimisation convention ``lambda <= 0`` on ``<=`` rows, so
that ``c = A.T @ lambda + reduced_costs``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEAS_TOL = 1e-7
COST_TOL = 1e-9
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50

BACKENDS = ("simplex", "highs", "bnb-highs")


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class LpProblem:
    """``min c@x s.t. A@x <= b, lb <= x <= ub`` with an optional binary mask."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray

    def __post_init__(self):
        n = len(self.c)
        if self.A.shape != (len(self.b), n):
            raise ValueError(f"A has shape {self.A.shape}, expected ({len(self.b)}, {n})")
        if self.lb.shape != (n,) or self.ub.shape != (n,) or self.binary.shape != (n,):
            raise ValueError("bound / binary vectors must match the number of columns")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite LP coefficients")

    @classmethod
    def build(cls, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
              lb=None, ub=None, binary=None) -> "LpProblem":
        """Normalise to ``<=`` rows; each equality becomes a pair of rows.

        ``lb``/``ub`` default to free variables.
        """
        c = np.asarray(c, dtype=float).ravel()
        n = len(c)
        blocks, rhs = [], []
        if A_ub is not None and len(b_ub):
            blocks.append(np.asarray(A_ub, dtype=float).reshape(-1, n))
            rhs.append(np.asarray(b_ub, dtype=float).ravel())
        if A_eq is not None and len(b_eq):
            Ae = np.asarray(A_eq, dtype=float).reshape(-1, n)
            be = np.asarray(b_eq, dtype=float).ravel()
            blocks += [Ae, -Ae]
            rhs += [be, -be]
        A = np.vstack(blocks) if blocks else np.zeros((0, n))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        lb = np.full(n, -np.inf) if lb is None else np.broadcast_to(np.asarray(lb, float), (n,)).copy()
        ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, float), (n,)).copy()
        binary = np.zeros(n, bool) if binary is None else np.asarray(binary, bool).ravel()
        if binary.any():
            lb[binary] = np.maximum(lb[binary], 0.0)
            ub[binary] = np.minimum(ub[binary], 1.0)
        return cls(c, A, b, lb, ub, binary)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def k(self) -> int:
        return len(self.b)

    def with_bounds(self, lb, ub) -> "LpProblem":
        return LpProblem(self.c, self.A, self.b, lb, ub, self.binary)

    def relaxed(self) -> "LpProblem":
        return LpProblem(self.c, self.A, self.b, self.lb, self.ub, np.zeros(self.n, bool))


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float = np.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: tuple[int, ...] | None = None
    iterations: int = 0
    nodes: int = 0
    backend: str = "simplex"

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def dual_objective(self, p: LpProblem) -> float:
        """Lagrangian dual bound ``b@lambda + sum(bound * reduced cost)``."""
        if self.duals is None or self.reduced_costs is None:
            raise ValueError("no dual information")
        rc = self.reduced_costs
        bound = np.where(rc > 0, p.lb, p.ub)
        active = np.abs(rc) > 0
        return float(p.b @ self.duals + np.sum(rc[active] * bound[active]))

    def slack(self, p: LpProblem) -> np.ndarray:
        return p.b - p.A @ self.x


class _Simplex:
    """Dense bounded-variable tableau, columns = structurals | slacks | artificials."""

    def __init__(self, p: LpProblem, max_iter: int):
        self.p = p
        n, k = p.n, p.k
        self.n, self.k = n, k
        self.max_iter = max_iter
        self.iterations = 0

        x = np.where(np.isfinite(p.lb), p.lb, np.where(np.isfinite(p.ub), p.ub, 0.0))
        resid = p.b - p.A @ x
        art_rows = np.flatnonzero(resid < 0)
        na = len(art_rows)
        self.art_rows = art_rows
        E = np.zeros((k, na))
        E[art_rows, np.arange(na)] = -1.0
        self.M = np.hstack([p.A, np.eye(k), E])
        ncol = n + k + na
        self.lo = np.concatenate([p.lb, np.zeros(k + na)])
        self.hi = np.concatenate([p.ub, np.full(k + na, np.inf)])

        self.x = np.zeros(ncol)
        self.x[:n] = x
        basis = np.arange(n, n + k)
        basis[art_rows] = n + k + np.arange(na)
        self.x[n:n + k] = np.maximum(resid, 0.0)
        self.x[n + k + np.arange(na)] = -resid[art_rows]
        self.basis = basis
        self.is_basic = np.zeros(ncol, bool)
        self.is_basic[basis] = True
        self.T = self.M.copy()
        self.T[art_rows] *= -1.0

    # -- linear algebra -------------------------------------------------
    def refactor(self, cost):
        B = self.M[:, self.basis]
        nonbasic = ~self.is_basic
        rhs = self.p.b - self.M[:, nonbasic] @ self.x[nonbasic]
        try:
            self.T = np.linalg.solve(B, self.M)
            self.x[self.basis] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            pass  # keep the incrementally updated tableau
        self.T[:, self.basis] = np.eye(self.k)
        self.d = cost - cost[self.basis] @ self.T

    # -- one phase ------------------------------------------------------
    def run(self, cost) -> LpStatus:
        self.refactor(cost)
        degenerate = 0
        since_refactor = 0
        k = self.k
        while True:
            if self.iterations >= self.max_iter:
                return LpStatus.ITERATION_LIMIT
            d = self.d
            nb = ~self.is_basic
            room_up = nb & (self.x < self.hi - 1e-12)
            room_dn = nb & (self.x > self.lo + 1e-12)
            rate = np.maximum(np.where(room_up, -d, 0.0), np.where(room_dn, d, 0.0))
            cand = np.flatnonzero(rate > COST_TOL)
            if len(cand) == 0:
                # confirm on a fresh factorisation before declaring optimality
                if since_refactor:
                    self.refactor(cost)
                    since_refactor = 0
                    continue
                return LpStatus.OPTIMAL
            bland = degenerate > k
            q = int(cand[0]) if bland else int(cand[np.argmax(rate[cand])])
            sigma = 1.0 if (room_up[q] and -d[q] > COST_TOL) else -1.0

            alpha = self.T[:, q]
            sa = sigma * alpha
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            ratios = np.full(k, np.inf)
            dec = sa > PIVOT_TOL
            inc = sa < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lob[dec]) / sa[dec]
                ratios[inc] = (hib[inc] - xb[inc]) / (-sa[inc])
            ratios = np.maximum(ratios, 0.0)
            flip = self.hi[q] - self.lo[q]
            r = -1
            t = flip
            if k:
                tmin = ratios.min()
                if tmin < flip:
                    t = tmin
                    ties = np.flatnonzero(ratios <= tmin + 1e-12)
                    if bland:
                        r = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
            if not np.isfinite(t):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            degenerate = degenerate + 1 if t <= 1e-12 else 0
            self.x[self.basis] = xb - t * sa
            self.x[q] += sigma * t
            if r < 0:
                # bound flip, basis unchanged; snap to the bound exactly
                self.x[q] = self.hi[q] if sigma > 0 else self.lo[q]
                continue
            leaving = self.basis[r]
            self.x[leaving] = self.lo[leaving] if dec[r] else self.hi[leaving]
            # pivot
            piv = self.T[r] / alpha[r]
            col = alpha.copy()
            col[r] = 0.0
            self.T -= np.outer(col, piv)
            self.T[r] = piv
            self.d = self.d - self.d[q] * piv
            self.basis[r] = q
            self.is_basic[leaving] = False
            self.is_basic[q] = True
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self.refactor(cost)
                since_refactor = 0

    def solve(self) -> LpSolution:
        n, k = self.n, self.k
        na = len(self.art_rows)
        ncol = n + k + na
        if na:
            cost1 = np.zeros(ncol)
            cost1[n + k:] = 1.0
            status = self.run(cost1)
            if status is LpStatus.ITERATION_LIMIT:
                return LpSolution(status, iterations=self.iterations)
            infeas = self.x[n + k:].sum()
            scale = max(1.0, float(np.abs(self.p.b).max(initial=0.0)))
            if infeas > FEAS_TOL * scale:
                return LpSolution(LpStatus.INFEASIBLE, iterations=self.iterations)
            # artificials are pinned at zero from here on
            self.hi[n + k:] = 0.0
            self.x[n + k:] = np.minimum(self.x[n + k:], 0.0)
        cost = np.zeros(ncol)
        cost[:n] = self.p.c
        status = self.run(cost)
        if status is not LpStatus.OPTIMAL:
            return LpSolution(status, iterations=self.iterations)
        x = self.x[:n].copy()
        # snap nonbasic structurals onto their bounds
        duals = -self.d[n:n + k].copy()
        rc = self.d[:n].copy()
        basis = np.array(self.basis)
        art = basis >= n + k
        basis[art] = n + self.art_rows[basis[art] - n - k]
        return LpSolution(
            LpStatus.OPTIMAL, x=x, objective=float(self.p.c @ x), duals=duals,
            reduced_costs=rc, basis=tuple(sorted(int(j) for j in basis)),
            iterations=self.iterations,
        )


def _solve_highs(p: LpProblem, A_sparse=None) -> LpSolution:
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix

    if p.k and A_sparse is None:
        A_sparse = csr_matrix(p.A)
    res = linprog(p.c, A_ub=A_sparse if p.k else None, b_ub=p.b if p.k else None,
                  bounds=np.column_stack([p.lb, p.ub]), method="highs")
    status = {0: LpStatus.OPTIMAL, 1: LpStatus.ITERATION_LIMIT,
              2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}.get(res.status, LpStatus.INFEASIBLE)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, backend="highs")
    duals = np.asarray(res.ineqlin.marginals, float) if p.k else np.zeros(0)
    rc = p.c - p.A.T @ duals
    return LpSolution(LpStatus.OPTIMAL, x=np.asarray(res.x, float), objective=float(res.fun),
                      duals=duals, reduced_costs=rc, iterations=int(res.nit), backend="highs")


def solve_lp(p: LpProblem, *, max_iter: int | None = None, backend: str = "simplex") -> LpSolution:
    """Solve the continuous LP (the binary mask must be empty)."""
    if p.binary.any():
        raise ValueError("solve_lp got binary variables; use solve_milp")
    if backend in ("highs", "bnb-highs"):
        return _solve_highs(p)
    if backend != "simplex":
        raise ValueError(f"unknown backend {backend!r}")
    if max_iter is None:
        max_iter = 10 * (p.k + p.n) ** 2 + 100
    return _Simplex(p, max_iter).solve()


def _solve_highs_milp(p: LpProblem, node_limit: int) -> LpSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    cons = [LinearConstraint(p.A, -np.inf, p.b)] if p.k else []
    res = milp(p.c, constraints=cons, integrality=p.binary.astype(int),
               bounds=Bounds(p.lb, p.ub), options={"node_limit": node_limit, "mip_rel_gap": 1e-9})
    if res.status == 0:
        x = np.asarray(res.x, float)
        x[p.binary] = np.round(x[p.binary])
        return LpSolution(LpStatus.OPTIMAL, x=x, objective=float(p.c @ x), backend="highs")
    status = {1: LpStatus.ITERATION_LIMIT, 2: LpStatus.INFEASIBLE,
              3: LpStatus.UNBOUNDED}.get(res.status, LpStatus.INFEASIBLE)
    return LpSolution(status, backend="highs")


class _HighsNodeSolver:
    """One persistent HiGHS model; node relaxations only change bounds and warm-start."""

    def __init__(self, p: LpProblem):
        import highspy
        from scipy.sparse import csc_matrix

        self._hs = highspy
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        lp = highspy.HighsLp()
        lp.num_col_, lp.num_row_ = p.n, p.k
        lp.col_cost_, lp.col_lower_, lp.col_upper_ = p.c, p.lb, p.ub
        lp.row_lower_ = np.full(p.k, -highspy.kHighsInf)
        lp.row_upper_ = p.b
        A = csc_matrix(p.A)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_, lp.a_matrix_.index_, lp.a_matrix_.value_ = A.indptr, A.indices, A.data
        h.passModel(lp)
        self.h, self.p = h, p
        self.idx = np.arange(p.n, dtype=np.int32)

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> LpSolution:
        hs, h, p = self._hs, self.h, self.p
        h.changeColsBounds(p.n, self.idx, lb, ub)
        h.run()
        ms = h.getModelStatus()
        if ms == hs.HighsModelStatus.kInfeasible:
            return LpSolution(LpStatus.INFEASIBLE, backend="highs")
        if ms != hs.HighsModelStatus.kOptimal:
            # unbounded, unknown or limit verdicts after a warm start get a cold solve
            return _solve_highs(p.with_bounds(lb, ub))
        sol = h.getSolution()
        x = np.asarray(sol.col_value, float)
        duals = np.minimum(np.asarray(sol.row_dual, float), 0.0) if p.k else np.zeros(0)
        return LpSolution(LpStatus.OPTIMAL, x=x, objective=float(p.c @ x), duals=duals,
                          reduced_costs=p.c - p.A.T @ duals, iterations=int(h.getInfo().simplex_iteration_count),
                          backend="highs")


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)


def solve_milp(p: LpProblem, *, node_limit: int = 10**6, backend: str = "simplex") -> LpSolution:
    """Branch-and-bound over the binary mask.

    Dives depth-first (rounding direction first) from every node taken off
    the best-bound heap; branches on the most fractional binary.
    """
    if not p.binary.any():
        return solve_lp(p, backend=backend)
    if np.any(p.lb[p.binary] < 0) or np.any(p.ub[p.binary] > 1):
        raise ValueError("binary variables must be bounded in [0, 1]")
    if backend == "highs":
        return _solve_highs_milp(p, node_limit)
    # "bnb-highs" keeps this branch-and-bound but solves node relaxations with HiGHS
    relax = p.relaxed()
    if backend == "bnb-highs":
        node_solver = _HighsNodeSolver(relax)

        def node_lp(q):
            return node_solver.solve(q.lb, q.ub)
    else:
        def node_lp(q):
            return solve_lp(q, backend=backend)
    bin_idx = np.flatnonzero(p.binary)
    best: LpSolution | None = None
    best_val = np.inf
    nodes = 0
    iters = 0
    seq = 0
    heap = [_Node(-np.inf, seq, relax.lb.copy(), relax.ub.copy())]
    root_status = None

    def pruned(bound):
        return bound >= best_val - 1e-9 * (1.0 + abs(best_val))

    while heap:
        node = heapq.heappop(heap)
        if pruned(node.bound):
            continue
        lb, ub = node.lb, node.ub
        while True:
            if nodes >= node_limit:
                return LpSolution(LpStatus.ITERATION_LIMIT, nodes=nodes, iterations=iters)
            sol = node_lp(relax.with_bounds(lb, ub))
            nodes += 1
            iters += sol.iterations
            if root_status is None:
                root_status = sol.status
                if sol.status is LpStatus.UNBOUNDED:
                    return LpSolution(LpStatus.UNBOUNDED, nodes=nodes, iterations=iters)
            if sol.status is LpStatus.ITERATION_LIMIT:
                return LpSolution(LpStatus.ITERATION_LIMIT, nodes=nodes, iterations=iters)
            if not sol.ok or pruned(sol.objective):
                break
            xb = sol.x[bin_idx]
            frac = np.abs(xb - np.round(xb))
            if frac.max() <= INT_TOL:
                x = sol.x.copy()
                x[bin_idx] = np.round(xb)
                best, best_val = sol, sol.objective
                best = LpSolution(LpStatus.OPTIMAL, x=x, objective=float(p.c @ x),
                                  duals=sol.duals, reduced_costs=sol.reduced_costs,
                                  basis=sol.basis)
                break
            j = int(bin_idx[np.argmax(frac)])
            go_up = sol.x[j] >= 0.5
            lb_dn, ub_dn = lb.copy(), ub.copy()
            ub_dn[j] = 0.0
            lb_up, ub_up = lb.copy(), ub.copy()
            lb_up[j] = 1.0
            seq += 1
            if go_up:
                heapq.heappush(heap, _Node(sol.objective, seq, lb_dn, ub_dn))
                lb, ub = lb_up, ub_up
            else:
                heapq.heappush(heap, _Node(sol.objective, seq, lb_up, ub_up))
                lb, ub = lb_dn, ub_dn
    if best is None:
        return LpSolution(LpStatus.INFEASIBLE, nodes=nodes, iterations=iters)
    return LpSolution(best.status, x=best.x, objective=best.objective, duals=best.duals,
                      reduced_costs=best.reduced_costs, basis=best.basis,
                      iterations=iters, nodes=nodes)
