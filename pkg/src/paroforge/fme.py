"""Fourier-Motzkin elimination of Stage-2 variables with bound provenance.

Every row of the working system is a nonnegative combination of the original
rows ``a_p(z) @ x + b_p @ y <= r_p(z)``; the multipliers are tracked in
``alpha``.  When ``y_k`` is eliminated, each row that bounds it is recorded as
a ``BoundRecord`` so the variable can later be reconstructed from ``x``, ``z``
and the variables eliminated after it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .lp import LpProblem, LpStatus, solve_lp
from .model import TwoStageProblem

ZERO_TOL = 1e-12
MAX_ROWS = 200_000


class EliminationBlowupError(RuntimeError):
    def __init__(self, rows: int, variable: int):
        super().__init__(f"elimination of y{variable} would create {rows} rows (limit {MAX_ROWS})")
        self.rows = rows
        self.variable = variable


class EmptyIntervalError(ValueError):
    def __init__(self, variable: int, gap: float):
        super().__init__(f"empty interval for y{variable}: lower bound exceeds upper by {gap:.3g}")
        self.variable = variable
        self.gap = gap


@dataclass(frozen=True, eq=False)
class AffineRows:
    """Rows ``G(z) @ x + Y @ y <= f(z)`` with ``G(z) = G0 + sum_l z_l Gt[l]``, ``f = f0 + F z``."""

    G0: np.ndarray
    Gt: np.ndarray
    Y: np.ndarray
    f0: np.ndarray
    F: np.ndarray
    alpha: tuple[dict, ...] = ()

    @property
    def count(self) -> int:
        return len(self.f0)

    def G_at(self, z) -> np.ndarray:
        z = np.asarray(z, float)
        if len(z) == 0:
            return np.array(self.G0)
        return self.G0 + np.tensordot(z, self.Gt, axes=1)

    def f_at(self, z) -> np.ndarray:
        return self.f0 + self.F @ np.asarray(z, float)

    def residual(self, x, z, y=None) -> np.ndarray:
        """``lhs - rhs`` per row; nonpositive means satisfied."""
        lhs = self.G_at(z) @ np.asarray(x, float)
        if y is not None and self.Y.shape[1]:
            lhs = lhs + self.Y @ np.asarray(y, float)
        return lhs - self.f_at(z)

    def take(self, idx) -> "AffineRows":
        idx = np.asarray(idx, dtype=int)
        return AffineRows(self.G0[idx], self.Gt[:, idx], self.Y[idx], self.f0[idx], self.F[idx],
                          tuple(self.alpha[i] for i in idx))

    def has_stage2(self) -> bool:
        return bool(np.any(np.abs(self.Y) > ZERO_TOL))


class BoundKind(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True, eq=False)
class BoundRecord:
    """One bound on an eliminated variable.

    ``y_k >= value`` (lower) or ``y_k <= value`` (upper) with
    ``value = sum_p alpha[p] * phi_p(x, z) + sum_l beta[l] * y_l`` and
    ``phi_p(x, z) = r_p(z) - a_p(z) @ x``.  The affine pieces of the source
    row are kept for fast evaluation.
    """

    kind: BoundKind
    variable: int
    alpha: dict
    beta: dict
    coef: float
    g0: np.ndarray
    gt: np.ndarray
    f0: float
    F: np.ndarray
    ycoef: np.ndarray = field(repr=False)

    def value(self, x, z, y) -> float:
        z = np.asarray(z, float)
        g = self.g0 + (self.gt.T @ z if len(z) else 0.0)
        rest = self.f0 + float(self.F @ z) - float(g @ np.asarray(x, float))
        rest -= float(self.ycoef @ np.asarray(y, float))
        return rest / self.coef


@dataclass(frozen=True, eq=False)
class EliminationResult:
    order: tuple[int, ...]
    ledger: dict
    system: AffineRows
    rows_before: int
    d: np.ndarray
    n_x: int
    n_y: int

    @property
    def rows_after(self) -> int:
        return self.system.count

    @property
    def complete(self) -> bool:
        return len(self.order) == self.n_y

    def to_dict(self) -> dict:
        """JSON-friendly dump of the static system and ledger."""
        def rec(r: BoundRecord):
            return {"kind": r.kind.value, "alpha": {str(k): v for k, v in r.alpha.items()},
                    "beta": {str(k): v for k, v in r.beta.items()}}
        s = self.system
        return {
            "order": list(self.order),
            "rows_before": self.rows_before,
            "rows_after": self.rows_after,
            "system": {"G0": s.G0.tolist(), "Gt": s.Gt.tolist(), "Y": s.Y.tolist(),
                       "f0": s.f0.tolist(), "F": s.F.tolist()},
            "ledger": {str(k): {"lower": [rec(r) for r in lo], "upper": [rec(r) for r in up]}
                       for k, (lo, up) in self.ledger.items()},
        }


def _initial_rows(problem: TwoStageProblem) -> AffineRows:
    return AffineRows(np.array(problem.A0), np.array(problem.A), np.array(problem.B),
                      np.array(problem.r0), np.array(problem.R),
                      tuple({p: 1.0} for p in range(problem.m)))


def _combine_alpha(a: dict, wa: float, b: dict, wb: float) -> dict:
    out = {p: v * wa for p, v in a.items()}
    for p, v in b.items():
        out[p] = out.get(p, 0.0) + v * wb
    return out


def _record(rows: AffineRows, i: int, k: int, kind: BoundKind) -> BoundRecord:
    a = float(rows.Y[i, k])
    ycoef = rows.Y[i].copy()
    ycoef[k] = 0.0
    beta = {int(l): float(-ycoef[l] / a) for l in np.flatnonzero(np.abs(ycoef) > ZERO_TOL)}
    alpha = {p: v / a for p, v in rows.alpha[i].items()}
    return BoundRecord(kind, k, alpha, beta, a, rows.G0[i].copy(), rows.Gt[:, i].copy(),
                       float(rows.f0[i]), rows.F[i].copy(), ycoef)


def _eliminate_one(rows: AffineRows, k: int) -> tuple[AffineRows, tuple, tuple]:
    col = rows.Y[:, k]
    upper = np.flatnonzero(col > ZERO_TOL)
    lower = np.flatnonzero(col < -ZERO_TOL)
    neutral = np.flatnonzero(np.abs(col) <= ZERO_TOL)
    new_count = len(neutral) + len(lower) * len(upper)
    if new_count > MAX_ROWS:
        raise EliminationBlowupError(new_count, k)
    lo_recs = tuple(_record(rows, i, k, BoundKind.LOWER) for i in lower)
    up_recs = tuple(_record(rows, j, k, BoundKind.UPPER) for j in upper)
    if len(lower) and len(upper):
        li, uj = np.meshgrid(lower, upper, indexing="ij")
        li, uj = li.ravel(), uj.ravel()
        wl = 1.0 / -col[li]
        wu = 1.0 / col[uj]
        G0 = rows.G0[li] * wl[:, None] + rows.G0[uj] * wu[:, None]
        Gt = rows.Gt[:, li] * wl[None, :, None] + rows.Gt[:, uj] * wu[None, :, None]
        Y = rows.Y[li] * wl[:, None] + rows.Y[uj] * wu[:, None]
        Y[:, k] = 0.0
        f0 = rows.f0[li] * wl + rows.f0[uj] * wu
        F = rows.F[li] * wl[:, None] + rows.F[uj] * wu[:, None]
        alpha = tuple(_combine_alpha(rows.alpha[i], a, rows.alpha[j], b)
                      for i, j, a, b in zip(li, uj, wl, wu))
    else:
        G0 = np.zeros((0, rows.G0.shape[1]))
        Gt = np.zeros((rows.Gt.shape[0], 0, rows.G0.shape[1]))
        Y = np.zeros((0, rows.Y.shape[1]))
        f0 = np.zeros(0)
        F = np.zeros((0, rows.F.shape[1]))
        alpha = ()
    keep = rows.take(neutral)
    out = AffineRows(np.vstack([keep.G0, G0]), np.concatenate([keep.Gt, Gt], axis=1),
                     np.vstack([keep.Y, Y]), np.concatenate([keep.f0, f0]),
                     np.vstack([keep.F, F]), keep.alpha + alpha)
    return out, lo_recs, up_recs


def eliminate(problem: TwoStageProblem, count: int | None = None,
              order=None) -> EliminationResult:
    """Eliminate ``count`` Stage-2 variables in ``order`` (default: index order)."""
    n_y = problem.n_y
    if order is None:
        order = list(range(n_y))
    order = [int(k) for k in order]
    if count is None:
        count = len(order)
    if count > n_y or count > len(order):
        raise ValueError(f"cannot eliminate {count} of {n_y} Stage-2 variables with order {order}")
    if len(set(order)) != len(order) or any(k < 0 or k >= n_y for k in order):
        raise ValueError(f"order {order} is not a permutation prefix of 0..{n_y - 1}")
    order = order[:count]
    rows = _initial_rows(problem)
    ledger = {}
    for k in order:
        rows, lo, up = _eliminate_one(rows, k)
        ledger[k] = (lo, up)
    return EliminationResult(tuple(order), ledger, rows, problem.m, np.array(problem.d),
                             problem.n_x, n_y)


def _normalized(rows: AffineRows) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (lhs || F) scaled by the largest lhs coefficient, and the scale."""
    lhs = np.hstack([rows.G0, rows.Gt.transpose(1, 0, 2).reshape(rows.count, -1), rows.Y])
    scale = np.max(np.abs(lhs), axis=1) if lhs.shape[1] else np.zeros(rows.count)
    return lhs, scale


def _syntactic_keep(rows: AffineRows, tol: float) -> list[int]:
    lhs, scale = _normalized(rows)
    keep: list[int] = []
    signatures: list[tuple[np.ndarray, float]] = []
    order = []
    for i in range(rows.count):
        if scale[i] <= ZERO_TOL:
            # no variables: trivial if it holds for every z with F = 0
            if np.all(np.abs(rows.F[i]) <= ZERO_TOL) and rows.f0[i] >= -tol:
                continue
            sig = np.concatenate([np.zeros(lhs.shape[1]), rows.F[i]])
            order.append((i, sig, rows.f0[i]))
            continue
        sig = np.concatenate([lhs[i], rows.F[i]]) / scale[i]
        order.append((i, sig, rows.f0[i] / scale[i]))
    # a row is dominated by another with identical signature and smaller rhs constant
    for i, sig, b in order:
        dominated = False
        for j, (sj, bj) in enumerate(signatures):
            if np.max(np.abs(sig - sj)) <= 1e-12 * max(1.0, np.max(np.abs(sig))):
                if bj <= b + tol * max(1.0, abs(b)):
                    dominated = True
                else:
                    keep[j] = i
                    signatures[j] = (sig, b)
                    dominated = True
                break
        if not dominated:
            keep.append(i)
            signatures.append((sig, b))
    return sorted(keep)


def filter_redundant(result: EliminationResult, level: str = "syntactic", *,
                     vertices=None, x_box=None, tol: float = 1e-9) -> EliminationResult:
    """Drop redundant rows of the static system.

    ``syntactic`` removes trivial rows (``0 <= nonnegative``), duplicates and
    rows whose normalized coefficients match a tighter row.  ``lp`` then also
    removes row ``i`` when, at every vertex of U, maximizing its violation over
    the x-set cut out by the other kept rows gives at most zero.  Rows that
    still carry Stage-2 coefficients are only filtered syntactically.
    ``x_box = (lo, hi)`` optionally bounds x in those LPs.
    """
    if level == "none":
        return result
    if level not in ("syntactic", "lp"):
        raise ValueError(f"unknown filter level {level!r}")
    rows = result.system
    keep = _syntactic_keep(rows, tol)
    rows = rows.take(keep)
    if level == "lp" and rows.count:
        if vertices is None:
            raise ValueError("the lp filter needs the vertices of U")
        rows = _lp_filter(rows, np.asarray(vertices, float), x_box, tol)
    return EliminationResult(result.order, result.ledger, rows, result.rows_before,
                             result.d, result.n_x, result.n_y)


def _lp_filter(rows: AffineRows, V: np.ndarray, x_box, tol: float) -> AffineRows:
    n_x = rows.G0.shape[1]
    stage1 = ~np.any(np.abs(rows.Y) > ZERO_TOL, axis=1)
    lo = np.full(n_x, -np.inf) if x_box is None else np.asarray(x_box[0], float)
    hi = np.full(n_x, np.inf) if x_box is None else np.asarray(x_box[1], float)
    Gv = np.stack([rows.G_at(z) for z in V])  # (N, r, n_x)
    fv = np.stack([rows.f_at(z) for z in V])  # (N, r)
    alive = np.ones(rows.count, bool)
    # the x-set must be nonempty for redundancy to be meaningful
    base = LpProblem.build(np.zeros(n_x), Gv[:, stage1].reshape(-1, n_x), fv[:, stage1].ravel(),
                           lb=lo, ub=hi)
    if solve_lp(base).status is not LpStatus.OPTIMAL:
        return rows
    for i in range(rows.count):
        if not stage1[i]:
            continue
        others = alive & stage1
        others[i] = False
        A_ub = Gv[:, others].reshape(-1, n_x)
        b_ub = fv[:, others].ravel()
        redundant = True
        for v in range(len(V)):
            g = Gv[v, i]
            if not np.any(np.abs(g) > ZERO_TOL):
                if -fv[v, i] > tol:
                    redundant = False
                    break
                continue
            sol = solve_lp(LpProblem.build(-g, A_ub, b_ub, lb=lo, ub=hi))
            if sol.status is not LpStatus.OPTIMAL or -sol.objective - fv[v, i] > tol * max(1.0, abs(fv[v, i])):
                redundant = False
                break
        if redundant:
            alive[i] = False
    return rows.take(np.flatnonzero(alive))


POLICIES = ("lower", "upper", "midpoint", "objective-greedy")


def _pick(lb: float, ub: float, policy: str, dk: float) -> float:
    if policy == "objective-greedy":
        policy = "upper" if dk < 0 else "lower" if dk > 0 else "midpoint"
    if policy == "lower":
        return lb if np.isfinite(lb) else (ub if np.isfinite(ub) else 0.0)
    if policy == "upper":
        return ub if np.isfinite(ub) else (lb if np.isfinite(lb) else 0.0)
    if np.isfinite(lb) and np.isfinite(ub):
        return 0.5 * (lb + ub)
    if np.isfinite(lb):
        return lb
    return ub if np.isfinite(ub) else 0.0


def recourse_intervals(result: EliminationResult, x, z, policy: str = "midpoint",
                       tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Back-substitute and return ``(y, lower, upper)`` per Stage-2 variable."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if not result.complete:
        raise ValueError("back-substitution needs every Stage-2 variable eliminated")
    res = result.system.residual(x, z)
    if res.size and res.max() > tol:
        i = int(np.argmax(res))
        raise ValueError(f"x violates static row {i} at z by {res[i]:.3g}")
    y = np.zeros(result.n_y)
    lows = np.full(result.n_y, -np.inf)
    ups = np.full(result.n_y, np.inf)
    for k in reversed(result.order):
        lo_recs, up_recs = result.ledger[k]
        lb = max((r.value(x, z, y) for r in lo_recs), default=-np.inf)
        ub = min((r.value(x, z, y) for r in up_recs), default=np.inf)
        if lb > ub + tol * max(1.0, abs(lb), abs(ub)):
            raise EmptyIntervalError(k, lb - ub)
        if lb > ub:
            lb = ub = 0.5 * (lb + ub)
        lows[k], ups[k] = lb, ub
        y[k] = _pick(lb, ub, policy, float(result.d[k]))
    return y, lows, ups


def reconstruct_recourse(result: EliminationResult, x, z, policy: str = "midpoint",
                         tol: float = 1e-7) -> np.ndarray:
    """Stage-2 vector at ``z`` chosen inside the back-substitution intervals."""
    return recourse_intervals(result, x, z, policy, tol)[0]
