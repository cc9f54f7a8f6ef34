"""Polytope utilities for ``U = {z : H z <= h}``."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .model import UncertaintySet, set_emptiness_and_bounds

DEDUP_TOL = 1e-7
FEAS_TOL = 1e-7
RANK_TOL = 1e-9
MAX_DIM = 12
MAX_SUBSETS = 10**6
_CHUNK = 20000


class VertexGuardError(ValueError):
    """Vertex enumeration would exceed the size guard."""


@dataclass(frozen=True, eq=False)
class VertexList:
    vertices: np.ndarray
    tol: float = DEDUP_TOL

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __getitem__(self, i):
        return self.vertices[i]


def _lex_sort(V: np.ndarray) -> np.ndarray:
    if len(V) == 0:
        return V
    order = np.lexsort(V.T[::-1])
    return V[order]


def _dedup(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) == 0:
        return points
    # rounding to a grid is fast but can split near-equal points, so confirm pairwise
    pts = _lex_sort(points)
    kept: list[np.ndarray] = []
    for p in pts:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    return np.array(kept)


def enumerate_vertices(U: UncertaintySet, tol: float = DEDUP_TOL) -> VertexList:
    """All basic feasible points of ``U``, sorted lexicographically.

    Every L-subset of rows whose matrix is nonsingular is solved; feasible
    solutions are kept once.  Raises on empty or unbounded sets.
    """
    H, h = U.H, U.h
    k, L = H.shape
    if L == 0:
        return VertexList(np.zeros((1, 0)), tol)
    if L > MAX_DIM:
        raise VertexGuardError(f"uncertainty dimension {L} exceeds the limit {MAX_DIM}")
    n_sub = comb(k, L)
    if n_sub > MAX_SUBSETS:
        raise VertexGuardError(f"{n_sub} row subsets exceed the limit {MAX_SUBSETS}")
    nonempty, bounded = set_emptiness_and_bounds(H, h)
    if not nonempty:
        raise ValueError("uncertainty set empty")
    if not bounded:
        raise ValueError("uncertainty set unbounded")
    scale = max(1.0, float(np.max(np.abs(h))) if k else 1.0)
    found = []
    subsets = combinations(range(k), L)
    while True:
        chunk = np.array([s for _, s in zip(range(_CHUNK), subsets)], dtype=int)
        if len(chunk) == 0:
            break
        M = H[chunk]  # (N, L, L)
        rhs = h[chunk]
        sv = np.linalg.svd(M, compute_uv=False)
        good = sv[:, -1] > RANK_TOL * np.maximum(sv[:, 0], 1.0)
        if good.any():
            Z = np.linalg.solve(M[good], rhs[good][..., None])[..., 0]
            viol = Z @ H.T - h
            feas = np.all(viol <= FEAS_TOL * scale, axis=1)
            found.append(Z[feas])
    pts = np.vstack(found) if found else np.zeros((0, L))
    V = _dedup(pts, tol) + 0.0  # drop negative zeros
    if len(V) == 0:
        raise ValueError("no vertices found (set is empty or has no vertices)")
    return VertexList(V, tol)


def vertices_of(U: UncertaintySet) -> np.ndarray:
    """Cached vertices if present, else enumerated ones."""
    if U.vertices is not None:
        return np.array(U.vertices)
    return enumerate_vertices(U).vertices


@dataclass(frozen=True, eq=False)
class InteriorPoint:
    """Vertex centroid with its slack report.

    ``implicit`` flags rows that are tight at every vertex (implicit
    equalities); every other row has strictly positive slack at ``z``.
    """

    z: np.ndarray
    slack: np.ndarray
    implicit: np.ndarray

    @property
    def strict(self) -> bool:
        free = ~self.implicit
        return bool(np.all(self.slack[free] > 0))


def interior_point(U: UncertaintySet, vertices: np.ndarray | None = None) -> InteriorPoint:
    V = vertices_of(U) if vertices is None else np.asarray(vertices, float)
    if len(V) == 0:
        raise ValueError("uncertainty set empty")
    z = V.mean(axis=0)
    slack = U.h - U.H @ z
    vslack = U.h[None, :] - V @ U.H.T
    implicit = np.all(np.abs(vslack) <= FEAS_TOL * max(1.0, float(np.max(np.abs(U.h), initial=0))), axis=0)
    return InteriorPoint(z, slack, implicit)


def gauss_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank by Gaussian elimination with full pivoting."""
    A = np.array(M, dtype=float)
    if A.size == 0:
        return 0
    rows, cols = A.shape
    rank = 0
    for _ in range(min(rows, cols)):
        sub = np.abs(A[rank:, rank:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= tol:
            break
        i += rank
        j += rank
        A[[rank, i]] = A[[i, rank]]
        A[:, [rank, j]] = A[:, [j, rank]]
        A[rank + 1:] -= np.outer(A[rank + 1:, rank] / A[rank, rank], A[rank])
        rank += 1
    return rank


@dataclass(frozen=True)
class SimplexTest:
    is_simplex: bool
    n_vertices: int
    rank: int
    dim: int

    def __bool__(self) -> bool:
        return self.is_simplex


def is_simplex(U: UncertaintySet, vertices: np.ndarray | None = None) -> SimplexTest:
    """True iff U has L+1 affinely independent vertices."""
    V = vertices_of(U) if vertices is None else np.asarray(vertices, float)
    L = U.L
    rank = gauss_rank(V[1:] - V[0]) if len(V) > 1 else 0
    return SimplexTest(len(V) == L + 1 and rank == L, len(V), rank, L)


def _hull_basis(V: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the directions spanned by the vertices."""
    D = V - V.mean(axis=0)
    if len(D) == 0:
        return np.zeros((V.shape[1], 0))
    _, s, Vt = np.linalg.svd(D, full_matrices=False)
    r = int(np.sum(s > RANK_TOL * max(1.0, s[0] if len(s) else 1.0)))
    return Vt[:r].T


def sample_uniform(U: UncertaintySet, count: int, seed: int | None = None, *,
                   burn_in: int = 100, thin: int = 10,
                   vertices: np.ndarray | None = None) -> np.ndarray:
    """Hit-and-run samples from ``U`` started at the vertex centroid.

    Directions are uniform on the unit sphere of the affine hull of ``U`` so
    lower-dimensional sets are handled.
    """
    rng = np.random.default_rng(seed)
    V = vertices_of(U) if vertices is None else np.asarray(vertices, float)
    z = V.mean(axis=0)
    basis = _hull_basis(V)
    out = np.empty((count, U.L))
    if basis.shape[1] == 0:
        out[:] = z
        return out
    H, h = U.H, U.h
    total = burn_in + count * thin
    taken = 0
    for step in range(total):
        d = basis @ rng.standard_normal(basis.shape[1])
        d /= np.linalg.norm(d)
        Hd = H @ d
        slack = np.maximum(h - H @ z, 0.0)
        pos = Hd > 1e-12
        neg = Hd < -1e-12
        t_hi = np.min(slack[pos] / Hd[pos]) if pos.any() else 0.0
        t_lo = np.max(slack[neg] / Hd[neg]) if neg.any() else 0.0
        z = z + rng.uniform(t_lo, t_hi) * d
        if step >= burn_in and (step - burn_in) % thin == thin - 1:
            out[taken] = z
            taken += 1
    return out
