"""Two-stage adaptive robust linear problems.

    min_x max_{z in U}  c(z) @ x + d @ y(z)
    s.t. A(z) @ x + B @ y(z) <= r(z)   for all z in U

with ``c(z) = c0 + C z``, ``A(z) = A0 + sum_l z_l A[l]``, ``r(z) = r0 + R z`` and
a polyhedral uncertainty set ``U = {z : H z <= h}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .lp import LpProblem, LpStatus, solve_lp

OCCURS_TOL = 1e-12


class ProblemFormatError(ValueError):
    """Malformed or schema-violating problem document."""


class InvalidProblemError(ValueError):
    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(report.violations))
        self.report = report


def _frozen(a, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.size == 0:
        arr = arr.reshape((0,) * ndim) if arr.ndim != ndim else arr
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Polytope ``{z : H z <= h}`` with optional cached vertices and nominal point."""

    H: np.ndarray
    h: np.ndarray
    vertices: np.ndarray | None = None
    nominal: np.ndarray | None = None

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        if H.ndim == 1:
            H = H.reshape(-1, 1) if H.size else H.reshape(0, 0)
        H.flags.writeable = False
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", _frozen(self.h).ravel())
        if self.vertices is not None:
            V = np.array(self.vertices, dtype=float).reshape(-1, H.shape[1])
            V.flags.writeable = False
            object.__setattr__(self, "vertices", V)
        if self.nominal is not None:
            object.__setattr__(self, "nominal", _frozen(self.nominal).ravel())

    @property
    def L(self) -> int:
        return self.H.shape[1]

    @classmethod
    def box(cls, lo, hi, **kw) -> "UncertaintySet":
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        L = len(lo)
        I = np.eye(L)
        return cls(np.vstack([I, -I]), np.concatenate([hi, -lo]), **kw)

    def slack(self, z) -> np.ndarray:
        return self.h - self.H @ np.asarray(z, float)

    def contains(self, z, tol: float = 1e-7) -> bool:
        return bool(np.all(self.slack(z) >= -tol))

    def with_vertices(self, vertices) -> "UncertaintySet":
        return UncertaintySet(self.H, self.h, vertices, self.nominal)


@dataclass(frozen=True, eq=False)
class TwoStageProblem:
    c0: np.ndarray
    C: np.ndarray
    d: np.ndarray
    A0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    r0: np.ndarray
    R: np.ndarray
    uncertainty: UncertaintySet
    integrality: np.ndarray = field(default=None)

    def __post_init__(self):
        c0 = _frozen(self.c0).ravel()
        d = _frozen(self.d).ravel()
        r0 = _frozen(self.r0).ravel()
        n_x, n_y, m = len(c0), len(d), len(r0)
        L = self.uncertainty.L

        def mat(a, shape):
            arr = np.array(a, dtype=float)
            if arr.size == 0 and 0 in shape:
                arr = arr.reshape(shape)
            elif arr.ndim != len(shape):
                try:
                    arr = arr.reshape(shape)
                except ValueError:
                    pass
            arr.flags.writeable = False
            return arr

        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "C", mat(self.C, (n_x, L)))
        object.__setattr__(self, "A0", mat(self.A0, (m, n_x)))
        object.__setattr__(self, "A", mat(self.A, (L, m, n_x)))
        object.__setattr__(self, "B", mat(self.B, (m, n_y)))
        object.__setattr__(self, "R", mat(self.R, (m, L)))
        integ = np.zeros(n_x, bool) if self.integrality is None else np.array(self.integrality, bool).ravel()
        integ.flags.writeable = False
        object.__setattr__(self, "integrality", integ)

    @classmethod
    def create(cls, c0, d, A0, B, r0, uncertainty, C=None, A=None, R=None,
               integrality=None) -> "TwoStageProblem":
        """Constructor with zero defaults for the uncertain parts."""
        n_x = len(np.ravel(c0))
        m = len(np.ravel(r0))
        L = uncertainty.L
        if C is None:
            C = np.zeros((n_x, L))
        if A is None:
            A = np.zeros((L, m, n_x))
        if R is None:
            R = np.zeros((m, L))
        return cls(c0, C, d, A0, A, B, r0, R, uncertainty, integrality)

    @property
    def n_x(self) -> int:
        return len(self.c0)

    @property
    def n_y(self) -> int:
        return len(self.d)

    @property
    def m(self) -> int:
        return len(self.r0)

    @property
    def L(self) -> int:
        return self.uncertainty.L

    def c_at(self, z) -> np.ndarray:
        return self.c0 + self.C @ np.asarray(z, float)

    def A_at(self, z) -> np.ndarray:
        z = np.asarray(z, float)
        if self.L == 0:
            return np.array(self.A0)
        return self.A0 + np.tensordot(z, self.A, axes=1)

    def r_at(self, z) -> np.ndarray:
        return self.r0 + self.R @ np.asarray(z, float)

    # long-form aliases for the affine data
    @property
    def Cmat(self) -> np.ndarray:
        return self.C

    @property
    def Atens(self) -> np.ndarray:
        return self.A

    @property
    def Rmat(self) -> np.ndarray:
        return self.R

    @property
    def rhs_only(self) -> bool:
        """True when only ``r`` depends on ``z``."""
        return not (np.any(np.abs(self.C) > OCCURS_TOL) or np.any(np.abs(self.A) > OCCURS_TOL))

    def replace(self, **changes) -> "TwoStageProblem":
        fields = dict(c0=self.c0, C=self.C, d=self.d, A0=self.A0, A=self.A, B=self.B,
                      r0=self.r0, R=self.R, uncertainty=self.uncertainty,
                      integrality=self.integrality)
        fields.update(changes)
        return TwoStageProblem(**fields)


def as_scenario(z, L: int | None = None) -> np.ndarray:
    """Finite float vector of length ``L`` (checked when given)."""
    arr = np.asarray(z, dtype=float).ravel()
    if L is not None and arr.shape != (L,):
        raise ValueError(f"dimension mismatch: scenario has length {arr.size}, expected {L}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scenario has non-finite entries")
    return arr


class Evaluation(NamedTuple):
    objective: float
    slack: np.ndarray

    def feasible(self, tol: float = 1e-7) -> bool:
        return bool(self.slack.size == 0 or self.slack.min() >= -tol)


def evaluate(problem: TwoStageProblem, x, y, z) -> Evaluation:
    """Objective ``c(z)@x + d@y`` and slacks ``r(z) - A(z)@x - B@y``."""
    x = np.asarray(x, float).ravel()
    y = np.asarray(y, float).ravel()
    z = np.asarray(z, float).ravel()
    if len(x) != problem.n_x or len(y) != problem.n_y or len(z) != problem.L:
        raise ValueError(
            f"dimension mismatch: got x[{len(x)}], y[{len(y)}], z[{len(z)}], expected "
            f"x[{problem.n_x}], y[{problem.n_y}], z[{problem.L}]")
    obj = float(problem.c_at(z) @ x + problem.d @ y)
    slack = problem.r_at(z) - problem.A_at(z) @ x - problem.B @ y
    return Evaluation(obj, slack)


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def set_emptiness_and_bounds(H: np.ndarray, h: np.ndarray) -> tuple[bool, bool]:
    """Return ``(nonempty, bounded)`` for ``{z : H z <= h}`` using LPs."""
    L = H.shape[1]
    feas = solve_lp(LpProblem.build(np.zeros(L), H, h))
    if feas.status is not LpStatus.OPTIMAL:
        return False, True
    for l in range(L):
        for sign in (1.0, -1.0):
            c = np.zeros(L)
            c[l] = sign
            if solve_lp(LpProblem.build(c, H, h)).status is LpStatus.UNBOUNDED:
                return True, False
    return True, True


def validate(problem: TwoStageProblem) -> ValidationReport:
    v: list[str] = []
    notes: list[str] = []
    n_x, n_y, m = problem.n_x, problem.n_y, problem.m
    U = problem.uncertainty
    L = U.L
    expected = {
        "C": (problem.C, (n_x, L)),
        "A0": (problem.A0, (m, n_x)),
        "A": (problem.A, (L, m, n_x)),
        "B": (problem.B, (m, n_y)),
        "R": (problem.R, (m, L)),
        "uncertainty.H": (U.H, (len(U.h), L)),
        "integrality": (problem.integrality, (n_x,)),
    }
    shapes_ok = True
    for name, (arr, shape) in expected.items():
        if arr.shape != shape:
            v.append(f"dimension mismatch: {name} has shape {arr.shape}, expected {shape}")
            shapes_ok = False
    for name in ("c0", "C", "d", "A0", "A", "B", "r0", "R"):
        if not np.all(np.isfinite(getattr(problem, name))):
            v.append(f"non-finite entries (NaN/inf) in {name}")
    if not (np.all(np.isfinite(U.H)) and np.all(np.isfinite(U.h))):
        v.append("non-finite entries (NaN/inf) in uncertainty set")
    if v:
        return ValidationReport(tuple(v))
    if len(U.h) == 0 and L > 0:
        v.append("uncertainty set unbounded")
        return ValidationReport(tuple(v))
    nonempty, bounded = set_emptiness_and_bounds(U.H, U.h)
    if not nonempty:
        v.append("uncertainty set empty")
    elif not bounded:
        v.append("uncertainty set unbounded")
    if U.vertices is not None and shapes_ok:
        V = U.vertices
        if V.shape[1] != L:
            v.append("dimension mismatch: cached vertices")
        else:
            for i, z in enumerate(V):
                if not U.contains(z, 1e-7):
                    v.append(f"cached vertex {i} violates H z <= h")
            for i in range(len(V)):
                for j in range(i):
                    if np.max(np.abs(V[i] - V[j])) <= 1e-7:
                        v.append(f"cached vertices {j} and {i} are duplicates")
    if U.nominal is not None:
        if U.nominal.shape != (L,):
            v.append("dimension mismatch: nominal scenario")
        elif not U.contains(U.nominal, 1e-7):
            v.append("nominal scenario lies outside the uncertainty set")
        else:
            margin = float(U.slack(U.nominal).min()) if len(U.h) else np.inf
            notes.append(f"nominal scenario slack margin {margin:.6g}")
    return ValidationReport(tuple(v), tuple(notes))


# -- structure detection ----------------------------------------------------

@dataclass(frozen=True)
class StructureReport:
    """Occurrence pattern of uncertain parameters.

    Rows are indexed ``0`` (objective) and ``1..m`` (constraints).
    """

    kind: str
    labels: tuple[str, ...]
    shared_params: tuple[int, ...]
    private_params: dict[int, tuple[int, ...]]
    unused_params: tuple[int, ...]
    blocks: tuple[tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]], ...]
    notes: tuple[str, ...] = ()

    def rule_mask(self, n_y: int, L: int) -> np.ndarray:
        """Allowed ``y_k <- z_l`` dependencies for the reported kind."""
        if self.kind == "constraintwise":
            return np.zeros((n_y, L), bool)
        if self.kind == "hybrid":
            mask = np.zeros((n_y, L), bool)
            mask[:, list(self.shared_params)] = True
            return mask
        if self.kind == "block":
            mask = np.zeros((n_y, L), bool)
            for _, params, ys in self.blocks:
                for k in ys:
                    mask[k, list(params)] = True
            return mask
        return np.ones((n_y, L), bool)


def _occurrence(problem: TwoStageProblem) -> np.ndarray:
    """Boolean (m+1) x L matrix: does parameter l occur in row i."""
    occ = np.zeros((problem.m + 1, problem.L), bool)
    occ[0] = np.any(np.abs(problem.C) > OCCURS_TOL, axis=0)
    occ[1:] = (np.abs(problem.R) > OCCURS_TOL) | np.any(np.abs(problem.A) > OCCURS_TOL, axis=2).T
    return occ


def _factorizes(H: np.ndarray, groups: list[list[int]], L: int) -> bool:
    """Each row of H touches a single group (singletons for ungrouped params)."""
    owner = np.arange(L) + L  # distinct singleton labels
    for g, members in enumerate(groups):
        owner[list(members)] = g
    for row in H:
        cols = np.flatnonzero(np.abs(row) > OCCURS_TOL)
        if len(set(owner[cols].tolist())) > 1:
            return False
    return True


def _components(problem: TwoStageProblem, occ: np.ndarray):
    """Connected components of the row / parameter / Stage-2 variable graph."""
    m, L, n_y = problem.m, problem.L, problem.n_y
    yocc = np.zeros((m + 1, n_y), bool)
    yocc[0] = np.abs(problem.d) > OCCURS_TOL
    yocc[1:] = np.abs(problem.B) > OCCURS_TOL
    # union-find over nodes: rows [0, m], params [m+1, m+L], ys after
    parent = list(range(m + 1 + L + n_y))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i in range(m + 1):
        for l in np.flatnonzero(occ[i]):
            union(i, m + 1 + l)
        for k in np.flatnonzero(yocc[i]):
            union(i, m + 1 + L + k)
    groups: dict[int, tuple[list, list, list]] = {}
    for i in range(m + 1):
        if occ[i].any() or yocc[i].any():
            groups.setdefault(find(i), ([], [], []))[0].append(i)
    for l in range(L):
        if occ[:, l].any():
            groups.setdefault(find(m + 1 + l), ([], [], []))[1].append(l)
    for k in range(n_y):
        if yocc[:, k].any():
            groups.setdefault(find(m + 1 + L + k), ([], [], []))[2].append(k)
    return [tuple(tuple(g) for g in grp) for _, grp in sorted(groups.items())]


def detect_structure(problem: TwoStageProblem) -> StructureReport:
    from .geometry import is_simplex

    L = problem.L
    occ = _occurrence(problem)
    counts = occ.sum(axis=0)
    shared = tuple(int(l) for l in np.flatnonzero(counts >= 2))
    unused = tuple(int(l) for l in np.flatnonzero(counts == 0))
    private: dict[int, tuple[int, ...]] = {}
    for l in np.flatnonzero(counts == 1):
        i = int(np.flatnonzero(occ[:, l])[0])
        private.setdefault(i, ())
        private[i] = private[i] + (int(l),)
    blocks = tuple(_components(problem, occ))
    H = problem.uncertainty.H
    notes: list[str] = []
    labels: list[str] = []

    row_groups = [list(p) for p in private.values()]
    if not shared:
        if _factorizes(H, row_groups, L):
            labels.append("constraintwise")
        else:
            notes.append("constraintwise occurrence pattern but U is not a product set")
    nontrivial_blocks = [b for b in blocks if b[1] or b[2]]
    if len(nontrivial_blocks) >= 2:
        if _factorizes(H, [list(b[1]) for b in blocks], L):
            labels.append("block")
        else:
            notes.append("block occurrence pattern but U does not factor over blocks")
    if shared and private:
        if _factorizes(H, [list(shared)] + row_groups, L):
            labels.append("hybrid")
        else:
            notes.append("hybrid occurrence pattern but U does not factor")
    try:
        if L > 0 and is_simplex(problem.uncertainty).is_simplex:
            labels.append("simplex")
    except ValueError as exc:
        notes.append(f"simplex test skipped: {exc}")
    labels.append("general")
    return StructureReport(labels[0], tuple(labels), shared, private, unused, blocks, tuple(notes))


# -- JSON format ------------------------------------------------------------

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC}

PROBLEM_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["n_x", "n_y", "m", "L", "c0", "d", "A0", "B", "r0", "uncertainty"],
    "properties": {
        "n_x": {"type": "integer", "minimum": 0},
        "n_y": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 0},
        "L": {"type": "integer", "minimum": 0},
        "c0": _VEC,
        "C": _MAT,
        "d": _VEC,
        "A0": _MAT,
        "A": {"type": "array", "items": _MAT},
        "B": _MAT,
        "r0": _VEC,
        "R": _MAT,
        "integrality": {"type": "array", "items": {"type": "boolean"}},
        "uncertainty": {
            "type": "object",
            "required": ["H", "h"],
            "properties": {
                "H": _MAT,
                "h": _VEC,
                "vertices": _MAT,
                "nominal": _VEC,
            },
        },
    },
}


def _check_len(doc, path, expected):
    if len(doc) != expected:
        raise ProblemFormatError(f"{path}: expected length {expected}, got {len(doc)}")


def canonical(doc: dict) -> dict:
    """Fill defaults so that every optional field is explicit."""
    import jsonschema

    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemFormatError(f"schema violation at {path}: {exc.message}") from None
    n_x, n_y, m, L = doc["n_x"], doc["n_y"], doc["m"], doc["L"]
    out = {
        "n_x": n_x, "n_y": n_y, "m": m, "L": L,
        "c0": [float(v) for v in doc["c0"]],
        "C": [[float(v) for v in row] for row in doc.get("C", [[0.0] * L for _ in range(n_x)])],
        "d": [float(v) for v in doc["d"]],
        "A0": [[float(v) for v in row] for row in doc["A0"]],
        "A": [[[float(v) for v in row] for row in mat]
              for mat in doc.get("A", [[[0.0] * n_x for _ in range(m)] for _ in range(L)])],
        "B": [[float(v) for v in row] for row in doc["B"]],
        "r0": [float(v) for v in doc["r0"]],
        "R": [[float(v) for v in row] for row in doc.get("R", [[0.0] * L for _ in range(m)])],
        "integrality": [bool(v) for v in doc.get("integrality", [False] * n_x)],
    }
    unc = doc["uncertainty"]
    cu = {"H": [[float(v) for v in row] for row in unc["H"]], "h": [float(v) for v in unc["h"]]}
    if "vertices" in unc:
        cu["vertices"] = [[float(v) for v in row] for row in unc["vertices"]]
    if "nominal" in unc:
        cu["nominal"] = [float(v) for v in unc["nominal"]]
    out["uncertainty"] = cu
    _check_len(out["c0"], "c0", n_x)
    _check_len(out["C"], "C", n_x)
    _check_len(out["d"], "d", n_y)
    _check_len(out["A0"], "A0", m)
    _check_len(out["A"], "A", L)
    _check_len(out["B"], "B", m)
    _check_len(out["r0"], "r0", m)
    _check_len(out["R"], "R", m)
    _check_len(out["integrality"], "integrality", n_x)
    return out


def problem_from_dict(doc: dict, *, check: bool = True) -> TwoStageProblem:
    doc = canonical(doc)
    L = doc["L"]
    unc = doc["uncertainty"]
    H = np.array(unc["H"], float).reshape(len(unc["h"]), L)
    U = UncertaintySet(H, unc["h"], unc.get("vertices"), unc.get("nominal"))
    prob = TwoStageProblem(
        c0=doc["c0"], C=np.array(doc["C"], float).reshape(doc["n_x"], L), d=doc["d"],
        A0=np.array(doc["A0"], float).reshape(doc["m"], doc["n_x"]),
        A=np.array(doc["A"], float).reshape(L, doc["m"], doc["n_x"]),
        B=np.array(doc["B"], float).reshape(doc["m"], doc["n_y"]),
        r0=doc["r0"], R=np.array(doc["R"], float).reshape(doc["m"], L),
        uncertainty=U, integrality=doc["integrality"])
    if check:
        report = validate(prob)
        if not report.ok:
            raise InvalidProblemError(report)
    return prob


def parse_problem(text: str) -> TwoStageProblem:
    """Parse a JSON problem document and validate it."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ProblemFormatError("schema violation at <root>: expected an object")
    return problem_from_dict(doc)


def problem_to_dict(problem: TwoStageProblem) -> dict:
    U = problem.uncertainty
    unc: dict[str, Any] = {"H": U.H.tolist(), "h": U.h.tolist()}
    if U.vertices is not None:
        unc["vertices"] = U.vertices.tolist()
    if U.nominal is not None:
        unc["nominal"] = U.nominal.tolist()
    return {
        "n_x": problem.n_x, "n_y": problem.n_y, "m": problem.m, "L": problem.L,
        "c0": problem.c0.tolist(), "C": problem.C.tolist(), "d": problem.d.tolist(),
        "A0": problem.A0.tolist(), "A": problem.A.tolist(), "B": problem.B.tolist(),
        "r0": problem.r0.tolist(), "R": problem.R.tolist(),
        "integrality": [bool(v) for v in problem.integrality],
        "uncertainty": unc,
    }


def serialize_problem(problem: TwoStageProblem, indent: int | None = None) -> str:
    return json.dumps(problem_to_dict(problem), indent=indent)


def epigraph(problem: TwoStageProblem) -> TwoStageProblem:
    """Move the objective into a constraint with a new last Stage-1 variable ``t``.

    The result minimizes ``t`` subject to the original rows plus
    ``c(z) @ x + d @ y - t <= 0`` appended as the last row.
    """
    n_x, L = problem.n_x, problem.L
    c0 = np.zeros(n_x + 1)
    c0[-1] = 1.0
    obj_row = np.append(problem.c0, -1.0)
    A0 = np.vstack([np.hstack([problem.A0, np.zeros((problem.m, 1))]), obj_row])
    A = np.zeros((L, problem.m + 1, n_x + 1))
    A[:, :problem.m, :n_x] = problem.A
    A[:, problem.m, :n_x] = problem.C.T
    B = np.vstack([problem.B, problem.d])
    return TwoStageProblem(
        c0=c0, C=np.zeros((n_x + 1, L)), d=np.zeros(problem.n_y), A0=A0, A=A, B=B,
        r0=np.append(problem.r0, 0.0), R=np.vstack([problem.R, np.zeros(L)]),
        uncertainty=problem.uncertainty, integrality=np.append(problem.integrality, False))
