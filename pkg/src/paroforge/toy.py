"""Small hand-built problems with known robust solutions.

All of them have a single Stage-1 variable ``x``.  Uncertainty enters through
the right-hand side only.
"""

from __future__ import annotations

import numpy as np

from .model import TwoStageProblem, UncertaintySet


def _rhs_problem(c0, d, A0, B, r0, R, U) -> TwoStageProblem:
    return TwoStageProblem.create(c0=c0, d=d, A0=A0, B=B, r0=r0, R=R, uncertainty=U)


def radiation_therapy(delta: float = 0.5) -> TwoStageProblem:
    """Two-stage dose planning: ``x + y`` must cover both demands in [50, 60].

    Objective ``delta * (x + y)``, Stage-1 and Stage-2 doses in [20, 40].
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    A0 = [[-1], [-1], [1], [-1], [0], [0]]
    B = [[-1], [-1], [0], [0], [1], [-1]]
    r0 = [0, 0, 40, -20, 40, -20]
    R = [[-1, 0], [0, -1], [0, 0], [0, 0], [0, 0], [0, 0]]
    U = UncertaintySet.box([50, 50], [60, 60], nominal=[55, 55])
    return _rhs_problem([delta], [delta], A0, B, r0, R, U)


def constraintwise_example() -> TwoStageProblem:
    """min x with each parameter private to one row; unique solution x = 1/2."""
    A0 = [[1], [-1], [0], [0], [0]]
    B = [[0, -1], [1, 1], [-1, 0], [0, -1], [0, 1]]
    r0 = [0, 2, -1, -1.5, 2]
    R = [[-0.5, 0, 0], [0, 0.5, 0.5], [0, 0, 0], [0, 0, 0], [0, 0, 0]]
    return _rhs_problem([1], [0, 0], A0, B, r0, R, UncertaintySet.box([0] * 3, [1] * 3))


def hybrid_example() -> TwoStageProblem:
    """Previous example plus a parameter ``z0`` shared by the first two rows."""
    A0 = [[1], [-1], [0], [0], [0]]
    B = [[0, -1], [1, 1], [-1, 0], [0, -1], [0, 1]]
    r0 = [0, 2, -1, -1.5, 2]
    R = [[-1, -0.5, 0, 0], [1, 0, 0.5, 0.5], [0] * 4, [0] * 4, [0] * 4]
    return _rhs_problem([1], [0, 0], A0, B, r0, R, UncertaintySet.box([0] * 4, [1] * 4))


def block_example() -> TwoStageProblem:
    """Hybrid example plus an independent block in ``y3`` and ``(z4, z5)``."""
    A0 = [[1], [-1], [0], [0], [0], [1], [-2]]
    B = [[0, -1, 0], [1, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]]
    r0 = [0, 2, -1, -1.5, 2, 1.5, -1]
    R = np.zeros((7, 6))
    R[0, :2] = [-1, -0.5]
    R[1, [0, 2, 3]] = [1, 0.5, 0.5]
    R[5, 4] = -0.5
    R[6, 5] = -0.5
    return _rhs_problem([1], [0, 0, 0], A0, B, r0, R, UncertaintySet.box([0] * 6, [1] * 6))


def simplex_example() -> TwoStageProblem:
    """min x over the standard simplex in R^3; unique solution x = 1/2."""
    A0 = [[1], [-1], [0], [0], [0]]
    B = [[0, -1], [1, 1], [-1, 0], [0, -1], [0, 1]]
    r0 = [-0.5, 2, -1, -1.5, 2]
    R = [[-1, -0.5, 0], [1, 0, 1], [0] * 3, [0] * 3, [0] * 3]
    H = np.vstack([np.ones(3), -np.eye(3)])
    return _rhs_problem([1], [0, 0], A0, B, r0, R, UncertaintySet(H, [1, 0, 0, 0]))


def greedy_example() -> TwoStageProblem:
    """Hybrid example with objective ``x - y1 + y2`` and the extra row ``y1 <= 2``."""
    A0 = [[1], [-1], [0], [0], [0], [0]]
    B = [[0, -1], [1, 1], [-1, 0], [0, -1], [0, 1], [1, 0]]
    r0 = [0, 2, -1, -1.5, 2, 2]
    R = [[-1, -0.5, 0, 0], [1, 0, 0.5, 0.5], [0] * 4, [0] * 4, [0] * 4, [0] * 4]
    return _rhs_problem([1], [-1, 1], A0, B, r0, R, UncertaintySet.box([0] * 4, [1] * 4))
