"""Dense active-set solver for strictly convex quadratic programs.

Solves min 1/2 x'Hx - g'x subject to Ax >= b by alternating between
adding the most violated constraint to the working set and dropping
constraints with negative multipliers, each step re-solving the
equality-constrained KKT system. Problem sizes here are small (tens of
parameters), so dense linear algebra is fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError

DEFAULT_TOLERANCE = 1e-8


@dataclass
class QpResult:
    x: np.ndarray
    active: list[int]
    multipliers: np.ndarray
    iterations: int


def _kkt_solve(H, g, A_w, b_w):
    """Minimize with the working-set constraints held as equalities."""
    n = H.shape[0]
    m = A_w.shape[0]
    if m == 0:
        return np.linalg.solve(H, g), np.empty(0)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = H
    kkt[:n, n:] = -A_w.T
    kkt[n:, :n] = A_w
    rhs = np.concatenate([g, b_w])
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return solution[:n], solution[n:]


def solve_qp(
    H: np.ndarray,
    g: np.ndarray,
    A: np.ndarray | None = None,
    b: np.ndarray | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int | None = None,
) -> QpResult:
    """Solve min 1/2 x'Hx - g'x s.t. Ax >= b; H must be positive definite.

    Returns the unconstrained minimizer untouched whenever it is already
    feasible. Raises SolverError if the iteration cap is hit.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    if A is None or len(A) == 0:
        x = np.linalg.solve(H, g)
        return QpResult(x=x, active=[], multipliers=np.empty(0), iterations=0)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n_constraints = A.shape[0]
    if max_iterations is None:
        max_iterations = max(50, 50 * n_constraints)

    active: list[int] = []
    for iteration in range(1, max_iterations + 1):
        A_w = A[active] if active else np.empty((0, H.shape[0]))
        b_w = b[active] if active else np.empty(0)
        x, multipliers = _kkt_solve(H, g, A_w, b_w)

        slack = A @ x - b
        slack[active] = 0.0  # equality-held rows are satisfied by construction
        worst = int(np.argmin(slack))
        if slack[worst] < -tolerance:
            if worst in active:
                raise SolverError(
                    "active constraint reported violated; QP is ill-conditioned"
                )
            active.append(worst)
            continue

        if multipliers.size and multipliers.min() < -tolerance:
            drop = int(np.argmin(multipliers))
            del active[drop]
            continue

        return QpResult(
            x=x,
            active=list(active),
            multipliers=multipliers,
            iterations=iteration,
        )

    raise SolverError(
        f"active-set iteration cap ({max_iterations}) exceeded; "
        f"{len(active)} constraints active"
    )
