"""Two-phase dense simplex with Bland's rule.

Small, exact and cycling-safe; meant for the desk-scale pinball-loss
linear programs. Callers switch to a sparse library solver above a size
threshold (the dense tableau grows quadratically with the row count).
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-7


def _pivot(tableau: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and tableau[r, col] != 0.0:
            tableau[r] -= tableau[r, col] * tableau[row]
    basis[row] = col


def _iterate(
    tableau: np.ndarray,
    basis: list[int],
    costs: np.ndarray,
    n_columns: int,
    max_iterations: int,
) -> None:
    """Run simplex iterations in place until optimal (Bland's rule)."""
    m = tableau.shape[0]
    for _ in range(max_iterations):
        c_basis = costs[basis]
        reduced = costs[:n_columns] - c_basis @ tableau[:, :n_columns]
        entering = -1
        for j in range(n_columns):  # Bland: lowest eligible index enters
            if reduced[j] < -_PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return

        ratios = np.full(m, np.inf)
        eligible = tableau[:, entering] > _PIVOT_TOL
        ratios[eligible] = tableau[eligible, -1] / tableau[eligible, entering]
        best_ratio = ratios.min()
        if not np.isfinite(best_ratio):
            raise SolverError("linear program is unbounded")
        # Bland: on ratio ties, the row whose basic variable has the lowest
        # index leaves
        leaving = min(
            (i for i in range(m) if ratios[i] == best_ratio),
            key=lambda i: basis[i],
        )
        _pivot(tableau, basis, leaving, entering)
    raise SolverError(f"simplex iteration cap ({max_iterations}) exceeded")


def solve_standard_lp(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    max_iterations: int | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize c'x subject to Ax = b, x >= 0.

    Returns (x, objective). Raises SolverError when infeasible, unbounded
    or out of iterations.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if len(b) != m or len(c) != n:
        raise SolverError("inconsistent LP dimensions")
    if max_iterations is None:
        max_iterations = 200 + 20 * (m + n)

    # phase 1: artificial basis
    tableau = np.zeros((m, n + m + 1))
    tableau[:, :n] = A
    tableau[:, -1] = b
    negative = b < 0
    tableau[negative] *= -1.0
    tableau[:, n : n + m] = np.eye(m)
    basis = list(range(n, n + m))
    phase1_costs = np.concatenate([np.zeros(n), np.ones(m), [0.0]])
    _iterate(tableau, basis, phase1_costs, n + m, max_iterations)
    infeasibility = phase1_costs[basis] @ tableau[:, -1]
    if infeasibility > _FEAS_TOL:
        raise SolverError(f"linear program infeasible (phase-1 gap {infeasibility:.3e})")

    # drive any still-basic artificials out, or drop their (redundant) rows
    keep_rows = []
    for i in range(m):
        if basis[i] < n:
            keep_rows.append(i)
            continue
        pivot_col = -1
        for j in range(n):
            if abs(tableau[i, j]) > _PIVOT_TOL:
                pivot_col = j
                break
        if pivot_col >= 0:
            _pivot(tableau, basis, i, pivot_col)
            keep_rows.append(i)
    if len(keep_rows) < m:
        tableau = tableau[keep_rows]
        basis = [basis[i] for i in keep_rows]

    # phase 2 on the original columns only
    phase2 = np.concatenate([tableau[:, :n], tableau[:, -1:]], axis=1)
    phase2_costs = np.concatenate([c, [0.0]])
    _iterate(phase2, basis, phase2_costs, n, max_iterations)

    x = np.zeros(n)
    for i, var in enumerate(basis):
        x[var] = phase2[i, -1]
    return x, float(c @ x)
