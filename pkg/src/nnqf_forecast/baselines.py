"""Comparison methods: kNN quantile regression and pinball-fit polynomials.

The kNN baseline stores the training set and searches neighbors at every
prediction; the traditional quantile regression (TQR) minimizes the sum
of pinball losses exactly via its linear-programming formulation, with
the same chained non-crossing constraints as the least-squares fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataprep import DesignMatrix
from .errors import ConfigError, DimensionError, SolverError
from .models import (
    InputSchema,
    QuantileModelSet,
    clamp_quantile_path,
    register_model_kind,
)
from .nnqf import NnqfConfig, _interpolate_levels, neighbors_of
from .regressors import PolynomialSpec, poly_basis, poly_exponents
from .simplex import solve_standard_lp

# dense-tableau cell budget before switching to the sparse library solver
_DENSE_CELL_LIMIT = 2_000_000


# ---------------------------------------------------------------------------
# k-nearest-neighbors quantile regression
# ---------------------------------------------------------------------------


@dataclass
class KnnqrModel:
    """Training = saving the (normalized, selected) training set."""

    X: np.ndarray
    y: np.ndarray
    n_neighbors: int
    distance_weights: np.ndarray
    schema: InputSchema
    levels: tuple[float, ...]
    embedding: dict | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape[0] != self.y.shape[0]:
            raise DimensionError("X and y must have equal row counts")
        if self.n_neighbors > self.X.shape[0]:
            raise ConfigError("n_neighbors exceeds the stored training rows")
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    def predict(self, x: np.ndarray, levels=None, counter=None) -> np.ndarray:
        return knnqr_predict(self, x, levels, counter=counter)

    def container_payload(self) -> dict:
        return {
            "kind": "knnqr",
            "levels": [float(q) for q in self.levels],
            "X": [[float(v) for v in row] for row in self.X],
            "y": [float(v) for v in self.y],
            "n_neighbors": self.n_neighbors,
            "distance_weights": [float(w) for w in self.distance_weights],
            "schema": self.schema.to_payload(),
            "embedding": self.embedding,
        }


def _load_knnqr(document: dict) -> KnnqrModel:
    return KnnqrModel(
        X=np.asarray(document["X"], dtype=float).reshape(len(document["y"]), -1),
        y=np.asarray(document["y"], dtype=float),
        n_neighbors=int(document["n_neighbors"]),
        distance_weights=np.asarray(document["distance_weights"], dtype=float),
        schema=InputSchema.from_payload(document["schema"]),
        levels=tuple(document["levels"]),
        embedding=document.get("embedding"),
    )


register_model_kind("knnqr", _load_knnqr)


def fit_knnqr(
    dm: DesignMatrix,
    n_neighbors: int,
    distance_weights,
    levels,
    embedding: dict | None = None,
) -> KnnqrModel:
    return KnnqrModel(
        X=dm.X.copy(),
        y=dm.y.copy(),
        n_neighbors=n_neighbors,
        distance_weights=np.asarray(distance_weights, dtype=float),
        schema=InputSchema.from_design(dm),
        levels=tuple(levels),
        embedding=embedding,
    )


def knnqr_predict(
    model: KnnqrModel, x: np.ndarray, levels=None, counter=None
) -> np.ndarray:
    """Search neighbors of x in the stored set, read off their quantiles.

    Uses the same distance and tie rules as the training-time filter, then
    applies the non-crossing clamp. The neighbor search happens on every
    call; ``counter`` (if given) accumulates one visit per stored row per
    query, the baseline's application cost.
    """
    levels = tuple(model.levels if levels is None else levels)
    if not levels:
        raise ConfigError("no quantile levels requested")
    squeeze = np.asarray(x).ndim == 1
    queries = np.atleast_2d(model.schema.normalize(x))

    cfg = NnqfConfig(
        n_neighbors=model.n_neighbors,
        distance_weights=tuple(model.distance_weights),
        quantile_levels=levels,
    )
    # the stored set is scanned in full for every query
    neighbor_sets = neighbors_of(model.X, queries, cfg, method="brute")
    if counter is not None:
        counter.add(model.X.shape[0] * queries.shape[0])

    level_array = np.asarray(levels)
    raw = np.empty((queries.shape[0], level_array.size))
    for row, indices in enumerate(neighbor_sets.indices):
        raw[row] = _interpolate_levels(np.sort(model.y[indices]), level_array)
    clamped = clamp_quantile_path(raw)
    return clamped[0] if squeeze else clamped


# ---------------------------------------------------------------------------
# Traditional quantile regression (pinball-loss LP)
# ---------------------------------------------------------------------------


def pinball_objective(residuals: np.ndarray, q: float) -> float:
    """Sum of pinball losses for residuals y - f(x)."""
    residuals = np.asarray(residuals, dtype=float)
    return float(q * residuals[residuals >= 0].sum() - (1 - q) * residuals[residuals < 0].sum())


def _tqr_level_dense(basis, y, q, constraint_rows, lower):
    n, t = basis.shape
    m = constraint_rows.shape[0]
    # columns: theta+ (t), theta- (t), u (n), v (n), slack (m)
    n_cols = 2 * t + 2 * n + m
    A = np.zeros((n + m, n_cols))
    A[:n, :t] = basis
    A[:n, t : 2 * t] = -basis
    A[:n, 2 * t : 2 * t + n] = np.eye(n)
    A[:n, 2 * t + n : 2 * t + 2 * n] = -np.eye(n)
    A[n:, :t] = constraint_rows
    A[n:, t : 2 * t] = -constraint_rows
    A[n:, 2 * t + 2 * n :] = -np.eye(m)
    rhs = np.concatenate([y, lower])
    costs = np.concatenate(
        [np.zeros(2 * t), q * np.ones(n), (1 - q) * np.ones(n), np.zeros(m)]
    )
    x, objective = solve_standard_lp(costs, A, rhs)
    theta = x[:t] - x[t : 2 * t]
    return theta, objective


def _tqr_level_sparse(basis, y, q, constraint_rows, lower):
    from scipy import sparse
    from scipy.optimize import linprog

    n, t = basis.shape
    identity = sparse.identity(n, format="csc")
    a_eq = sparse.hstack([sparse.csc_matrix(basis), identity, -identity], format="csc")
    a_ub = sparse.hstack(
        [
            sparse.csc_matrix(-constraint_rows),
            sparse.csc_matrix((constraint_rows.shape[0], 2 * n)),
        ],
        format="csc",
    )
    costs = np.concatenate([np.zeros(t), q * np.ones(n), (1 - q) * np.ones(n)])
    bounds = [(None, None)] * t + [(0, None)] * (2 * n)
    result = linprog(
        costs,
        A_eq=a_eq,
        b_eq=y,
        A_ub=a_ub,
        b_ub=-lower,
        bounds=bounds,
        method="highs",
    )
    if not result.success:
        raise SolverError(f"pinball LP failed: {result.message}")
    return result.x[:t], float(result.fun)


def fit_tqr(
    dm: DesignMatrix,
    y: np.ndarray | None,
    spec: PolynomialSpec,
    levels,
    embedding: dict | None = None,
) -> QuantileModelSet:
    """Fit pinball-minimizing polynomials, level by level in ascending q.

    Each level solves the exact LP formulation (residuals split into
    weighted positive/negative slacks). The first level's fitted values
    are constrained non-negative at the training inputs; later levels are
    floored at the previous level's fitted values. Small problems use the
    in-package simplex, large ones a sparse library solver.
    """
    levels = tuple(float(q) for q in levels)
    if not levels:
        raise ConfigError("no quantile levels to fit")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("quantile levels must be strictly increasing")
    y = dm.y if y is None else np.asarray(y, dtype=float)
    if len(y) != dm.n_rows:
        raise DimensionError("y does not match the design matrix rows")

    exponents = poly_exponents(dm.n_features, spec.max_degree)
    basis = poly_basis(dm.X, exponents)
    if dm.n_rows < basis.shape[1]:
        raise ConfigError("need at least as many rows as basis terms")
    constraint_rows = np.unique(basis, axis=0)

    n, t = basis.shape
    m = constraint_rows.shape[0]
    dense_cells = (n + m) * (2 * t + 2 * n + m + n + m)
    use_dense = dense_cells <= _DENSE_CELL_LIMIT

    parameters = []
    objectives = []
    lower = np.zeros(m)
    for q in levels:
        if use_dense:
            theta, objective = _tqr_level_dense(basis, y, q, constraint_rows, lower)
        else:
            theta, objective = _tqr_level_sparse(basis, y, q, constraint_rows, lower)
        parameters.append(theta)
        objectives.append(objective)
        lower = constraint_rows @ theta

    return QuantileModelSet(
        kind="tqr",
        levels=levels,
        parameters=parameters,
        schema=InputSchema.from_design(dm),
        detail={"max_degree": spec.max_degree, "objectives": objectives},
        warnings=(),
        embedding=embedding,
    )


# ---------------------------------------------------------------------------
# GEFCom14 benchmark scores
# ---------------------------------------------------------------------------

# average pinball loss (percent) of the competition benchmark, tasks 4-15
GEFCOM14_BENCHMARK = {
    4: 3.31,
    5: 3.88,
    6: 3.59,
    7: 3.61,
    8: 4.79,
    9: 3.57,
    10: 4.21,
    11: 3.99,
    12: 4.35,
    13: 3.77,
    14: 3.20,
    15: 2.85,
}


@dataclass(frozen=True)
class BenchmarkTable:
    """Per-task benchmark pinball losses (percent)."""

    values: dict[int, float]

    def __post_init__(self):
        if len(self.values) != 12:
            raise ConfigError("benchmark table must hold exactly 12 tasks")
        if any(v <= 0 for v in self.values.values()):
            raise ConfigError("benchmark pinball losses must be positive")

    def value(self, task: int) -> float:
        if task not in self.values:
            raise ConfigError(f"task {task} is not part of the benchmark")
        return self.values[task]

    @property
    def tasks(self) -> tuple[int, ...]:
        return tuple(sorted(self.values))

    def mean(self) -> float:
        return float(np.mean([self.values[t] for t in self.tasks]))


def load_benchmark_table() -> BenchmarkTable:
    return BenchmarkTable(values=dict(GEFCOM14_BENCHMARK))
