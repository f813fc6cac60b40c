"""Parametric quantile regressors trained on filtered targets.

Two families: polynomials fitted by constrained least squares (chained
lower bounds keep the fitted levels non-negative and non-crossing at
every training input), and single-hidden-layer feedforward networks
trained level by level with plain full-batch gradient descent on the
squared error. No pinball loss appears anywhere in either training path.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import expit

from .activeset import solve_qp
from .dataprep import DesignMatrix
from .errors import ConfigError, DimensionError, TrainingDivergedError
from .models import InputSchema, QuantileModelSet
from .nnqf import ModifiedTargets

CONSTRAINT_TOLERANCE = 1e-8
_CONDITION_LIMIT = 1e12
_RIDGE = 1e-8


# ---------------------------------------------------------------------------
# Polynomial family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialSpec:
    """All monomials of total degree <= max_degree, plus intercept."""

    max_degree: int

    def __post_init__(self):
        if not 1 <= self.max_degree <= 4:
            raise ConfigError("max_degree must be between 1 and 4")


def poly_exponents(n_features: int, max_degree: int) -> tuple[tuple[int, ...], ...]:
    """Exponent vectors, ordered by total degree then combination order."""
    exponents = []
    for total in range(max_degree + 1):
        for combo in combinations_with_replacement(range(n_features), total):
            vector = [0] * n_features
            for feature in combo:
                vector[feature] += 1
            exponents.append(tuple(vector))
    return tuple(exponents)


def poly_basis(X: np.ndarray, exponents) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    basis = np.ones((X.shape[0], len(exponents)))
    for column, vector in enumerate(exponents):
        for feature, power in enumerate(vector):
            if power == 1:
                basis[:, column] *= X[:, feature]
            elif power > 1:
                basis[:, column] *= X[:, feature] ** power
    return basis


def _ascending_levels(targets: ModifiedTargets) -> None:
    levels = targets.levels
    if not levels:
        raise ConfigError("no quantile levels to fit")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("quantile levels must be strictly increasing")


def fit_polynomial_constrained(
    dm: DesignMatrix,
    targets: ModifiedTargets,
    spec: PolynomialSpec,
    tolerance: float = CONSTRAINT_TOLERANCE,
    embedding: dict | None = None,
) -> QuantileModelSet:
    """Fit one polynomial per level, in ascending level order.

    Each fit minimizes the squared error against the filtered targets
    subject to the fitted values at every training input being >= 0 for
    the first level and >= the previous level's fitted values afterwards.
    """
    _ascending_levels(targets)
    if dm.n_rows == 0:
        raise ConfigError("empty training matrix")
    if targets.n_rows != dm.n_rows:
        raise DimensionError("targets do not match the design matrix rows")

    exponents = poly_exponents(dm.n_features, spec.max_degree)
    basis = poly_basis(dm.X, exponents)
    gram = basis.T @ basis
    warnings: list[str] = []

    condition = np.linalg.cond(gram)
    if not np.isfinite(condition) or condition > _CONDITION_LIMIT:
        ridge = _RIDGE * max(1.0, float(np.trace(gram)) / gram.shape[0])
        gram = gram + ridge * np.eye(gram.shape[0])
        warnings.append(
            f"gram condition {condition:.3e} above {_CONDITION_LIMIT:.0e}; "
            f"ridge {ridge:.3e} added"
        )

    # constraints are enforced at the distinct training inputs
    constraint_rows = np.unique(basis, axis=0)

    parameters: list[np.ndarray] = []
    lower = np.zeros(constraint_rows.shape[0])
    for index in range(len(targets.levels)):
        rhs = basis.T @ targets.targets[index]
        result = solve_qp(
            gram,
            rhs,
            A=constraint_rows,
            b=lower,
            tolerance=tolerance,
        )
        parameters.append(result.x)
        lower = constraint_rows @ result.x

    return QuantileModelSet(
        kind="poly",
        levels=targets.levels,
        parameters=parameters,
        schema=InputSchema.from_design(dm),
        detail={"max_degree": spec.max_degree},
        warnings=tuple(warnings),
        embedding=embedding,
    )


# ---------------------------------------------------------------------------
# Network family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkSpec:
    """Single hidden layer, logistic activation, identity output."""

    hidden_units: int
    epochs: int = 2000
    learning_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def _param_count(n_features: int, hidden: int) -> int:
    return n_features * hidden + hidden + hidden + 1


def _unpack(theta: np.ndarray, n_features: int, hidden: int):
    offset = n_features * hidden
    w1 = theta[:offset].reshape(n_features, hidden)
    b1 = theta[offset : offset + hidden]
    w2 = theta[offset + hidden : offset + 2 * hidden]
    b2 = theta[offset + 2 * hidden]
    return w1, b1, w2, b2


def network_forward(theta: np.ndarray, X: np.ndarray, hidden: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w1, b1, w2, b2 = _unpack(np.asarray(theta, dtype=float), X.shape[1], hidden)
    activations = expit(X @ w1 + b1)
    return activations @ w2 + b2


def network_loss_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray, hidden: int):
    """Mean squared error and its gradient via backpropagation."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    w1, b1, w2, b2 = _unpack(np.asarray(theta, dtype=float), X.shape[1], hidden)

    pre = X @ w1 + b1
    act = expit(pre)
    out = act @ w2 + b2
    residual = out - y
    loss = float(residual @ residual) / n

    d_out = 2.0 * residual / n
    grad_w2 = act.T @ d_out
    grad_b2 = float(d_out.sum())
    d_act = np.outer(d_out, w2)
    d_pre = d_act * act * (1.0 - act)
    grad_w1 = X.T @ d_pre
    grad_b1 = d_pre.sum(axis=0)

    grad = np.concatenate(
        [grad_w1.ravel(), grad_b1, grad_w2, np.array([grad_b2])]
    )
    return loss, grad


def train_network_level(
    X: np.ndarray, y: np.ndarray, spec: NetworkSpec, level_index: int
) -> np.ndarray:
    """Train one level's network; fully determined by (spec.seed, level)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, level_index]))
    theta = rng.uniform(-0.5, 0.5, _param_count(X.shape[1], spec.hidden_units))
    for epoch in range(spec.epochs):
        loss, grad = network_loss_grad(theta, X, y, spec.hidden_units)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}", epoch=epoch
            )
        theta = theta - spec.learning_rate * grad
    return theta


def _train_level_star(args):
    return train_network_level(*args)


def fit_network(
    dm: DesignMatrix,
    targets: ModifiedTargets,
    spec: NetworkSpec,
    n_jobs: int = 1,
    embedding: dict | None = None,
) -> QuantileModelSet:
    """Fit one independent network per level (parallelizable across levels)."""
    _ascending_levels(targets)
    if targets.n_rows != dm.n_rows:
        raise DimensionError("targets do not match the design matrix rows")

    jobs = [
        (dm.X, targets.targets[index], spec, index)
        for index in range(len(targets.levels))
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parameters = list(pool.map(_train_level_star, jobs))
    else:
        parameters = [_train_level_star(job) for job in jobs]

    return QuantileModelSet(
        kind="net",
        levels=targets.levels,
        parameters=parameters,
        schema=InputSchema.from_design(dm),
        detail={
            "hidden_units": spec.hidden_units,
            "epochs": spec.epochs,
            "learning_rate": spec.learning_rate,
            "seed": spec.seed,
        },
        warnings=(),
        embedding=embedding,
    )
