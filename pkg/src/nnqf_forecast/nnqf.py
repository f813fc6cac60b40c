"""Nearest-neighbors quantile filter.

Replaces each training target by empirical quantiles of its nearest
neighbors' targets, so that plain regression losses fit quantile models.
The neighbor search runs once per training set; all quantile levels are
derived from the same neighbor sets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataprep import DesignMatrix
from .errors import ConfigError, ContractError, DimensionError

DEFAULT_LEVELS = tuple(np.arange(1, 100) / 100.0)

# Above this many rows the k-d tree path is preferred for few features.
_KDTREE_MIN_ROWS = 4096
_KDTREE_MAX_FEATURES = 8
_BRUTE_BLOCK_CELLS = 1 << 22


@dataclass(frozen=True)
class NnqfConfig:
    """Filter settings: neighbor count, distance cutoff, weights, levels."""

    n_neighbors: int
    max_distance: float = math.inf
    distance_weights: tuple[float, ...] | None = None  # None = unweighted
    quantile_levels: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ConfigError("n_neighbors must be >= 1")
        if self.max_distance < 0:
            raise ConfigError("max_distance must be >= 0 (or infinity)")
        levels = tuple(float(q) for q in self.quantile_levels)
        if any(not 0.0 < q < 1.0 for q in levels):
            raise ConfigError("quantile levels must lie strictly inside (0, 1)")
        object.__setattr__(self, "quantile_levels", levels)
        if self.distance_weights is not None:
            weights = tuple(float(w) for w in self.distance_weights)
            if any(w < 0 for w in weights):
                raise ConfigError("distance weights must be non-negative")
            if not any(w > 0 for w in weights):
                raise ConfigError("at least one distance weight must be positive")
            object.__setattr__(self, "distance_weights", weights)

    def weights_for(self, n_features: int) -> np.ndarray:
        if self.distance_weights is None:
            return np.ones(n_features)
        if len(self.distance_weights) != n_features:
            raise DimensionError(
                f"{len(self.distance_weights)} weights for {n_features} features"
            )
        return np.asarray(self.distance_weights, dtype=float)


@dataclass
class NeighborSet:
    """Per-row neighbor indices sorted by (distance, index) ascending."""

    indices: list[np.ndarray]
    distances: list[np.ndarray]
    clamped: bool = False  # n_neighbors exceeded the number of rows

    def __len__(self) -> int:
        return len(self.indices)

    def counts(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.indices])


@dataclass
class ModifiedTargets:
    """Filtered targets: one vector per quantile level, plus the raw
    sorted neighbor outputs each row's quantiles were read from."""

    levels: tuple[float, ...]
    targets: np.ndarray  # (n_levels, n_rows)
    neighbor_outputs: list[np.ndarray]  # per row, sorted ascending

    def column(self, level: float) -> np.ndarray:
        for i, q in enumerate(self.levels):
            if q == level:
                return self.targets[i]
        raise ConfigError(f"level {level} was not configured")

    def plotting_positions(self, row: int) -> np.ndarray:
        m = len(self.neighbor_outputs[row])
        return (np.arange(1, m + 1) - 0.5) / m

    @property
    def n_rows(self) -> int:
        return self.targets.shape[1]

    def to_csv(self, path: str | Path) -> None:
        """One column per level, for training with external tools."""
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([f"q{q:.2f}" for q in self.levels])
            for row in self.targets.T:
                writer.writerow([repr(float(v)) for v in row])


def weighted_distance(a, b, weights) -> float:
    """sqrt(sum_d w_d (a_d - b_d)^2); the filter's distance measure."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not a.shape == b.shape == weights.shape:
        raise DimensionError("vectors and weights must have equal length")
    if np.any(weights < 0):
        raise ConfigError("distance weights must be non-negative")
    total = 0.0
    for d in range(a.shape[0]):
        delta = a[d] - b[d]
        total += weights[d] * (delta * delta)
    return math.sqrt(total)


def _distance_block(queries: np.ndarray, X: np.ndarray, weights: np.ndarray):
    """Distances from each query row to every row of X.

    Accumulates one feature at a time so the floating-point result is
    bit-identical to the scalar formula in :func:`weighted_distance`.
    """
    sq = np.zeros((queries.shape[0], X.shape[0]))
    for d in range(X.shape[1]):
        diff = queries[:, d, None] - X[None, :, d]
        sq += weights[d] * (diff * diff)
    return np.sqrt(sq)


def _select_from_distances(d: np.ndarray, n_neighbors: int, max_distance: float):
    """First min(n_neighbors, #eligible) indices in (distance, index) order."""
    if math.isinf(max_distance):
        eligible = None
        n_eligible = d.shape[0]
    else:
        eligible = np.flatnonzero(d <= max_distance)
        n_eligible = eligible.size
    take = min(n_neighbors, n_eligible)
    if take == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)

    if eligible is None:
        if take < d.shape[0]:
            kth = np.partition(d, take - 1)[take - 1]
            candidates = np.flatnonzero(d <= kth)
        else:
            candidates = np.arange(d.shape[0])
    else:
        dv = d[eligible]
        if take < n_eligible:
            kth = np.partition(dv, take - 1)[take - 1]
            candidates = eligible[dv <= kth]
        else:
            candidates = eligible
    # candidates are in ascending index order; a stable sort on distance
    # therefore breaks ties toward the lowest index, as required.
    order = np.argsort(d[candidates], kind="stable")[:take]
    chosen = candidates[order]
    return chosen.astype(np.int64), d[chosen]


def _neighbors_brute(
    X: np.ndarray, queries: np.ndarray, cfg: NnqfConfig
) -> NeighborSet:
    weights = cfg.weights_for(X.shape[1])
    indices: list[np.ndarray] = []
    distances: list[np.ndarray] = []
    block = max(1, _BRUTE_BLOCK_CELLS // max(1, X.shape[0]))
    for start in range(0, queries.shape[0], block):
        d_block = _distance_block(queries[start : start + block], X, weights)
        for row in d_block:
            ix, dist = _select_from_distances(row, cfg.n_neighbors, cfg.max_distance)
            indices.append(ix)
            distances.append(dist)
    return NeighborSet(
        indices=indices,
        distances=distances,
        clamped=cfg.n_neighbors > X.shape[0],
    )


def _neighbors_kdtree(
    X: np.ndarray, queries: np.ndarray, cfg: NnqfConfig
) -> NeighborSet:
    """k-d tree candidate search, re-checked against the exact distances.

    The tree only proposes candidates; distances are recomputed with the
    brute-force formula so results match it bit for bit, tie-breaks
    included.
    """
    from scipy.spatial import cKDTree

    weights = cfg.weights_for(X.shape[1])
    scaled = X * np.sqrt(weights)
    tree = cKDTree(scaled)
    k = min(cfg.n_neighbors, X.shape[0])
    scaled_queries = queries * np.sqrt(weights)
    tree_dist, _ = tree.query(scaled_queries, k=k)
    tree_dist = np.asarray(tree_dist).reshape(queries.shape[0], k)

    indices: list[np.ndarray] = []
    distances: list[np.ndarray] = []
    for n in range(queries.shape[0]):
        radius = tree_dist[n, -1] * (1.0 + 1e-9)
        if not math.isinf(cfg.max_distance):
            radius = min(radius, cfg.max_distance * (1.0 + 1e-9))
        candidates = np.asarray(
            sorted(tree.query_ball_point(scaled_queries[n], radius)), dtype=np.int64
        )
        if candidates.size == 0:
            indices.append(np.empty(0, dtype=np.int64))
            distances.append(np.empty(0))
            continue
        exact = _distance_block(queries[n : n + 1], X[candidates], weights)[0]
        ix, dist = _select_from_distances(exact, cfg.n_neighbors, cfg.max_distance)
        indices.append(candidates[ix])
        distances.append(dist)
    return NeighborSet(
        indices=indices,
        distances=distances,
        clamped=cfg.n_neighbors > X.shape[0],
    )


def neighbors_of(
    X: np.ndarray, queries: np.ndarray, cfg: NnqfConfig, method: str = "auto"
) -> NeighborSet:
    """Nearest neighbors of each query row within X.

    Enforces both cutoff rules: at most ``n_neighbors`` indices, and no
    in-set distance above ``max_distance`` or above the closest excluded
    point. Ties are broken toward the lower row index.
    """
    X = np.asarray(X, dtype=float)
    queries = np.asarray(queries, dtype=float)
    if X.ndim != 2 or queries.ndim != 2 or X.shape[1] != queries.shape[1]:
        raise DimensionError("X and queries must be 2-D with equal feature count")
    if X.shape[0] < 1:
        raise DimensionError("need at least one reference row")
    if method == "auto":
        use_tree = (
            X.shape[1] <= _KDTREE_MAX_FEATURES and X.shape[0] >= _KDTREE_MIN_ROWS
        )
        method = "kdtree" if use_tree else "brute"
    if method == "brute":
        return _neighbors_brute(X, queries, cfg)
    if method == "kdtree":
        return _neighbors_kdtree(X, queries, cfg)
    raise ConfigError(f"unknown neighbor search method {method!r}")


def find_neighbors(X: np.ndarray, cfg: NnqfConfig, method: str = "auto") -> NeighborSet:
    """Neighbor sets of every training row within its own matrix.

    Each row is its own neighbor at distance zero; the index set is not
    restricted to later rows.
    """
    X = np.asarray(X, dtype=float)
    return neighbors_of(X, X, cfg, method=method)


# ---------------------------------------------------------------------------
# Empirical quantiles over neighbor outputs
# ---------------------------------------------------------------------------


def empirical_quantile(sorted_values, q: float) -> float:
    """Linear interpolation between plotting positions (i - 0.5) / m.

    Below the first position the first value is returned, at or above the
    last position the last value; in between, straight-line interpolation
    between the bracketing (position, value) pairs.
    """
    values = np.asarray(sorted_values, dtype=float)
    if values.ndim != 1 or values.size < 1:
        raise DimensionError("need a 1-D, non-empty value vector")
    if not 0.0 < q < 1.0:
        raise ConfigError("q must lie strictly inside (0, 1)")
    if __debug__ and np.any(np.diff(values) < 0):
        raise ContractError("values must be sorted ascending")
    return float(_interpolate_levels(values, np.array([q]))[0])


def _interpolate_levels(sorted_values: np.ndarray, levels: np.ndarray) -> np.ndarray:
    m = sorted_values.size
    positions = (np.arange(1, m + 1) - 0.5) / m
    bracket = np.searchsorted(positions, levels, side="right")
    result = np.empty(levels.size)
    low = bracket == 0
    high = bracket == m
    result[low] = sorted_values[0]
    result[high] = sorted_values[-1]
    mid = ~(low | high)
    if np.any(mid):
        i = bracket[mid]
        left_q = positions[i - 1]
        right_q = positions[i]
        left_v = sorted_values[i - 1]
        right_v = sorted_values[i]
        slope = (right_v - left_v) / (right_q - left_q)
        result[mid] = slope * (levels[mid] - left_q) + left_v
    return result


def apply_filter(
    dm: DesignMatrix,
    cfg: NnqfConfig,
    method: str = "auto",
    neighbor_search=None,
) -> ModifiedTargets:
    """Run the filter: one neighbor search, then all quantile levels.

    ``neighbor_search`` may replace :func:`find_neighbors` (same
    signature), e.g. to count invocations; it is called exactly once no
    matter how many levels are configured.
    """
    if not cfg.quantile_levels:
        raise ConfigError("no quantile levels configured")
    search = neighbor_search if neighbor_search is not None else find_neighbors
    neighbor_sets = search(dm.X, cfg, method=method)

    levels = np.asarray(cfg.quantile_levels)
    outputs = [np.sort(dm.y[ix]) for ix in neighbor_sets.indices]
    targets = np.empty((levels.size, dm.n_rows))
    for n, ynn in enumerate(outputs):
        targets[:, n] = _interpolate_levels(ynn, levels)
    return ModifiedTargets(
        levels=tuple(cfg.quantile_levels),
        targets=targets,
        neighbor_outputs=outputs,
    )


def inverse_variance_weights(X: np.ndarray) -> np.ndarray:
    """Per-feature 1/variance weights; zero-variance features get weight 0."""
    X = np.asarray(X, dtype=float)
    variance = X.var(axis=0)
    if np.all(variance == 0):
        raise ConfigError("all features are constant; cannot weight distances")
    weights = np.zeros_like(variance)
    positive = variance > 0
    weights[positive] = 1.0 / variance[positive]
    return weights


def export_neighbors(neighbor_sets: NeighborSet, path: str | Path) -> None:
    """Debug dump: one CSV line per (row, rank) neighbor pair."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["row", "rank", "neighbor", "distance"])
        for n, (ix, dist) in enumerate(
            zip(neighbor_sets.indices, neighbor_sets.distances)
        ):
            for rank, (j, d) in enumerate(zip(ix, dist)):
                writer.writerow([n, rank, int(j), repr(float(d))])
