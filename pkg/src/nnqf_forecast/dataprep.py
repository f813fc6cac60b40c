"""Time-series ingestion and design-matrix construction.

Raw CSVs become :class:`TimeSeriesTable` objects (equidistant hourly
channels with NaN marking missing values). Tables are turned into
regression matrices by lag embedding, optionally restricted by a night
mask, min-max normalized and reduced by greedy forward feature selection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    TimestampGridError,
)

MISSING_TOKENS = {"", "na", "nan", "null", "none"}


# ---------------------------------------------------------------------------
# Time series table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeSeriesTable:
    """Equidistant multivariate time series.

    ``timestamps`` are int64 (hours since epoch for ISO input, or the raw
    integers for integer-stamped input) and must be strictly increasing
    with a constant step. Channels are float64 arrays of equal length;
    NaN marks a missing observation.
    """

    timestamps: np.ndarray
    channels: dict[str, np.ndarray]
    power_channel: str | None = None
    iso_timestamps: bool = False

    def __post_init__(self):
        k = len(self.timestamps)
        if k < 1:
            raise TimestampGridError("table must contain at least one timestep")
        for name, values in self.channels.items():
            if len(values) != k:
                raise SchemaError(
                    f"channel {name!r} has length {len(values)}, expected {k}"
                )
        if k > 1:
            steps = np.diff(self.timestamps)
            if np.any(steps <= 0):
                raise TimestampGridError("timestamps must be strictly increasing")
            if np.any(steps != steps[0]):
                raise TimestampGridError("timestamps must be equidistant")
        if self.power_channel is not None:
            power = self.channel(self.power_channel)
            finite = power[np.isfinite(power)]
            if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
                raise SchemaError(
                    f"power channel {self.power_channel!r} must lie in [0, 1]"
                )

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def step(self) -> int:
        return int(self.timestamps[1] - self.timestamps[0]) if len(self) > 1 else 1

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise SchemaError(f"unknown channel {name!r}")
        return self.channels[name]

    def slice_steps(self, start: int, stop: int) -> "TimeSeriesTable":
        """Sub-table over the half-open step range [start, stop)."""
        if not (0 <= start < stop <= len(self)):
            raise InsufficientDataError(
                f"slice [{start}, {stop}) outside table of length {len(self)}"
            )
        return TimeSeriesTable(
            timestamps=self.timestamps[start:stop],
            channels={k: v[start:stop] for k, v in self.channels.items()},
            power_channel=self.power_channel,
            iso_timestamps=self.iso_timestamps,
        )


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns onto table channels."""

    timestamp: str
    channels: dict[str, str]  # channel name -> CSV column
    power_channel: str | None = None  # channel name, must appear in `channels`

    def __post_init__(self):
        if not self.channels:
            raise SchemaError("schema must map at least one value column")
        if self.power_channel is not None and self.power_channel not in self.channels:
            raise SchemaError(
                f"power channel {self.power_channel!r} is not a mapped channel"
            )


def _parse_timestamp(token: str, row: int) -> tuple[int, bool]:
    token = token.strip()
    try:
        return int(token), False
    except ValueError:
        pass
    try:
        stamp = np.datetime64(token, "h")
        return int(stamp.astype("int64")), True
    except ValueError:
        raise ParseError(f"unparsable timestamp {token!r} at row {row}", row=row)


def _parse_cell(token: str, row: int, column: str) -> float:
    token = token.strip()
    if token.lower() in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(
            f"unparsable value {token!r} in column {column!r} at row {row}", row=row
        )


def ingest_csv(path: str | Path, schema: ColumnSchema) -> TimeSeriesTable:
    """Read a header CSV into a validated table.

    Raises SchemaError for unmapped columns, ParseError (with row index)
    for bad cells and TimestampGridError when stamps are not an
    equidistant strictly increasing grid.
    """
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty", row=0)
        header = [h.strip() for h in header]
        positions = {}
        for channel, column in {**schema.channels, "__ts__": schema.timestamp}.items():
            if column not in header:
                raise SchemaError(f"column {column!r} not found in {path.name}")
            positions[channel] = header.index(column)

        stamps: list[int] = []
        values: dict[str, list[float]] = {name: [] for name in schema.channels}
        iso = False
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            stamp, row_iso = _parse_timestamp(row[positions["__ts__"]], row_idx)
            iso = iso or row_iso
            stamps.append(stamp)
            for channel in schema.channels:
                values[channel].append(
                    _parse_cell(row[positions[channel]], row_idx, schema.channels[channel])
                )

    if not stamps:
        raise ParseError(f"{path} contains no data rows", row=0)
    return TimeSeriesTable(
        timestamps=np.asarray(stamps, dtype=np.int64),
        channels={k: np.asarray(v, dtype=np.float64) for k, v in values.items()},
        power_channel=schema.power_channel,
        iso_timestamps=iso,
    )


def difference_channel(table: TimeSeriesTable, channel: str) -> TimeSeriesTable:
    """Replace a channel by its first-order differences.

    The first element becomes missing; length is unchanged. Used for
    radiation channels delivered as accumulated values.
    """
    values = table.channel(channel)
    out = np.empty_like(values)
    out[0] = np.nan
    out[1:] = values[1:] - values[:-1]
    channels = dict(table.channels)
    channels[channel] = out
    return replace(table, channels=channels)


DEFAULT_NIGHT_THRESHOLD = 100000.0  # J h^-1 m^-2 on forecast surface solar radiation


def night_mask(
    table: TimeSeriesTable,
    radiation_channel: str,
    threshold: float = DEFAULT_NIGHT_THRESHOLD,
    horizon: int = 24,
) -> np.ndarray:
    """Boolean mask over row-origin steps k; True marks night rows.

    A step k is night when the radiation forecast for the target time
    k + horizon is at or below the threshold (inclusive). Steps whose
    target time falls outside the table, or whose radiation value is
    missing, are not marked.
    """
    if threshold < 0:
        raise ConfigError("night threshold must be >= 0")
    radiation = table.channel(radiation_channel)
    k = len(table)
    mask = np.zeros(k, dtype=bool)
    if horizon < k:
        ahead = radiation[horizon:]
        with np.errstate(invalid="ignore"):
            mask[: k - horizon] = ahead <= threshold
        mask[: k - horizon] &= np.isfinite(ahead)
    return mask


# ---------------------------------------------------------------------------
# Lag embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingSpec:
    """Defines how table channels become regression rows.

    With ``exogenous_at_horizon=False`` a row for step k holds the target
    channel at lags k..k-lags followed by each exogenous channel at the
    same lags. With ``exogenous_at_horizon=True`` the autoregressive block
    is dropped and the exogenous channels are read at the absolute steps
    k+horizon-j for j = 0..lags, i.e. the weather forecasts available for
    the target time itself. The target is always the target channel at
    k + horizon.
    """

    horizon: int
    lags: int
    target_channel: str
    exogenous_channels: tuple[str, ...] = ()
    exogenous_at_horizon: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.lags < 0:
            raise ConfigError("lags must be >= 0")
        if self.exogenous_at_horizon and not self.exogenous_channels:
            raise ConfigError("exogenous_at_horizon requires exogenous channels")
        object.__setattr__(self, "exogenous_channels", tuple(self.exogenous_channels))

    def validate_against(self, table: TimeSeriesTable) -> None:
        for name in (self.target_channel, *self.exogenous_channels):
            if name not in table.channels:
                raise SchemaError(f"channel {name!r} missing from table")

    def feature_offsets(self) -> list[tuple[str, int]]:
        """(channel, step offset relative to k) per feature, in column order."""
        offsets: list[tuple[str, int]] = []
        if self.exogenous_at_horizon:
            for j in range(self.lags + 1):
                for name in self.exogenous_channels:
                    offsets.append((name, self.horizon - j))
        else:
            for j in range(self.lags + 1):
                offsets.append((self.target_channel, -j))
            for j in range(self.lags + 1):
                for name in self.exogenous_channels:
                    offsets.append((name, -j))
        return offsets

    def feature_names(self) -> list[str]:
        return [_feature_name(ch, off) for ch, off in self.feature_offsets()]


def _feature_name(channel: str, offset: int) -> str:
    if offset == 0:
        return f"{channel}[k]"
    return f"{channel}[k{offset:+d}]"


@dataclass(frozen=True)
class DesignMatrix:
    """Aligned regression inputs and targets with row provenance.

    ``row_steps`` holds the origin step k of each row in the source table;
    ``norm_stats`` is filled by :func:`normalize` and reused verbatim for
    test-time matrices.
    """

    X: np.ndarray
    y: np.ndarray
    row_steps: np.ndarray
    feature_names: tuple[str, ...]
    norm_min: np.ndarray | None = None
    norm_max: np.ndarray | None = None
    constant_features: np.ndarray | None = None

    def __post_init__(self):
        if self.X.ndim != 2:
            raise DimensionError("X must be 2-D")
        n, d = self.X.shape
        if len(self.y) != n or len(self.row_steps) != n:
            raise DimensionError("X, y and row_steps must have equal length")
        if len(self.feature_names) != d:
            raise DimensionError("feature_names must match X columns")
        if len(set(self.feature_names)) != d:
            raise SchemaError("feature names must be unique")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def is_normalized(self) -> bool:
        return self.norm_min is not None


def build_design_matrix(
    table: TimeSeriesTable,
    spec: EmbeddingSpec,
    night: np.ndarray | None = None,
    keep_missing_target: bool = False,
) -> DesignMatrix:
    """Embed a table into rows (x_k, y_k) for k in (lags, K-horizon].

    Rows touching a missing value are dropped, as are rows marked night.
    With ``keep_missing_target`` the target may be NaN (used for building
    test-time matrices where the power values are withheld); feature
    completeness is still required.
    """
    spec.validate_against(table)
    k_total = len(table)
    if k_total <= spec.lags + spec.horizon:
        raise InsufficientDataError(
            f"need more than lags + horizon = {spec.lags + spec.horizon} steps, "
            f"got {k_total}"
        )
    rows = np.arange(spec.lags, k_total - spec.horizon)
    offsets = spec.feature_offsets()
    x = np.empty((rows.size, len(offsets)))
    for column, (channel, offset) in enumerate(offsets):
        x[:, column] = table.channel(channel)[rows + offset]
    y = table.channel(spec.target_channel)[rows + spec.horizon]

    valid = np.all(np.isfinite(x), axis=1)
    if not keep_missing_target:
        valid &= np.isfinite(y)
    if night is not None:
        if len(night) != k_total:
            raise DimensionError("night mask must cover every table step")
        valid &= ~night[rows]

    return DesignMatrix(
        X=x[valid],
        y=y[valid],
        row_steps=rows[valid],
        feature_names=tuple(spec.feature_names()),
    )


def build_feature_matrix(
    table: TimeSeriesTable, spec: EmbeddingSpec, origin_steps: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for the given origin steps k, without touching targets.

    Used at application time, where the target channel may be withheld.
    Returns (X, valid): rows with any feature missing or out of range are
    flagged invalid and filled with NaN.
    """
    for name, _ in spec.feature_offsets():
        if name not in table.channels:
            raise SchemaError(f"channel {name!r} missing from table")
    origin_steps = np.asarray(origin_steps, dtype=np.int64)
    offsets = spec.feature_offsets()
    x = np.full((origin_steps.size, len(offsets)), np.nan)
    k_total = len(table)
    for column, (channel, offset) in enumerate(offsets):
        steps = origin_steps + offset
        in_range = (steps >= 0) & (steps < k_total)
        x[in_range, column] = table.channel(channel)[steps[in_range]]
    valid = np.all(np.isfinite(x), axis=1)
    return x, valid


# ---------------------------------------------------------------------------
# Normalization and feature selection
# ---------------------------------------------------------------------------


def normalize(
    dm: DesignMatrix,
    stats: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> DesignMatrix:
    """Min-max scale features to [0, 1] with stats captured on first use.

    Passing ``stats`` (min, max, constant flags) applies training-set
    statistics to a test matrix; values outside [0, 1] are kept as-is.
    Constant features map to 0.5 and are flagged so selection skips them.
    """
    if stats is None:
        lo = dm.X.min(axis=0) if dm.n_rows else np.zeros(dm.n_features)
        hi = dm.X.max(axis=0) if dm.n_rows else np.ones(dm.n_features)
        constant = hi == lo
    else:
        lo, hi, constant = (np.asarray(part, dtype=float) for part in stats)
        constant = constant.astype(bool)
        if not (len(lo) == len(hi) == len(constant) == dm.n_features):
            raise DimensionError("normalization stats do not match features")

    span = np.where(constant, 1.0, hi - lo)
    x = (dm.X - lo) / span
    if constant.any():
        x[:, constant] = 0.5
    return replace(dm, X=x, norm_min=lo, norm_max=hi, constant_features=constant)


def norm_stats(dm: DesignMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not dm.is_normalized:
        raise ConfigError("design matrix has no stored normalization stats")
    return dm.norm_min, dm.norm_max, dm.constant_features


@dataclass(frozen=True)
class FeatureSelection:
    """Greedy forward-selection result: indices in pick order."""

    selected: tuple[int, ...]
    scores: tuple[float, ...]
    feature_names: tuple[str, ...] = ()


def _blocked_folds(n_rows: int, n_folds: int) -> list[np.ndarray]:
    n_folds = max(2, min(n_folds, n_rows))
    return [fold for fold in np.array_split(np.arange(n_rows), n_folds) if fold.size]


def _cv_rss(x: np.ndarray, y: np.ndarray, folds: list[np.ndarray]) -> float:
    """Out-of-fold residual sum of squares of an OLS fit with intercept."""
    total = 0.0
    design = np.column_stack([np.ones(len(y)), x])
    for fold in folds:
        train = np.ones(len(y), dtype=bool)
        train[fold] = False
        coef, *_ = np.linalg.lstsq(design[train], y[train], rcond=None)
        residual = y[fold] - design[fold] @ coef
        total += float(residual @ residual)
    return total


def forward_select(
    dm: DesignMatrix, count: int, n_folds: int = 5
) -> FeatureSelection:
    """Pick `count` features greedily by blocked-CV residual sum of squares.

    Folds are contiguous row blocks (rows are in time order), ties break
    toward the lowest feature index, and constant features are skipped.
    """
    if not 1 <= count <= dm.n_features:
        raise ConfigError(
            f"count must be in [1, {dm.n_features}], got {count}"
        )
    constant = (
        dm.constant_features
        if dm.constant_features is not None
        else (dm.X.max(axis=0) == dm.X.min(axis=0)) if dm.n_rows else
        np.zeros(dm.n_features, dtype=bool)
    )
    usable = [i for i in range(dm.n_features) if not constant[i]]
    if count > len(usable):
        raise ConfigError(
            f"count {count} exceeds the {len(usable)} non-constant features"
        )

    folds = _blocked_folds(dm.n_rows, n_folds)
    selected: list[int] = []
    scores: list[float] = []
    remaining = list(usable)
    while len(selected) < count:
        best_index = -1
        best_score = np.inf
        for candidate in remaining:
            columns = selected + [candidate]
            score = _cv_rss(dm.X[:, columns], dm.y, folds)
            if score < best_score:
                best_score = score
                best_index = candidate
        selected.append(best_index)
        scores.append(best_score)
        remaining.remove(best_index)

    return FeatureSelection(
        selected=tuple(selected),
        scores=tuple(scores),
        feature_names=tuple(dm.feature_names[i] for i in selected),
    )


def take_features(dm: DesignMatrix, selection: FeatureSelection) -> DesignMatrix:
    """Restrict a design matrix to the selected columns (in pick order)."""
    indices = list(selection.selected)
    if any(i < 0 or i >= dm.n_features for i in indices):
        raise ConfigError("selection indices do not fit the design matrix")
    return DesignMatrix(
        X=dm.X[:, indices],
        y=dm.y,
        row_steps=dm.row_steps,
        feature_names=tuple(dm.feature_names[i] for i in indices),
        norm_min=dm.norm_min[indices] if dm.norm_min is not None else None,
        norm_max=dm.norm_max[indices] if dm.norm_max is not None else None,
        constant_features=(
            dm.constant_features[indices] if dm.constant_features is not None else None
        ),
    )


# ---------------------------------------------------------------------------
# Persistence (CSV + JSON sidecar)
# ---------------------------------------------------------------------------


def save_design_matrix(dm: DesignMatrix, path: str | Path) -> None:
    """Write rows as CSV next to a .json sidecar with stats and names."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["row_step", *dm.feature_names, "target"])
        for i in range(dm.n_rows):
            writer.writerow(
                [int(dm.row_steps[i]), *(repr(v) for v in dm.X[i]), repr(float(dm.y[i]))]
            )
    sidecar = {
        "feature_names": list(dm.feature_names),
        "norm_min": None if dm.norm_min is None else [repr(v) for v in dm.norm_min],
        "norm_max": None if dm.norm_max is None else [repr(v) for v in dm.norm_max],
        "constant_features": (
            None
            if dm.constant_features is None
            else [bool(v) for v in dm.constant_features]
        ),
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True)
    )


def load_design_matrix(path: str | Path) -> DesignMatrix:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    rows = []
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        for row in reader:
            rows.append(row)
    names = sidecar["feature_names"]
    if header != ["row_step", *names, "target"]:
        raise SchemaError(f"{path} does not match its sidecar feature names")
    steps = np.array([int(r[0]) for r in rows], dtype=np.int64)
    x = np.array([[float(v) for v in r[1:-1]] for r in rows], dtype=float)
    x = x.reshape(len(rows), len(names))
    y = np.array([float(r[-1]) for r in rows], dtype=float)

    def _floats(key):
        raw = sidecar[key]
        return None if raw is None else np.array([float(v) for v in raw])

    constant = sidecar["constant_features"]
    return DesignMatrix(
        X=x,
        y=y,
        row_steps=steps,
        feature_names=tuple(names),
        norm_min=_floats("norm_min"),
        norm_max=_floats("norm_max"),
        constant_features=None if constant is None else np.asarray(constant, bool),
    )
