"""Rolling train/test task execution.

A task trains on one span and forecasts the following span on a 24-hour
basis. The target channel is hidden during the test span (weather stays
visible), enforced by an access guard that records any read of protected
values while the training/prediction phases run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .baselines import BenchmarkTable, fit_knnqr, fit_tqr
from .dataprep import (
    DEFAULT_NIGHT_THRESHOLD,
    DesignMatrix,
    EmbeddingSpec,
    TimeSeriesTable,
    build_design_matrix,
    build_feature_matrix,
    forward_select,
    night_mask,
    normalize,
    take_features,
)
from .errors import ConfigError, EmptySampleError, InsufficientDataError
from .evaluation import TaskResult, computational_effort, pinball_loss, reliability, skill_score
from .models import QuantileModelSet
from .nnqf import DEFAULT_LEVELS, NnqfConfig, apply_filter, inverse_variance_weights
from .regressors import NetworkSpec, PolynomialSpec, fit_network, fit_polynomial_constrained


# ---------------------------------------------------------------------------
# Task windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskWindow:
    """Training span [train_start, train_end), test span [train_end, test_end)."""

    task_id: int
    train_start: int
    train_end: int
    test_end: int

    def __post_init__(self):
        if not 0 <= self.train_start < self.train_end < self.test_end:
            raise ConfigError(
                f"task {self.task_id}: spans must satisfy "
                "0 <= train_start < train_end < test_end"
            )

    @property
    def test_length(self) -> int:
        return self.test_end - self.train_end


# GEFCom14 solar track: training always starts 2012-04-01; per-task
# training lengths and one-month test spans, tasks 4 through 15.
_GEFCOM14_TRAIN_STEPS = {
    4: 10944,
    5: 11688,
    6: 12432,
    7: 13152,
    8: 13896,
    9: 14616,
    10: 15360,
    11: 16104,
    12: 16776,
    13: 17520,
    14: 18240,
    15: 18984,
}
_GEFCOM14_TEST_STEPS = {
    4: 744,
    5: 744,
    6: 720,
    7: 744,
    8: 720,
    9: 744,
    10: 744,
    11: 672,
    12: 744,
    13: 720,
    14: 744,
    15: 720,
}
GEFCOM14_TOTAL_STEPS = 19704


def gefcom14_windows() -> list[TaskWindow]:
    """The twelve scored competition tasks as rolling windows."""
    windows = []
    for task in sorted(_GEFCOM14_TRAIN_STEPS):
        train = _GEFCOM14_TRAIN_STEPS[task]
        windows.append(
            TaskWindow(
                task_id=task,
                train_start=0,
                train_end=train,
                test_end=train + _GEFCOM14_TEST_STEPS[task],
            )
        )
    return windows


# ---------------------------------------------------------------------------
# Access guard
# ---------------------------------------------------------------------------


class AccessLog:
    """Collects guarded-read events; empty after a clean run."""

    def __init__(self):
        self.events: list[str] = []

    def record(self, message: str) -> None:
        self.events.append(message)

    @property
    def violations(self) -> int:
        return len(self.events)


class GuardedTable:
    """Table wrapper recording reads of a protected channel inside a span.

    While armed, any access that touches the protected channel's
    forbidden steps is logged. Training code must therefore obtain its
    data via :meth:`slice_steps` limited to the training span, and
    application code must build features from :meth:`feature_table`,
    which simply omits the protected channel.
    """

    def __init__(
        self,
        table: TimeSeriesTable,
        protected_channel: str,
        forbidden_span: tuple[int, int],
        log: AccessLog | None = None,
    ):
        self._table = table
        self.protected_channel = protected_channel
        self.forbidden_span = forbidden_span
        self.log = log if log is not None else AccessLog()
        self.armed = True

    def __len__(self) -> int:
        return len(self._table)

    def disarm(self) -> None:
        self.armed = False

    def _check(self, start: int, stop: int, channel: str) -> None:
        lo, hi = self.forbidden_span
        if self.armed and channel == self.protected_channel and start < hi and stop > lo:
            self.log.record(
                f"read of {channel!r} steps [{max(start, lo)}, {min(stop, hi)})"
            )

    def channel(self, name: str) -> np.ndarray:
        self._check(0, len(self._table), name)
        return self._table.channel(name)

    def slice_steps(self, start: int, stop: int) -> TimeSeriesTable:
        for name in self._table.channels:
            self._check(start, stop, name)
        return self._table.slice_steps(start, stop)

    def feature_table(self) -> TimeSeriesTable:
        """All channels except the protected one (never logs)."""
        return TimeSeriesTable(
            timestamps=self._table.timestamps,
            channels={
                k: v
                for k, v in self._table.channels.items()
                if k != self.protected_channel
            },
            power_channel=None,
            iso_timestamps=self._table.iso_timestamps,
        )

    def unguarded(self) -> TimeSeriesTable:
        return self._table


# ---------------------------------------------------------------------------
# Model-kind grid
# ---------------------------------------------------------------------------

MODEL_KIND_IDS = (
    "poly1",
    "poly2",
    "poly3",
    "poly4",
    "net6",
    "net10",
    "knnqr",
    "tqr1",
    "tqr2",
    "tqr3",
    "tqr4",
)


@dataclass(frozen=True)
class ModelKind:
    kind_id: str
    family: str  # poly | net | knnqr | tqr
    degree: int | None = None
    hidden_units: int | None = None

    @property
    def uses_filter(self) -> bool:
        return self.family in ("poly", "net")

    @property
    def uses_neighbors(self) -> bool:
        return self.family in ("poly", "net", "knnqr")


def parse_model_kind(kind_id: str) -> ModelKind:
    kind_id = kind_id.lower()
    if kind_id.startswith("poly") and kind_id[4:].isdigit():
        return ModelKind(kind_id, "poly", degree=int(kind_id[4:]))
    if kind_id.startswith("net") and kind_id[3:].isdigit():
        return ModelKind(kind_id, "net", hidden_units=int(kind_id[3:]))
    if kind_id == "knnqr":
        return ModelKind(kind_id, "knnqr")
    if kind_id.startswith("tqr") and kind_id[3:].isdigit():
        return ModelKind(kind_id, "tqr", degree=int(kind_id[3:]))
    raise ConfigError(f"unknown model kind {kind_id!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a task run needs besides the data itself."""

    embedding: EmbeddingSpec
    levels: tuple[float, ...] = DEFAULT_LEVELS
    night_channel: str | None = None
    night_threshold: float = DEFAULT_NIGHT_THRESHOLD
    selection_count: int | None = 4
    model_kinds: tuple[str, ...] = ("poly1",)
    neighbors_grid: tuple[int, ...] = (50, 100, 150, 200)
    max_neighbor_distance: float = math.inf
    network_epochs: int = 2000
    network_learning_rate: float = 0.5
    seed: int = 0
    jobs: int = 1
    neighbor_method: str = "auto"
    machine_cores: int = 1
    machine_clock_hz: float = 1.0e9

    def model_instances(self) -> list[tuple[ModelKind, int | None]]:
        instances = []
        for kind_id in self.model_kinds:
            kind = parse_model_kind(kind_id)
            if kind.uses_neighbors:
                for k in self.neighbors_grid:
                    instances.append((kind, int(k)))
            else:
                instances.append((kind, None))
        return instances

    def embedding_payload(self) -> dict:
        return {
            "horizon": self.embedding.horizon,
            "lags": self.embedding.lags,
            "target_channel": self.embedding.target_channel,
            "exogenous_channels": list(self.embedding.exogenous_channels),
            "exogenous_at_horizon": self.embedding.exogenous_at_horizon,
            "night_channel": self.night_channel,
            "night_threshold": self.night_threshold,
        }


def embedding_from_payload(payload: dict) -> EmbeddingSpec:
    return EmbeddingSpec(
        horizon=int(payload["horizon"]),
        lags=int(payload["lags"]),
        target_channel=payload["target_channel"],
        exogenous_channels=tuple(payload["exogenous_channels"]),
        exogenous_at_horizon=bool(payload["exogenous_at_horizon"]),
    )


# ---------------------------------------------------------------------------
# Training / application pipeline
# ---------------------------------------------------------------------------


@dataclass
class FittedInstance:
    kind: ModelKind
    n_neighbors: int | None
    model: object
    t_filter: float
    t_fit: float
    n_train_rows: int = 0


def prepare_training_matrix(
    table: TimeSeriesTable, cfg: PipelineConfig
) -> DesignMatrix:
    """Night-filter, embed, select and normalize one plant's training data."""
    night = None
    if cfg.night_channel is not None:
        night = night_mask(
            table, cfg.night_channel, cfg.night_threshold, cfg.embedding.horizon
        )
    dm = build_design_matrix(table, cfg.embedding, night=night)
    if dm.n_rows == 0:
        raise InsufficientDataError("no usable training rows after filtering")
    if cfg.selection_count is not None and cfg.selection_count < dm.n_features:
        selection = forward_select(dm, cfg.selection_count)
        dm = take_features(dm, selection)
    return normalize(dm)


def train_instances(
    table: TimeSeriesTable, cfg: PipelineConfig
) -> list[FittedInstance]:
    """Fit every configured (model kind, neighbor count) combination.

    The filter runs once per neighbor count and its targets are shared by
    all model kinds using that count; its wall time is attributed to each
    of them (training = filter + fit).
    """
    dm = prepare_training_matrix(table, cfg)
    weights = tuple(inverse_variance_weights(dm.X))
    payload = cfg.embedding_payload()

    filtered: dict[int, tuple[object, float]] = {}
    for kind, k in cfg.model_instances():
        if kind.uses_filter and k not in filtered:
            start = time.perf_counter()
            targets = apply_filter(
                dm,
                NnqfConfig(
                    n_neighbors=min(k, dm.n_rows),
                    max_distance=cfg.max_neighbor_distance,
                    distance_weights=weights,
                    quantile_levels=cfg.levels,
                ),
                method=cfg.neighbor_method,
            )
            filtered[k] = (targets, time.perf_counter() - start)

    fitted: list[FittedInstance] = []
    for kind, k in cfg.model_instances():
        t_filter = 0.0
        start = time.perf_counter()
        if kind.family == "poly":
            targets, t_filter = filtered[k]
            model = fit_polynomial_constrained(
                dm, targets, PolynomialSpec(kind.degree), embedding=payload
            )
        elif kind.family == "net":
            targets, t_filter = filtered[k]
            spec = NetworkSpec(
                hidden_units=kind.hidden_units,
                epochs=cfg.network_epochs,
                learning_rate=cfg.network_learning_rate,
                seed=cfg.seed,
            )
            model = fit_network(dm, targets, spec, n_jobs=cfg.jobs, embedding=payload)
        elif kind.family == "knnqr":
            model = fit_knnqr(
                dm,
                n_neighbors=min(k, dm.n_rows),
                distance_weights=weights,
                levels=cfg.levels,
                embedding=payload,
            )
        elif kind.family == "tqr":
            model = fit_tqr(
                dm, None, PolynomialSpec(kind.degree), cfg.levels, embedding=payload
            )
        else:  # pragma: no cover - parse_model_kind guards this
            raise ConfigError(f"unhandled family {kind.family!r}")
        t_fit = time.perf_counter() - start
        fitted.append(
            FittedInstance(
                kind=kind,
                n_neighbors=k,
                model=model,
                t_filter=t_filter,
                t_fit=t_fit,
                n_train_rows=dm.n_rows,
            )
        )
    return fitted


def forecast_rows(
    model,
    table: TimeSeriesTable,
    embedding: EmbeddingSpec,
    origin_steps: np.ndarray,
    night: np.ndarray | None = None,
    counter=None,
) -> np.ndarray:
    """Quantile forecasts for the given origin steps; night rows become 0.

    Rows whose features are unavailable stay NaN. The table may omit the
    target channel entirely; only feature channels are read.
    """
    x_full, valid = build_feature_matrix(table, embedding, origin_steps)
    full_names = embedding.feature_names()
    try:
        columns = [full_names.index(name) for name in model.schema.feature_names]
    except ValueError as exc:
        raise ConfigError(f"model features not produced by this embedding: {exc}")
    x = x_full[:, columns]

    n_levels = len(model.levels)
    out = np.full((origin_steps.size, n_levels), np.nan)
    if valid.any():
        out[valid] = model.predict(x[valid], counter=counter)
    if night is not None:
        out[night[np.asarray(origin_steps, dtype=np.int64)]] = 0.0
    return out


def scaling_study(
    table: TimeSeriesTable,
    cfg: PipelineConfig,
    train_end: int,
    fractions=(0.25, 0.5, 0.75, 1.0),
    query_count: int = 200,
) -> list[dict]:
    """Training-set-size sweep contrasting pretrained and kNN application.

    For each fraction the models are trained on the first part of the
    training span and applied to the same fixed set of test-span queries.
    Besides wall times, machine-independent operation counts are
    recorded: parameter evaluations for pretrained models, stored-row
    visits for the kNN baseline. Feature rows may read the target channel
    (load-style protocol: observations keep arriving in operation).
    """
    from .evaluation import OpCounter

    horizon = cfg.embedding.horizon
    min_steps = cfg.embedding.lags + horizon + 1
    if train_end + query_count > len(table):
        raise InsufficientDataError("not enough steps after train_end for queries")
    origin_steps = np.arange(train_end - horizon, train_end - horizon + query_count)

    rows: list[dict] = []
    for fraction in fractions:
        sub_end = max(min_steps + 1, int(round(train_end * fraction)))
        sub_table = table.slice_steps(0, sub_end)
        for instance in train_instances(sub_table, cfg):
            counter = OpCounter()
            start = time.perf_counter()
            forecast_rows(
                instance.model, table, cfg.embedding, origin_steps, counter=counter
            )
            t_apply = time.perf_counter() - start
            rows.append(
                {
                    "fraction": fraction,
                    "model": instance.kind.kind_id,
                    "n_neighbors": instance.n_neighbors,
                    "train_rows": instance.n_train_rows,
                    "t_filter": instance.t_filter,
                    "t_fit": instance.t_fit,
                    "t_apply": t_apply,
                    "apply_ops": counter.count,
                    "queries": int(origin_steps.size),
                }
            )
    return rows


def run_task(
    tables: list[TimeSeriesTable],
    window: TaskWindow,
    cfg: PipelineConfig,
    benchmark: BenchmarkTable | None = None,
) -> tuple[list[TaskResult], AccessLog]:
    """Execute one rolling task over one or more plants.

    Trains on the training span only (the target channel's test-span
    values are guarded), forecasts the test span, pools all plant rows
    and scores every configured model. Returns the results and the guard
    log, which is empty when no protected value was read.
    """
    log = AccessLog()
    horizon = cfg.embedding.horizon
    target = cfg.embedding.target_channel
    guards = []
    for table in tables:
        if window.test_end > len(table):
            raise InsufficientDataError(
                f"task {window.task_id} needs {window.test_end} steps, "
                f"table has {len(table)}"
            )
        guards.append(
            GuardedTable(table, target, (window.train_end, window.test_end), log=log)
        )

    # --- training phase (guarded) ---
    per_plant: list[list[FittedInstance]] = []
    for guard in guards:
        train_table = guard.slice_steps(window.train_start, window.train_end)
        per_plant.append(train_instances(train_table, cfg))

    # --- application phase (guarded; features never touch the target) ---
    origin_steps = np.arange(window.train_end - horizon, window.test_end - horizon)
    predictions: list[list[np.ndarray]] = []  # [instance][plant]
    apply_seconds: list[float] = []
    n_instances = len(per_plant[0])
    for index in range(n_instances):
        rows_per_plant = []
        elapsed = 0.0
        for guard, fitted in zip(guards, per_plant):
            feature_table = guard.feature_table()
            night = None
            if cfg.night_channel is not None:
                night = night_mask(
                    feature_table, cfg.night_channel, cfg.night_threshold, horizon
                )
            start = time.perf_counter()
            rows = forecast_rows(
                fitted[index].model,
                feature_table,
                cfg.embedding,
                origin_steps,
                night=night,
            )
            elapsed += time.perf_counter() - start
            rows_per_plant.append(rows)
        predictions.append(rows_per_plant)
        apply_seconds.append(elapsed)

    # --- scoring (guards disarmed; observed power may now be read) ---
    for guard in guards:
        guard.disarm()
    target_steps = origin_steps + horizon
    observed = np.concatenate(
        [g.channel(target)[target_steps] for g in guards]
    )

    levels = np.asarray(cfg.levels)
    median_index = int(np.argmin(np.abs(levels - 0.5)))
    results = []
    for index, (fitted_inst, rows_per_plant) in enumerate(
        zip(per_plant[0], predictions)
    ):
        pooled = np.concatenate(rows_per_plant, axis=0)
        valid = np.isfinite(observed) & np.all(np.isfinite(pooled), axis=1)
        y = observed[valid]
        yhat = pooled[valid]
        if y.size == 0:
            raise InsufficientDataError(
                f"task {window.task_id}: no scoreable test rows"
            )
        per_level = np.array(
            [pinball_loss(y, yhat[:, j], q) for j, q in enumerate(levels)]
        )
        q_pl = float(np.mean(per_level))
        q_sk = None
        if benchmark is not None and window.task_id in benchmark.values:
            q_sk = skill_score(100.0 * q_pl, benchmark.value(window.task_id))
        median = yhat[:, median_index] if math.isclose(levels[median_index], 0.5) else None
        curve = np.empty(levels.size)
        for j in range(levels.size):
            try:
                curve[j] = reliability(y, yhat[:, j], median_forecast=median)
            except EmptySampleError:
                curve[j] = np.nan
        t_filter = sum(p[index].t_filter for p in per_plant)
        t_fit = sum(p[index].t_fit for p in per_plant)
        t_apply = apply_seconds[index]
        results.append(
            TaskResult(
                task_id=window.task_id,
                model_kind=fitted_inst.kind.kind_id,
                n_neighbors=fitted_inst.n_neighbors,
                levels=tuple(cfg.levels),
                per_level_pinball=per_level,
                q_pl=q_pl,
                q_sk=q_sk,
                reliability_curve=curve,
                t_filter=t_filter,
                t_fit=t_fit,
                t_apply=t_apply,
                effort_train=computational_effort(
                    max(t_filter + t_fit, 1e-9),
                    cfg.machine_cores,
                    cfg.machine_clock_hz,
                ),
                effort_apply=computational_effort(
                    max(t_apply, 1e-9), cfg.machine_cores, cfg.machine_clock_hz
                ),
                n_test_rows=int(y.size),
            )
        )
    return results, log
