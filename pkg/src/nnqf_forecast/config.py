"""Run configuration: one JSON file drives ingest, training and evaluation.

Defaults mirror the benchmark setup: 24-hour horizon with 24 lags of
weather forecasts read at the target time, 99 quantile levels, neighbor
grid {50, 100, 150, 200}, unlimited neighbor distance, night threshold
100000 J/h/m^2 and four selected features.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataprep import DEFAULT_NIGHT_THRESHOLD, ColumnSchema, EmbeddingSpec
from .errors import ConfigError
from .nnqf import DEFAULT_LEVELS
from .synth import SyntheticSpec
from .tasks import PipelineConfig, TaskWindow, gefcom14_windows


@dataclass(frozen=True)
class IngestSource:
    csv: str
    dataset: str


@dataclass(frozen=True)
class IngestConfig:
    sources: tuple[IngestSource, ...]
    schema: ColumnSchema
    difference_channels: tuple[str, ...] = ()


@dataclass(frozen=True)
class BenchConfig:
    fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    query_count: int = 200


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig
    datasets: tuple[str, ...] = ()
    ingest: IngestConfig | None = None
    synthetic: SyntheticSpec | None = None
    tasks: tuple[TaskWindow, ...] = ()
    use_gefcom_benchmark: bool = False
    train_span: tuple[int, int] | None = None
    bench: BenchConfig = field(default_factory=BenchConfig)
    out_dir: str = "runs/out"


def _levels_from(raw) -> tuple[float, ...]:
    if raw is None:
        return DEFAULT_LEVELS
    if isinstance(raw, dict):
        start = float(raw.get("start", 0.01))
        stop = float(raw.get("stop", 0.99))
        step = float(raw.get("step", 0.01))
        count = int(round((stop - start) / step)) + 1
        levels = np.round(start + step * np.arange(count), 12)
    else:
        levels = np.asarray(raw, dtype=float)
    if levels.size == 0 or np.any(np.diff(levels) <= 0):
        raise ConfigError("levels must be non-empty and strictly increasing")
    if levels.min() <= 0 or levels.max() >= 1:
        raise ConfigError("levels must lie strictly inside (0, 1)")
    return tuple(float(q) for q in levels)


def _embedding_from(raw: dict | None) -> EmbeddingSpec:
    raw = raw or {}
    return EmbeddingSpec(
        horizon=int(raw.get("horizon", 24)),
        lags=int(raw.get("lags", 24)),
        target_channel=raw.get("target_channel", "power"),
        exogenous_channels=tuple(raw.get("exogenous_channels", ())),
        exogenous_at_horizon=bool(raw.get("exogenous_at_horizon", False)),
    )


def _tasks_from(raw, datasets_present: bool) -> tuple[tuple[TaskWindow, ...], bool]:
    if raw is None:
        return (), False
    if raw == "gefcom14":
        return tuple(gefcom14_windows()), True
    windows = []
    for entry in raw:
        windows.append(
            TaskWindow(
                task_id=int(entry["id"]),
                train_start=int(entry.get("train_start", 0)),
                train_end=int(entry["train_end"]),
                test_end=int(entry["test_end"]),
            )
        )
    return tuple(windows), False


def load_run_config(
    path: str | Path,
    seed: int | None = None,
    jobs: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """Parse a JSON run configuration, applying CLI overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    night = raw.get("night")
    network = raw.get("network") or {}
    machine = raw.get("machine") or {}
    max_distance = raw.get("max_neighbor_distance", "inf")
    if isinstance(max_distance, str):
        if max_distance.lower() not in ("inf", "infinity"):
            raise ConfigError(f"bad max_neighbor_distance {max_distance!r}")
        max_distance = math.inf

    pipeline = PipelineConfig(
        embedding=_embedding_from(raw.get("embedding")),
        levels=_levels_from(raw.get("levels")),
        night_channel=None if night is None else night["channel"],
        night_threshold=(
            DEFAULT_NIGHT_THRESHOLD
            if night is None
            else float(night.get("threshold", DEFAULT_NIGHT_THRESHOLD))
        ),
        selection_count=raw.get("selection_count", 4),
        model_kinds=tuple(raw.get("models", ("poly1",))),
        neighbors_grid=tuple(int(k) for k in raw.get("neighbors", (50, 100, 150, 200))),
        max_neighbor_distance=float(max_distance),
        network_epochs=int(network.get("epochs", 2000)),
        network_learning_rate=float(network.get("learning_rate", 0.5)),
        seed=int(raw.get("seed", 0)) if seed is None else seed,
        jobs=int(raw.get("jobs", 1)) if jobs is None else jobs,
        neighbor_method=raw.get("neighbor_method", "auto"),
        machine_cores=int(machine.get("n_cores", 1)),
        machine_clock_hz=float(machine.get("clock_hz", 1.0e9)),
    )

    ingest = None
    if "ingest" in raw:
        section = raw["ingest"]
        schema = section["schema"]
        ingest = IngestConfig(
            sources=tuple(
                IngestSource(csv=s["csv"], dataset=s["dataset"])
                for s in section["sources"]
            ),
            schema=ColumnSchema(
                timestamp=schema["timestamp"],
                channels=dict(schema["channels"]),
                power_channel=schema.get("power_channel"),
            ),
            difference_channels=tuple(section.get("difference_channels", ())),
        )

    synthetic = None
    if "synthetic" in raw:
        section = raw["synthetic"]
        synthetic = SyntheticSpec(
            length=int(section["length"]),
            generator=section.get("generator", "heteroscedastic-linear"),
            seed=int(section.get("seed", 0)),
            split_fraction=float(section.get("split_fraction", 0.5)),
        )

    tasks, gefcom = _tasks_from(raw.get("tasks"), bool(raw.get("datasets")))

    train_span = None
    if "train_span" in raw and raw["train_span"] is not None:
        span = raw["train_span"]
        train_span = (int(span.get("start", 0)), int(span["end"]))

    bench_raw = raw.get("bench") or {}
    bench = BenchConfig(
        fractions=tuple(float(f) for f in bench_raw.get("fractions", (0.25, 0.5, 0.75, 1.0))),
        query_count=int(bench_raw.get("query_count", 200)),
    )

    return RunConfig(
        pipeline=pipeline,
        datasets=tuple(raw.get("datasets", ())),
        ingest=ingest,
        synthetic=synthetic,
        tasks=tasks,
        use_gefcom_benchmark=gefcom,
        train_span=train_span,
        bench=bench,
        out_dir=raw.get("out", "runs/out") if out is None else out,
    )
