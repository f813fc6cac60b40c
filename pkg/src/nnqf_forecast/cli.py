"""Command-line front end.

Subcommands: ingest, synth, train, forecast, evaluate, bench. Every run
is driven by a JSON config file; --seed/--jobs/--out override the config.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver or
training error. Output files are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .baselines import load_benchmark_table
from .config import RunConfig, load_run_config
from .dataprep import difference_channel, ingest_csv, night_mask
from .errors import (
    DATA_ERRORS,
    SOLVER_ERRORS,
    ConfigError,
    ContractError,
    NnqfForecastError,
)
from .evaluation import EvaluationReport
from .models import load_models, save_models
from .synth import generate, read_canonical, split_steps, write_canonical
from .tasks import (
    embedding_from_payload,
    forecast_rows,
    run_task,
    scaling_study,
    train_instances,
)


@contextmanager
def _atomic(path: Path):
    """Yield a temp path, then rename it over the target on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _load_config(args) -> RunConfig:
    return load_run_config(args.config, seed=args.seed, jobs=args.jobs, out=args.out)


def _model_filename(kind_id: str, n_neighbors: int | None) -> str:
    if n_neighbors is None:
        return f"{kind_id}.json"
    return f"{kind_id}-nn{n_neighbors}.json"


def _dataset_tables(cfg: RunConfig):
    if not cfg.datasets:
        raise ConfigError("config declares no datasets")
    return [read_canonical(d) for d in cfg.datasets]


def _train_span(cfg: RunConfig, table) -> tuple[int, int]:
    if cfg.train_span is not None:
        return cfg.train_span
    if cfg.synthetic is not None:
        return 0, split_steps(cfg.synthetic)[0]
    return 0, len(table)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    if cfg.ingest is None:
        raise ConfigError("config has no 'ingest' section")
    for source in cfg.ingest.sources:
        table = ingest_csv(source.csv, cfg.ingest.schema)
        for channel in cfg.ingest.difference_channels:
            table = difference_channel(table, channel)
        write_canonical(table, source.dataset)
        print(f"ingested {source.csv} -> {source.dataset} ({len(table)} steps)")
    return 0


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    if cfg.synthetic is None:
        raise ConfigError("config has no 'synthetic' section")
    table = generate(cfg.synthetic)
    target = cfg.datasets[0] if cfg.datasets else str(Path(cfg.out_dir) / "dataset")
    write_canonical(table, target)
    train_end, _ = split_steps(cfg.synthetic)
    print(
        f"generated {cfg.synthetic.generator} dataset: {len(table)} steps, "
        f"train split ends at {train_end} -> {target}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    tables = _dataset_tables(cfg)
    out_dir = Path(cfg.out_dir)
    timing_rows = []
    for dataset, table in zip(cfg.datasets, tables):
        start, end = _train_span(cfg, table)
        train_table = table.slice_steps(start, end)
        name = Path(dataset).name
        for instance in train_instances(train_table, cfg.pipeline):
            path = out_dir / "models" / name / _model_filename(
                instance.kind.kind_id, instance.n_neighbors
            )
            with _atomic(path) as tmp:
                save_models(instance.model, tmp)
            timing_rows.append(
                [
                    name,
                    instance.kind.kind_id,
                    "" if instance.n_neighbors is None else instance.n_neighbors,
                    instance.n_train_rows,
                    repr(instance.t_filter),
                    repr(instance.t_fit),
                ]
            )
            print(f"trained {instance.kind.kind_id} on {name} -> {path}")
    with _atomic(out_dir / "timings.csv") as tmp:
        with tmp.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["dataset", "model", "n_neighbors", "train_rows", "t_filter_s", "t_fit_s"]
            )
            writer.writerows(timing_rows)
    return 0


def _format_timestamp(value: int, iso: bool) -> str:
    if iso:
        return str(np.datetime64(int(value), "h"))
    return str(int(value))


def cmd_forecast(args) -> int:
    cfg = _load_config(args)
    model = load_models(args.model)
    if model.embedding is None:
        raise ConfigError("model file carries no embedding; cannot build features")
    embedding = embedding_from_payload(model.embedding)
    tables = _dataset_tables(cfg)
    table = tables[args.dataset_index]

    start, end = args.start, args.end
    if end is None:
        end = len(table)
    if not 0 <= start < end <= len(table):
        raise ConfigError(f"forecast span [{start}, {end}) outside table")
    target_steps = np.arange(start, end)
    origin_steps = target_steps - embedding.horizon
    if origin_steps[0] < 0:
        raise ConfigError("forecast span starts before one horizon of data")

    night = None
    night_channel = model.embedding.get("night_channel")
    if night_channel:
        night = night_mask(
            table,
            night_channel,
            model.embedding.get("night_threshold", 100000.0),
            embedding.horizon,
        )
    rows = forecast_rows(model, table, embedding, origin_steps, night=night)

    out_path = Path(args.forecast_out)
    with _atomic(out_path) as tmp:
        with tmp.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["timestamp", *(f"q{q:.2f}" for q in model.levels)]
            )
            for i, step in enumerate(target_steps):
                stamp = _format_timestamp(
                    table.timestamps[step], table.iso_timestamps
                )
                cells = [
                    "" if not np.isfinite(v) else repr(float(v)) for v in rows[i]
                ]
                writer.writerow([stamp, *cells])
    print(f"forecast {len(target_steps)} steps -> {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    tables = _dataset_tables(cfg)
    if not cfg.tasks:
        raise ConfigError("config declares no tasks")
    benchmark = load_benchmark_table() if cfg.use_gefcom_benchmark else None

    report = EvaluationReport(levels=cfg.pipeline.levels)
    for window in cfg.tasks:
        results, log = run_task(tables, window, cfg.pipeline, benchmark=benchmark)
        if log.violations:
            raise ContractError(
                f"task {window.task_id} read protected test-span data: {log.events}"
            )
        report.results.extend(results)
        for result in results:
            print(
                f"task {result.task_id} {result.model_id}: "
                f"q_pl={100 * result.q_pl:.3f}%"
            )

    out_dir = Path(cfg.out_dir)
    writers = [
        ("metrics.csv", report.write_metrics_csv),
        ("pinball_levels.csv", report.write_level_losses_csv),
        ("reliability.csv", report.write_reliability_csv),
        ("effort_vs_pinball.csv", report.write_effort_csv),
    ]
    for name, writer in writers:
        with _atomic(out_dir / name) as tmp:
            writer(tmp)
    with _atomic(out_dir / "aggregate.csv") as tmp:
        report.write_aggregate_csv(
            tmp, benchmark_mean=benchmark.mean() if benchmark else None
        )
    print(f"report written to {out_dir}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    tables = _dataset_tables(cfg)
    table = tables[0]
    train_end = _train_span(cfg, table)[1]
    rows = scaling_study(
        table,
        cfg.pipeline,
        train_end=train_end,
        fractions=cfg.bench.fractions,
        query_count=cfg.bench.query_count,
    )
    out_path = Path(cfg.out_dir) / "scaling.csv"
    with _atomic(out_path) as tmp:
        with tmp.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "fraction",
                    "model",
                    "n_neighbors",
                    "train_rows",
                    "t_filter_s",
                    "t_fit_s",
                    "t_apply_s",
                    "apply_ops",
                    "queries",
                ]
            )
            for row in rows:
                writer.writerow(
                    [
                        row["fraction"],
                        row["model"],
                        "" if row["n_neighbors"] is None else row["n_neighbors"],
                        row["train_rows"],
                        repr(row["t_filter"]),
                        repr(row["t_fit"]),
                        repr(row["t_apply"]),
                        row["apply_ops"],
                        row["queries"],
                    ]
                )
    print(f"scaling study written to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnqf-forecast",
        description="Quantile forecasting via the nearest-neighbors quantile filter",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--jobs", type=int, default=None, help="override config jobs")
        p.add_argument("--out", default=None, help="override config output directory")

    p = sub.add_parser("ingest", help="read raw CSVs into canonical datasets")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic canonical dataset")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit all configured models on the training span")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="apply a saved model over a step span")
    common(p)
    p.add_argument("--model", required=True, help="model container file")
    p.add_argument("--start", type=int, required=True, help="first target step")
    p.add_argument("--end", type=int, default=None, help="end target step (exclusive)")
    p.add_argument("--dataset-index", type=int, default=0)
    p.add_argument(
        "--forecast-out", default="forecast.csv", help="output CSV file"
    )
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="run the rolling tasks and write reports")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="training-set-size scaling study")
    common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 4
    except NnqfForecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
