"""Forecast scoring: pinball loss, skill score, reliability, effort.

Also defines the report container written by the evaluation harness and
the operation counter used for machine-independent cost comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, EmptySampleError

DAY_POWER_THRESHOLD = 0.05


class OpCounter:
    """Accumulates abstract operation counts (e.g. neighbor-row visits)."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def pinball_loss(y, yhat, q: float) -> float:
    """Mean pinball loss of predictions yhat at probability level q."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise DimensionError("y and yhat must be 1-D and of equal length")
    if y.size == 0:
        raise EmptySampleError("pinball loss of an empty sample")
    residual = y - yhat
    under = y < yhat
    losses = np.where(under, (q - 1.0) * residual, q * residual)
    return float(losses.mean())


def average_pinball(per_level, expected_count: int = 99) -> float:
    """Arithmetic mean over the per-level pinball losses."""
    per_level = np.asarray(per_level, dtype=float)
    if per_level.ndim != 1 or per_level.size != expected_count:
        raise DimensionError(
            f"expected {expected_count} per-level losses, got {per_level.size}"
        )
    return float(per_level.mean())


def skill_score(q_pl: float, q_pl_benchmark: float) -> float:
    """Relative pinball improvement over a benchmark loss."""
    if q_pl_benchmark <= 0:
        raise DomainError("benchmark pinball loss must be positive")
    return (q_pl_benchmark - q_pl) / q_pl_benchmark


def reliability(
    y,
    yhat_q,
    median_forecast=None,
    day_filter: bool = True,
    threshold: float = DAY_POWER_THRESHOLD,
) -> float:
    """Fraction of observations at or below the quantile forecasts.

    With ``day_filter`` the sample is restricted to rows where the
    observed power or the median forecast exceeds the threshold, so that
    trivial night values do not skew the result.
    """
    y = np.asarray(y, dtype=float)
    yhat_q = np.asarray(yhat_q, dtype=float)
    if y.shape != yhat_q.shape or y.ndim != 1:
        raise DimensionError("y and yhat_q must be 1-D and of equal length")
    if day_filter:
        if median_forecast is None:
            keep = y > threshold
        else:
            median_forecast = np.asarray(median_forecast, dtype=float)
            if median_forecast.shape != y.shape:
                raise DimensionError("median forecast must match y")
            keep = (y > threshold) | (median_forecast > threshold)
        y = y[keep]
        yhat_q = yhat_q[keep]
    if y.size == 0:
        raise EmptySampleError("reliability of an empty (filtered) sample")
    return float(np.mean(y <= yhat_q))


def computational_effort(t_seconds: float, n_cores: int, clock_hz: float) -> float:
    """Wall time x cores x clock rate: a machine-normalized cycle count."""
    if t_seconds <= 0 or n_cores <= 0 or clock_hz <= 0:
        raise DomainError("effort factors must all be positive")
    return t_seconds * n_cores * clock_hz


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------


@dataclass
class TaskResult:
    """Scores of one model on one rolling task."""

    task_id: int
    model_kind: str
    n_neighbors: int | None
    levels: tuple[float, ...]
    per_level_pinball: np.ndarray
    q_pl: float
    q_sk: float | None
    reliability_curve: np.ndarray
    t_filter: float
    t_fit: float
    t_apply: float
    effort_train: float
    effort_apply: float
    n_test_rows: int

    @property
    def model_id(self) -> str:
        if self.n_neighbors is None:
            return self.model_kind
        return f"{self.model_kind}(nn={self.n_neighbors})"


@dataclass
class EvaluationReport:
    """All task results of a run plus the level grid they share."""

    levels: tuple[float, ...]
    results: list[TaskResult] = field(default_factory=list)

    def models(self) -> list[str]:
        seen = []
        for result in self.results:
            if result.model_id not in seen:
                seen.append(result.model_id)
        return seen

    def aggregate_pinball(self, model_id: str) -> float:
        values = [r.q_pl for r in self.results if r.model_id == model_id]
        if not values:
            raise EmptySampleError(f"no results for {model_id}")
        return float(np.mean(values))

    def write_metrics_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "task",
                    "model",
                    "n_neighbors",
                    "q_pl",
                    "q_sk",
                    "t_filter_s",
                    "t_fit_s",
                    "t_apply_s",
                    "effort_train",
                    "effort_apply",
                    "n_test_rows",
                ]
            )
            for r in self.results:
                writer.writerow(
                    [
                        r.task_id,
                        r.model_kind,
                        "" if r.n_neighbors is None else r.n_neighbors,
                        repr(r.q_pl),
                        "" if r.q_sk is None else repr(r.q_sk),
                        repr(r.t_filter),
                        repr(r.t_fit),
                        repr(r.t_apply),
                        repr(r.effort_train),
                        repr(r.effort_apply),
                        r.n_test_rows,
                    ]
                )

    def write_level_losses_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["task", "model", "n_neighbors", "q", "pinball"])
            for r in self.results:
                for q, loss in zip(r.levels, r.per_level_pinball):
                    writer.writerow(
                        [
                            r.task_id,
                            r.model_kind,
                            "" if r.n_neighbors is None else r.n_neighbors,
                            repr(float(q)),
                            repr(float(loss)),
                        ]
                    )

    def write_reliability_csv(self, path: str | Path) -> None:
        """Plot data for reliability curves: q against observed coverage."""
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["task", "model", "n_neighbors", "q", "coverage"])
            for r in self.results:
                for q, cov in zip(r.levels, r.reliability_curve):
                    writer.writerow(
                        [
                            r.task_id,
                            r.model_kind,
                            "" if r.n_neighbors is None else r.n_neighbors,
                            repr(float(q)),
                            "" if not np.isfinite(cov) else repr(float(cov)),
                        ]
                    )

    def write_effort_csv(self, path: str | Path) -> None:
        """Plot data: computational effort against average pinball loss."""
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["task", "model", "n_neighbors", "phase", "effort", "q_pl"])
            for r in self.results:
                for phase, effort in (
                    ("train", r.effort_train),
                    ("apply", r.effort_apply),
                ):
                    writer.writerow(
                        [
                            r.task_id,
                            r.model_kind,
                            "" if r.n_neighbors is None else r.n_neighbors,
                            phase,
                            repr(float(effort)),
                            repr(float(r.q_pl)),
                        ]
                    )

    def write_aggregate_csv(self, path: str | Path, benchmark_mean: float | None = None) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["model", "n_tasks", "q_pl_mean", "q_sk_vs_benchmark_mean"])
            for model_id in self.models():
                mean_loss = self.aggregate_pinball(model_id)
                sk = (
                    repr(skill_score(mean_loss, benchmark_mean))
                    if benchmark_mean
                    else ""
                )
                n_tasks = sum(1 for r in self.results if r.model_id == model_id)
                writer.writerow([model_id, n_tasks, repr(mean_loss), sk])
