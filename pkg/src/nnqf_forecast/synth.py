"""Synthetic datasets for desk-scale validation and scaling studies.

Two generators: a heteroscedastic-linear process whose conditional
quantiles are known in closed form (the q-quantile of the power given
driver value x is exactly q*x), and a household-load-like process with
daily and weekly periodicity for neighbor-scaling experiments.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataprep import ColumnSchema, TimeSeriesTable, ingest_csv
from .errors import ConfigError, FormatError

GENERATOR_IDS = ("heteroscedastic-linear", "household-load-like")


@dataclass(frozen=True)
class SyntheticSpec:
    length: int
    generator: str = "heteroscedastic-linear"
    seed: int = 0
    split_fraction: float = 0.5

    def __post_init__(self):
        if self.length < 100:
            raise ConfigError("length must be >= 100")
        if self.generator not in GENERATOR_IDS:
            raise ConfigError(f"unknown generator {self.generator!r}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie in (0, 1)")


def generate(spec: SyntheticSpec) -> TimeSeriesTable:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    k = np.arange(spec.length)
    if spec.generator == "heteroscedastic-linear":
        # power[t] = driver[t] * eps[t], eps ~ U(0,1): the conditional
        # q-quantile of power given driver=x is q*x.
        driver = rng.uniform(0.0, 1.0, spec.length)
        noise = rng.uniform(0.0, 1.0, spec.length)
        channels = {"driver": driver, "power": driver * noise}
    else:
        daily = np.sin(2.0 * np.pi * (k % 24) / 24.0 - 0.5 * np.pi)
        weekly = np.where((k // 24) % 7 >= 5, 0.12, 0.0)  # weekend bump
        base = 0.35 + 0.18 * daily + weekly
        noise = rng.uniform(0.75, 1.25, spec.length)
        load = np.clip(base * noise, 0.0, 1.0)
        channels = {"load": load}
    target = "power" if spec.generator == "heteroscedastic-linear" else "load"
    return TimeSeriesTable(
        timestamps=k.astype(np.int64),
        channels=channels,
        power_channel=target,
    )


def split_steps(spec: SyntheticSpec) -> tuple[int, int]:
    """(train_end, test_end) steps implied by the split fraction."""
    train_end = int(round(spec.length * spec.split_fraction))
    return train_end, spec.length


# ---------------------------------------------------------------------------
# Canonical on-disk dataset (manifest + CSV)
# ---------------------------------------------------------------------------

_MANIFEST_NAME = "manifest.json"
_DATA_NAME = "data.csv"


def write_canonical(table: TimeSeriesTable, directory: str | Path) -> Path:
    """Persist a table as data.csv plus a manifest with a content hash."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(table.channels)
    lines = ["timestamp," + ",".join(names)]
    for i in range(len(table)):
        cells = [str(int(table.timestamps[i]))]
        for name in names:
            value = table.channels[name][i]
            cells.append("" if not np.isfinite(value) else repr(float(value)))
        lines.append(",".join(cells))
    payload = ("\n".join(lines) + "\n").encode()
    (directory / _DATA_NAME).write_bytes(payload)
    manifest = {
        "channels": names,
        "power_channel": table.power_channel,
        "iso_timestamps": table.iso_timestamps,
        "length": len(table),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    (directory / _MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return directory


def read_canonical(directory: str | Path) -> TimeSeriesTable:
    directory = Path(directory)
    manifest_path = directory / _MANIFEST_NAME
    data_path = directory / _DATA_NAME
    if not manifest_path.exists() or not data_path.exists():
        raise FormatError(f"{directory} is not a canonical dataset directory")
    manifest = json.loads(manifest_path.read_text())
    payload = data_path.read_bytes()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest["sha256"]:
        raise FormatError(f"{data_path} content hash mismatch")
    schema = ColumnSchema(
        timestamp="timestamp",
        channels={name: name for name in manifest["channels"]},
        power_channel=manifest["power_channel"],
    )
    table = ingest_csv(data_path, schema)
    if len(table) != manifest["length"]:
        raise FormatError(f"{data_path} length differs from manifest")
    return table
