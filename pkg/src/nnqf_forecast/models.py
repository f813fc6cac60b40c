"""Fitted quantile-model containers, prediction clamp and persistence.

All model kinds (polynomial, network, pinball-fit polynomial, kNN) share
one JSON container format with a kind tag, the quantile levels, the input
schema (selected feature names plus normalization stats) and per-kind
parameters. Floats survive the round trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError

FORMAT_TAG = "nnqf-forecast-models"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class InputSchema:
    """Feature names and training-set normalization stats shared by all
    levels of a model set."""

    feature_names: tuple[str, ...]
    norm_min: np.ndarray
    norm_max: np.ndarray
    constant_features: np.ndarray

    def __post_init__(self):
        d = len(self.feature_names)
        if not (len(self.norm_min) == len(self.norm_max) == len(self.constant_features) == d):
            raise DimensionError("schema stats must match feature names")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Apply stored min-max stats; out-of-range values are not clipped."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise DimensionError(
                f"input has {x.shape[1]} features, schema expects {self.n_features}"
            )
        span = np.where(self.constant_features, 1.0, self.norm_max - self.norm_min)
        out = (x - self.norm_min) / span
        if self.constant_features.any():
            out[:, self.constant_features] = 0.5
        return out[0] if squeeze else out

    def to_payload(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "norm_min": [float(v) for v in self.norm_min],
            "norm_max": [float(v) for v in self.norm_max],
            "constant_features": [bool(v) for v in self.constant_features],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "InputSchema":
        return cls(
            feature_names=tuple(payload["feature_names"]),
            norm_min=np.asarray(payload["norm_min"], dtype=float),
            norm_max=np.asarray(payload["norm_max"], dtype=float),
            constant_features=np.asarray(payload["constant_features"], dtype=bool),
        )

    @classmethod
    def from_design(cls, dm) -> "InputSchema":
        if dm.norm_min is None:
            raise ConfigError("design matrix must be normalized before fitting")
        return cls(
            feature_names=tuple(dm.feature_names),
            norm_min=np.asarray(dm.norm_min, dtype=float),
            norm_max=np.asarray(dm.norm_max, dtype=float),
            constant_features=np.asarray(dm.constant_features, dtype=bool),
        )


def clamp_quantile_path(raw: np.ndarray) -> np.ndarray:
    """Application-time non-crossing clamp along the last axis.

    The lowest level is floored at zero; every further level is floored at
    the already-clamped level below it, so the output is non-negative and
    non-decreasing.
    """
    out = np.array(raw, dtype=float, copy=True)
    out[..., 0] = np.maximum(out[..., 0], 0.0)
    return np.maximum.accumulate(out, axis=-1)


@dataclass
class QuantileModelSet:
    """One fitted parametric model per quantile level, sharing a schema.

    ``kind`` is "poly" (constrained least squares), "net" (feedforward
    network) or "tqr" (pinball-minimizing polynomial); ``detail`` holds the
    kind-specific hyperparameters.
    """

    kind: str
    levels: tuple[float, ...]
    parameters: list[np.ndarray]
    schema: InputSchema
    detail: dict
    warnings: tuple[str, ...] = ()
    embedding: dict | None = None

    def __post_init__(self):
        if len(self.parameters) != len(self.levels):
            raise DimensionError("one parameter vector per level required")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must be strictly increasing")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def predict_raw(self, x: np.ndarray) -> np.ndarray:
        """Unclamped per-level outputs; x is raw (unnormalized) input."""
        squeeze = np.asarray(x).ndim == 1
        xn = self.schema.normalize(x)
        xn = np.atleast_2d(xn)
        if self.kind in ("poly", "tqr"):
            from .regressors import poly_basis, poly_exponents

            exponents = poly_exponents(self.schema.n_features, self.detail["max_degree"])
            basis = poly_basis(xn, exponents)
            raw = basis @ np.column_stack(self.parameters)
        elif self.kind == "net":
            from .regressors import network_forward

            hidden = self.detail["hidden_units"]
            raw = np.column_stack(
                [network_forward(theta, xn, hidden) for theta in self.parameters]
            )
        else:
            raise FormatError(f"cannot predict with model kind {self.kind!r}")
        return raw[0] if squeeze else raw

    def predict(self, x: np.ndarray, counter=None) -> np.ndarray:
        """Clamped quantile estimates (non-negative, non-decreasing)."""
        raw = self.predict_raw(x)
        if counter is not None:
            n_rows = 1 if raw.ndim == 1 else raw.shape[0]
            counter.add(self._ops_per_row() * n_rows)
        return clamp_quantile_path(raw)


    def _ops_per_row(self) -> int:
        # machine-independent application cost proxy: parameter count
        return int(sum(p.size for p in self.parameters))


def predict_clamped(models: QuantileModelSet, x: np.ndarray) -> np.ndarray:
    """Module-level alias for the clamped prediction path."""
    return models.predict(x)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_PARAM_KINDS = ("poly", "net", "tqr")


def serialize_models(models) -> bytes:
    """Serialize any supported model object to a versioned JSON container."""
    if isinstance(models, QuantileModelSet):
        if models.kind not in _PARAM_KINDS:
            raise FormatError(f"unknown model kind {models.kind!r}")
        body = {
            "kind": models.kind,
            "levels": [float(q) for q in models.levels],
            "parameters": [[float(v) for v in p] for p in models.parameters],
            "schema": models.schema.to_payload(),
            "detail": models.detail,
            "warnings": list(models.warnings),
            "embedding": models.embedding,
        }
    else:
        to_payload = getattr(models, "container_payload", None)
        if to_payload is None:
            raise FormatError(f"cannot serialize object of type {type(models)!r}")
        body = to_payload()
    document = {"format": FORMAT_TAG, "version": FORMAT_VERSION, **body}
    return json.dumps(document, sort_keys=True, separators=(",", ":")).encode()


_EXTRA_LOADERS: dict[str, object] = {}


def register_model_kind(kind: str, loader) -> None:
    """Hook for additional kinds (the kNN baseline registers itself)."""
    _EXTRA_LOADERS[kind] = loader


def deserialize_models(raw: bytes, expect_kind: str | None = None):
    """Inverse of :func:`serialize_models`; checks format, version, kind."""
    try:
        document = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"not a valid model container: {exc}") from exc
    if not isinstance(document, dict) or document.get("format") != FORMAT_TAG:
        raise FormatError("missing or wrong container format tag")
    if document.get("version") != FORMAT_VERSION:
        raise FormatError(
            f"container version {document.get('version')} unsupported"
        )
    kind = document.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(f"expected kind {expect_kind!r}, found {kind!r}")
    if kind in _PARAM_KINDS:
        return QuantileModelSet(
            kind=kind,
            levels=tuple(document["levels"]),
            parameters=[np.asarray(p, dtype=float) for p in document["parameters"]],
            schema=InputSchema.from_payload(document["schema"]),
            detail=document["detail"],
            warnings=tuple(document.get("warnings", ())),
            embedding=document.get("embedding"),
        )
    loader = _EXTRA_LOADERS.get(kind)
    if loader is None:
        raise FormatError(f"unknown model kind {kind!r}")
    return loader(document)


def save_models(models, path: str | Path) -> None:
    Path(path).write_bytes(serialize_models(models))


def load_models(path: str | Path, expect_kind: str | None = None):
    return deserialize_models(Path(path).read_bytes(), expect_kind=expect_kind)
