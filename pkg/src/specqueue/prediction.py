"""Pluggable build-duration and success estimators plus MAPE evaluation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence, Union

from specqueue.core import Change

if TYPE_CHECKING:
    from specqueue.forest import BuildNode

_MIN_MEAN_MINUTES = 0.01


@dataclass(frozen=True)
class DurationEstimate:
    """Normal build-duration model in minutes: N(mean, variance).

    A mean of zero is allowed so that an already-finished build can
    contribute "no remaining time" to a combined estimate; estimators
    themselves never return a mean below 0.01 minutes.
    """

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if self.mean < 0:
            raise ValueError(f"mean must be >= 0, got {self.mean}")
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


@dataclass(frozen=True)
class PredictionFeatures:
    """Inputs available to a duration predictor for one build node."""

    targets_changed: int = 0
    targets_added: int = 0
    targets_removed: int = 0
    conflicts_count: int = 0
    speculation_height: int = 0
    added_lines: int = 0
    removed_lines: int = 0
    changeset_count: int = 0
    commits_count: int = 0
    developer: str = ""

    def __post_init__(self) -> None:
        for name in (
            "targets_changed",
            "targets_added",
            "targets_removed",
            "conflicts_count",
            "speculation_height",
            "added_lines",
            "removed_lines",
            "changeset_count",
            "commits_count",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class OracleWithNoise:
    """Perturbs a known true duration by a fixed bias plus seeded noise.

    The noise fraction is drawn deterministically from (seed, features,
    truth) and bounded by relative_spread, so prediction error can be
    swept as an experiment variable while runs stay reproducible.
    """

    relative_bias: float = 0.0
    relative_spread: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.relative_spread < 0:
            raise ValueError("relative_spread must be >= 0")


@dataclass(frozen=True)
class TablePredictor:
    """Fixed per-change estimates looked up by change label."""

    entries: Mapping[str, DurationEstimate] = field(default_factory=dict)
    default: DurationEstimate | None = None


@dataclass(frozen=True)
class ConstantPredictor:
    mean: float = 25.0
    variance: float = 25.0

    def __post_init__(self) -> None:
        if self.mean < _MIN_MEAN_MINUTES:
            raise ValueError(f"mean must be >= {_MIN_MEAN_MINUTES}")
        if self.variance < 0:
            raise ValueError("variance must be >= 0")


PredictorSpec = Union[OracleWithNoise, TablePredictor, ConstantPredictor]


def _noise_fraction(
    seed: int, features: PredictionFeatures, truth: DurationEstimate
) -> float:
    """Deterministic value in [0, 1) keyed on the full prediction input."""
    key = "|".join(
        (
            str(seed),
            str(features.targets_changed),
            str(features.targets_added),
            str(features.targets_removed),
            str(features.conflicts_count),
            str(features.speculation_height),
            str(features.added_lines),
            str(features.removed_lines),
            str(features.changeset_count),
            str(features.commits_count),
            features.developer,
            repr(truth.mean),
            repr(truth.variance),
        )
    )
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


def predict_duration(
    spec: PredictorSpec,
    features: PredictionFeatures,
    truth: DurationEstimate | None = None,
    change_label: str | None = None,
) -> DurationEstimate:
    """Estimate a build's duration distribution under the given predictor.

    OracleWithNoise requires ``truth``; TablePredictor requires a
    ``change_label`` present in its table (or a default entry).
    """
    if isinstance(spec, ConstantPredictor):
        return DurationEstimate(spec.mean, spec.variance)
    if isinstance(spec, TablePredictor):
        if change_label is not None and change_label in spec.entries:
            return spec.entries[change_label]
        if spec.default is not None:
            return spec.default
        raise KeyError(f"no duration entry for change {change_label!r}")
    if isinstance(spec, OracleWithNoise):
        if truth is None:
            raise ValueError("OracleWithNoise requires the true duration")
        eta = 0.0
        if spec.relative_spread > 0:
            u = _noise_fraction(spec.seed, features, truth)
            eta = (2.0 * u - 1.0) * spec.relative_spread
        scale = 1.0 + spec.relative_bias + eta
        mean = max(_MIN_MEAN_MINUTES, truth.mean * scale)
        variance = truth.variance * scale * scale
        return DurationEstimate(mean, variance)
    raise TypeError(f"unknown predictor spec: {spec!r}")


def predict_success(change: Change, node: "BuildNode | None" = None) -> float:
    """Probability the change's build passes on any base.

    The default estimator returns the change's static prior; the node is
    accepted so a model-backed estimator can condition on it.
    """
    return change.success_prior


def mape(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent."""
    if len(predicted) != len(actual):
        raise ValueError(
            f"length mismatch: {len(predicted)} predictions vs {len(actual)} actuals"
        )
    if not actual:
        raise ValueError("mape requires at least one observation")
    total = 0.0
    for p, a in zip(predicted, actual):
        if a <= 0:
            raise ValueError(f"actual values must be > 0, got {a}")
        total += abs(p - a) / a
    return total / len(actual) * 100.0
