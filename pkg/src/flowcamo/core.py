"""Shared domain types and the two evaluation metrics.

Everything here is immutable after construction and safe to share
read-only across workers; the metric functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np


class ValidationError(ValueError):
    """Input violates a schema or an operation precondition."""


class EvaluationError(ValueError):
    """A metric was asked to evaluate an empty result set."""


class StratificationError(ValueError):
    """A class has too few rows to appear on both sides of a split."""


class DegenerateTrainingError(ValueError):
    """Training data lacks the variety needed to fit a classifier."""


class NumericError(ArithmeticError):
    """A numeric routine hit non-finite values."""


class ContractViolationError(RuntimeError):
    """A caller broke an interface contract (e.g. passed an unfrozen model)."""


@dataclass(frozen=True)
class Feature:
    """One named flow/service feature with its valid range and mutability."""

    name: str
    unit: str
    lo: float
    hi: float
    mutable: bool

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi):
            raise ValidationError(f"feature {self.name}: bounds must be finite")
        if self.lo > self.hi:
            raise ValidationError(f"feature {self.name}: lo {self.lo} > hi {self.hi}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list; the mutable mask is fixed per experiment."""

    features: tuple

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")
        if not self.features:
            raise ValidationError("schema is empty")
        if not any(f.mutable for f in self.features):
            raise ValidationError("at least one feature must be mutable")

    def __len__(self) -> int:
        return len(self.features)

    @cached_property
    def names(self) -> tuple:
        return tuple(f.name for f in self.features)

    @cached_property
    def lows(self) -> np.ndarray:
        a = np.array([f.lo for f in self.features], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def highs(self) -> np.ndarray:
        a = np.array([f.hi for f in self.features], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def mutable_mask(self) -> np.ndarray:
        a = np.array([f.mutable for f in self.features], dtype=bool)
        a.flags.writeable = False
        return a

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def subset(self, indices: Sequence[int]) -> "FeatureSchema":
        return FeatureSchema(tuple(self.features[i] for i in indices))

    def projection_onto(self, other: "FeatureSchema") -> np.ndarray:
        """Column indices in this schema for each feature of ``other``.

        Raises ValidationError if ``other`` is not a (name-wise) subset.
        """
        return np.array([self.index(n) for n in other.names], dtype=int)


@dataclass(frozen=True)
class DeviceClass:
    id: int
    label: str

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError(f"class id must be non-negative, got {self.id}")


def validate_matrix(schema: FeatureSchema, X: np.ndarray, what: str = "X") -> np.ndarray:
    """Check shape and per-feature ranges; returns X as a float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(schema):
        raise ValidationError(
            f"{what}: expected {len(schema)} features, got {X.shape[1]}"
        )
    if not np.isfinite(X).all():
        raise ValidationError(f"{what}: non-finite values")
    lo_bad = X < schema.lows - 1e-9
    hi_bad = X > schema.highs + 1e-9
    if lo_bad.any() or hi_bad.any():
        r, c = np.argwhere(lo_bad | hi_bad)[0]
        raise ValidationError(
            f"{what}: value {X[r, c]} out of range for feature "
            f"{schema.names[c]!r} at row {r}"
        )
    return X


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer class ids aligned to ``class_labels``."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    class_labels: tuple
    split_seed: int = 0

    def __post_init__(self):
        X = validate_matrix(self.schema, self.X, "dataset")
        y = np.asarray(self.y, dtype=int)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValidationError("y must be 1-D and aligned with X")
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        if len(y) and (y.min() < 0 or y.max() >= len(self.class_labels)):
            raise ValidationError("class id out of range")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def device_class(self, cid: int) -> DeviceClass:
        return DeviceClass(int(cid), self.class_labels[int(cid)])

    def take(self, idx: np.ndarray, split_seed: Union[int, None] = None) -> "Dataset":
        return Dataset(
            self.schema,
            self.X[idx],
            self.y[idx],
            self.class_labels,
            self.split_seed if split_seed is None else split_seed,
        )

    def project(self, schema: FeatureSchema) -> "Dataset":
        """Restrict columns to another (subset) schema, matched by name."""
        cols = self.schema.projection_onto(schema)
        return Dataset(schema, self.X[:, cols], self.y, self.class_labels, self.split_seed)


@dataclass(frozen=True)
class ConfusionCounts:
    """Square count matrix; rows are true classes, columns predictions."""

    per_class: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.per_class, dtype=np.int64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("per_class must be a square matrix")
        if (m < 0).any():
            raise ValidationError("counts must be non-negative")
        m.flags.writeable = False
        object.__setattr__(self, "per_class", m)

    @property
    def correct(self) -> int:
        return int(np.trace(self.per_class))

    @property
    def total(self) -> int:
        return int(self.per_class.sum())

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int) -> "ConfusionCounts":
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        m = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(m, (y_true, y_pred), 1)
        return cls(m)


def identification_rate(counts: ConfusionCounts) -> float:
    """Fraction of predictions landing on the true class."""
    if counts.total == 0:
        raise EvaluationError("no predictions to evaluate")
    return counts.correct / counts.total


def spoofing_rate(predictions, target) -> float:
    """Fraction of predictions equal to the attacker's chosen class."""
    tid = target.id if isinstance(target, DeviceClass) else int(target)
    ids = np.array(
        [p.id if isinstance(p, DeviceClass) else int(p) for p in predictions],
        dtype=int,
    )
    if ids.size == 0:
        raise EvaluationError("no predictions to evaluate")
    return float(np.mean(ids == tid))


def split_dataset(ds: Dataset, train_fraction: float, seed: int):
    """Stratified-by-class split; deterministic for a fixed seed.

    Every class keeps at least one row on each side, so any class with
    fewer than 2 rows raises StratificationError.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0,1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(ds.y):
        rows = np.flatnonzero(ds.y == c)
        if rows.size < 2:
            raise StratificationError(
                f"class {ds.class_labels[c]!r} has {rows.size} row(s); need >= 2"
            )
        rows = rng.permutation(rows)
        n_train = int(round(train_fraction * rows.size))
        n_train = min(max(n_train, 1), rows.size - 1)
        train_idx.append(rows[:n_train])
        test_idx.append(rows[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.take(train_idx, split_seed=seed), ds.take(test_idx, split_seed=seed)
