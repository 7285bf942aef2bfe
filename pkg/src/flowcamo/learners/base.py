"""Common classifier surface and the kind-dispatching ``fit``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..core import (
    Dataset,
    DegenerateTrainingError,
    DeviceClass,
    FeatureSchema,
    ValidationError,
    validate_matrix,
)

KINDS = ("knn", "decision_tree", "random_forest", "svm", "neural_net")


@dataclass(frozen=True)
class Scaler:
    """Per-feature standardization fitted on training data."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


class ClassifierModel:
    """Trained multi-class model; immutable after fit.

    Subclasses implement ``predict_scores``; ``predict`` is always the
    score argmax, with ties broken toward the lowest class id.
    """

    kind: str = "abstract"

    def __init__(self, schema: FeatureSchema, class_labels: tuple):
        self.schema = schema
        self.class_labels = tuple(class_labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def _check(self, X) -> np.ndarray:
        return validate_matrix(self.schema, X, f"{self.kind} input")

    def predict_scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_ids(self, X) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class id.
        return np.argmax(self.predict_scores(X), axis=1)

    def predict(self, x) -> DeviceClass:
        cid = int(self.predict_ids(np.atleast_2d(np.asarray(x, dtype=float)))[0])
        return DeviceClass(cid, self.class_labels[cid])


def check_trainable(train: Dataset) -> None:
    if len(train) == 0:
        raise ValidationError("training dataset is empty")
    if np.unique(train.y).size < 2:
        raise DegenerateTrainingError("training data contains a single class")


def fit(
    kind: str,
    train: Dataset,
    hyperparams: Optional[Dict] = None,
    seed: int = 0,
) -> ClassifierModel:
    """Train one of the five classifier families; deterministic per seed."""
    from .knn import KnnClassifier
    from .svm import LinearSvmClassifier
    from .trees import DecisionTreeClassifier, RandomForestClassifier

    from .mlp_classifier import MlpClassifier

    check_trainable(train)
    hp = dict(hyperparams or {})
    if kind == "knn":
        return KnnClassifier.fit(train, seed=seed, **hp)
    if kind == "decision_tree":
        return DecisionTreeClassifier.fit(train, seed=seed, **hp)
    if kind == "random_forest":
        return RandomForestClassifier.fit(train, seed=seed, **hp)
    if kind == "svm":
        return LinearSvmClassifier.fit(train, seed=seed, **hp)
    if kind == "neural_net":
        return MlpClassifier.fit(train, seed=seed, **hp)
    raise ValidationError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")
