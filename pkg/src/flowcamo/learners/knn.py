"""k-nearest-neighbors on standardized features; scores are vote fractions."""
from __future__ import annotations

import numpy as np

from ..core import Dataset, ValidationError
from .base import ClassifierModel, Scaler, check_trainable


class KnnClassifier(ClassifierModel):
    kind = "knn"

    def __init__(self, schema, class_labels, scaler, train_X, train_y, k):
        super().__init__(schema, class_labels)
        self.scaler = scaler
        self.train_X = train_X
        self.train_y = train_y
        self.k = k

    @classmethod
    def fit(cls, train: Dataset, k: int = 5, seed: int = 0) -> "KnnClassifier":
        check_trainable(train)
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if k > len(train):
            raise ValidationError(f"k={k} exceeds training size {len(train)}")
        scaler = Scaler.fit(train.X)
        return cls(train.schema, train.class_labels, scaler,
                   scaler.transform(train.X), train.y.copy(), int(k))

    def predict_scores(self, X) -> np.ndarray:
        X = self._check(X)
        Xs = self.scaler.transform(X)
        n = Xs.shape[0]
        scores = np.empty((n, self.n_classes))
        # Chunked distance matrix keeps memory bounded on large probes.
        chunk = max(1, int(2_000_000 // max(1, self.train_X.shape[0])))
        tr_sq = np.einsum("ij,ij->i", self.train_X, self.train_X)
        for start in range(0, n, chunk):
            Q = Xs[start : start + chunk]
            d2 = (
                np.einsum("ij,ij->i", Q, Q)[:, None]
                - 2.0 * Q @ self.train_X.T
                + tr_sq[None, :]
            )
            # Stable sort makes distance ties deterministic (train order).
            nn = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            votes = self.train_y[nn]
            for j in range(Q.shape[0]):
                scores[start + j] = np.bincount(
                    votes[j], minlength=self.n_classes
                ) / self.k
        return scores
