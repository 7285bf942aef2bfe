"""The neural-net classifier kind: standardized inputs into a sigmoid-head Net."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import Dataset, ValidationError
from .base import ClassifierModel, Scaler, check_trainable
from .mlp import Net, one_hot, train_net


class MlpClassifier(ClassifierModel):
    kind = "neural_net"

    def __init__(self, schema, class_labels, scaler, net):
        super().__init__(schema, class_labels)
        self.scaler = scaler
        self.net = net

    @classmethod
    def fit(
        cls,
        train: Dataset,
        hidden: Sequence[int] = (64, 64),
        epochs: int = 40,
        lr: float = 0.1,
        batch_size: int = 128,
        lr_decay: float = 0.97,
        seed: int = 0,
    ) -> "MlpClassifier":
        check_trainable(train)
        if not hidden:
            raise ValidationError("need at least one hidden layer")
        scaler = Scaler.fit(train.X)
        net = Net([len(train.schema), *hidden, train.n_classes], seed=seed)
        train_net(
            net,
            scaler.transform(train.X),
            one_hot(train.y, train.n_classes),
            epochs=epochs,
            lr=lr,
            batch_size=batch_size,
            seed=seed + 1,
            lr_decay=lr_decay,
        )
        return cls(train.schema, train.class_labels, scaler, net)

    def predict_scores(self, X) -> np.ndarray:
        X = self._check(X)
        return self.net.scores(self.scaler.transform(X))
