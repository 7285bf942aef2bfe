"""Substitute-model training against oracle labels and feature-pool pruning.

Feature weights come from permutation importance measured as the drop in
held-out oracle agreement; the performance-gain metric compares relative
accuracy growth against relative prediction-time growth across subset
sizes. Selection itself uses an agreement-epsilon policy (the gain value
is undefined when prediction times tie, so it is reported, not decisive).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .blackbox import EavesdropCorpus
from .core import DegenerateTrainingError, FeatureSchema, ValidationError
from .learners import Net, Scaler, one_hot, train_net


@dataclass(frozen=True)
class FeaturePool:
    """Full attacker pool with importance weights and the chosen subset."""

    schema: FeatureSchema
    weights: np.ndarray
    selected: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.schema),):
            raise ValidationError("one weight per pool feature required")
        if not 1 <= len(self.selected) <= len(self.schema):
            raise ValidationError("selected subset size out of range")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "selected", tuple(int(i) for i in self.selected))


def top_l_indices(weights: np.ndarray, L: int) -> tuple:
    """Top-L features by weight; ties broken toward the lower index."""
    weights = np.asarray(weights, dtype=float)
    if not 1 <= L <= weights.size:
        raise ValidationError(f"L must be in [1, {weights.size}], got {L}")
    order = np.argsort(-weights, kind="stable")
    return tuple(sorted(int(i) for i in order[:L]))


class SubstituteModel:
    """MLP fit to oracle labels over a subset of the attacker pool."""

    def __init__(self, pool_schema, subset, scaler, net, class_labels,
                 training_curve, holdout_idx, seed):
        self.pool_schema = pool_schema
        self.subset = tuple(subset)
        self.schema = pool_schema.subset(self.subset)
        self.scaler = scaler
        self.net = net
        self.class_labels = tuple(class_labels)
        self.training_curve = list(training_curve)
        self.holdout_idx = np.asarray(holdout_idx, dtype=int)
        self.seed = seed
        self.frozen = True

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    @property
    def agreement(self) -> float:
        """Final held-out agreement with the oracle."""
        return self.training_curve[-1]

    def predict_scores_pool(self, X_pool: np.ndarray) -> np.ndarray:
        X = np.asarray(X_pool, dtype=float)
        return self.net.scores(self.scaler.transform(X[:, self.subset]))

    def predict_ids_pool(self, X_pool: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_scores_pool(X_pool), axis=1)


def _holdout_split(y: np.ndarray, frac: float, seed: int):
    """Stratified 80/20 over oracle labels; singleton labels go to train."""
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for c in np.unique(y):
        rows = rng.permutation(np.flatnonzero(y == c))
        if rows.size < 2:
            train_idx.append(rows)
            continue
        n_train = min(max(int(round(frac * rows.size)), 1), rows.size - 1)
        train_idx.append(rows[:n_train])
        hold_idx.append(rows[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    hold_idx = np.sort(np.concatenate(hold_idx)) if hold_idx else np.array([], dtype=int)
    return train_idx, hold_idx


def train_substitute(
    corpus: EavesdropCorpus,
    subset: Optional[Sequence[int]] = None,
    epochs: int = 60,
    seed: int = 0,
    hidden: Sequence[int] = (64, 64),
    lr: float = 0.1,
    batch_size: int = 128,
    lr_decay: float = 0.97,
    train_extra: Optional[EavesdropCorpus] = None,
) -> SubstituteModel:
    """Fit an MLP to the eavesdropped labels; records the per-epoch curve.

    ``train_extra`` rows (e.g. labeled uniform probes that teach the
    substitute the oracle's behaviour away from the traffic manifold) are
    used for training only; the agreement curve and holdout stay on the
    eavesdropped corpus so fidelity is measured on traffic.
    """
    if epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {epochs}")
    if np.unique(corpus.y).size < 2:
        raise DegenerateTrainingError("corpus labels cover a single class")
    subset = tuple(range(len(corpus.schema))) if subset is None else tuple(subset)
    train_idx, hold_idx = _holdout_split(corpus.y, 0.8, seed)
    Xs = corpus.X[:, subset]
    X_tr, y_tr = Xs[train_idx], corpus.y[train_idx]
    if train_extra is not None:
        if train_extra.schema.names != corpus.schema.names:
            raise ValidationError("train_extra schema differs from the corpus")
        X_tr = np.vstack([X_tr, train_extra.X[:, subset]])
        y_tr = np.concatenate([y_tr, train_extra.y])
    scaler = Scaler.fit(X_tr)
    Xn = scaler.transform(Xs)
    net = Net([len(subset), *hidden, corpus.n_classes], seed=seed)
    y_hold = corpus.y[hold_idx]

    def agreement(_epoch: int) -> float:
        pred = np.argmax(net.scores(Xn[hold_idx]), axis=1)
        return float(np.mean(pred == y_hold))

    log = train_net(
        net,
        scaler.transform(X_tr),
        one_hot(y_tr, corpus.n_classes),
        epochs=epochs,
        lr=lr,
        batch_size=batch_size,
        seed=seed + 1,
        lr_decay=lr_decay,
        eval_fn=agreement,
    )
    return SubstituteModel(
        corpus.schema, subset, scaler, net, corpus.class_labels,
        log.eval_curve, hold_idx, seed,
    )


def feature_weights(
    corpus: EavesdropCorpus,
    base: SubstituteModel,
    seed: int = 0,
    repeats: int = 10,
) -> np.ndarray:
    """Permutation importance of every pool feature, floored at zero."""
    if len(base.subset) != len(corpus.schema):
        raise ValidationError("base substitute must be trained on the full pool")
    hold = base.holdout_idx
    X = corpus.X[hold]
    y = corpus.y[hold]
    base_agree = float(np.mean(base.predict_ids_pool(X) == y))
    rng = np.random.default_rng(seed)
    K = len(corpus.schema)
    weights = np.zeros(K)
    for i in range(K):
        drops = np.empty(repeats)
        for r in range(repeats):
            Xp = X.copy()
            Xp[:, i] = Xp[rng.permutation(X.shape[0]), i]
            drops[r] = base_agree - float(np.mean(base.predict_ids_pool(Xp) == y))
        weights[i] = max(0.0, float(drops.mean()))
    return weights


@dataclass(frozen=True)
class PerformanceGainPoint:
    L: int
    agreement: float
    overhead_s: float
    gain: float  # nan when undefined
    undefined: bool


def performance_gain(r_c: float, r_p: float, c_c: float, c_p: float):
    """Relative accuracy growth over relative overhead growth.

    Undefined (returns nan with a flag) when the overheads tie or the
    current accuracy is zero; never divides by zero.
    """
    if c_c == c_p or r_c == 0.0:
        return float("nan"), True
    rel_r = (r_c - r_p) / r_c
    rel_c = (c_c - c_p) / c_c
    return (rel_r - rel_c) / rel_c, False


def _median_predict_time(model: SubstituteModel, probe: np.ndarray, runs: int = 5) -> float:
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        model.predict_ids_pool(probe)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def performance_gain_scan(
    corpus: EavesdropCorpus,
    weights: np.ndarray,
    L_values: Sequence[int],
    epochs: int = 30,
    seed: int = 0,
    probe_size: int = 1000,
    timing_runs: int = 5,
    hidden: Sequence[int] = (64, 64),
    train_extra: Optional[EavesdropCorpus] = None,
) -> List[PerformanceGainPoint]:
    """Retrain per subset size; timing runs are serialized by design."""
    L_values = list(L_values)
    if not L_values:
        raise ValidationError("L_values is empty")
    if any(b < a for a, b in zip(L_values, L_values[1:])):
        raise ValidationError("L_values must be sorted ascending")
    K = len(corpus.schema)
    if any(not 1 <= L <= K for L in L_values):
        raise ValidationError(f"every L must be in [1, {K}]")
    rng = np.random.default_rng(seed)
    probe = corpus.X[rng.integers(0, len(corpus), size=probe_size)]
    points: List[PerformanceGainPoint] = []
    prev: Optional[PerformanceGainPoint] = None
    for L in L_values:
        sub = train_substitute(
            corpus, top_l_indices(weights, L), epochs=epochs, seed=seed,
            hidden=hidden, train_extra=train_extra,
        )
        overhead = _median_predict_time(sub, probe, runs=timing_runs)
        if prev is None:
            gain, undefined = float("nan"), True
        else:
            gain, undefined = performance_gain(
                sub.agreement, prev.agreement, overhead, prev.overhead_s
            )
        prev = PerformanceGainPoint(L, sub.agreement, overhead, gain, undefined)
        points.append(prev)
    return points


def select_subset(
    scan: List[PerformanceGainPoint],
    full_agreement: Optional[float] = None,
    eps: float = 0.02,
) -> int:
    """Smallest L whose agreement is within eps of the full-pool agreement."""
    if not scan:
        raise ValidationError("empty scan")
    if full_agreement is None:
        full_agreement = max(p.agreement for p in scan)
    for p in scan:
        if p.agreement >= full_agreement - eps:
            return p.L
    best = max(range(len(scan)), key=lambda i: (scan[i].agreement, -scan[i].L))
    return scan[best].L


def save_substitute(sub: SubstituteModel, path: str) -> None:
    from .learners.io import atomic_savez, net_to_arrays, schema_to_json

    atomic_savez(
        path,
        format_version=np.asarray(1),
        pool_schema_json=np.asarray(schema_to_json(sub.pool_schema)),
        subset=np.asarray(sub.subset, dtype=int),
        scaler_mean=sub.scaler.mean,
        scaler_scale=sub.scaler.scale,
        class_labels=np.asarray(sub.class_labels),
        training_curve=np.asarray(sub.training_curve, dtype=float),
        holdout_idx=sub.holdout_idx,
        seed=np.asarray(sub.seed),
        **net_to_arrays(sub.net, "net_"),
    )


def load_substitute(path: str) -> SubstituteModel:
    from .learners.io import net_from_arrays, schema_from_json

    with np.load(path, allow_pickle=False) as data:
        pool_schema = schema_from_json(str(data["pool_schema_json"]))
        return SubstituteModel(
            pool_schema,
            tuple(int(i) for i in data["subset"]),
            Scaler(np.array(data["scaler_mean"]), np.array(data["scaler_scale"])),
            net_from_arrays(data, "net_"),
            tuple(str(s) for s in data["class_labels"]),
            [float(v) for v in data["training_curve"]],
            np.array(data["holdout_idx"]),
            int(data["seed"]),
        )


def scan_to_csv_rows(scan: List[PerformanceGainPoint]) -> List[list]:
    header = ["L", "agreement", "overhead_s", "gain", "undefined_flag"]
    rows = [
        [p.L, p.agreement, p.overhead_s, "" if p.undefined else p.gain, int(p.undefined)]
        for p in scan
    ]
    return [header] + rows
