"""Traffic-feature generator: perturbs mutable features to defeat a classifier.

The generator is residual: h' = h + mask * amp * tanh(net([h, s])), with
the final layer zero-initialized so training starts at the identity map.
Immutable coordinates are restored bit-exactly after the network, and all
coordinates are clamped into schema range, so functionality preservation
holds unconditionally. Training happens against a frozen substitute; the
true victim is only touched at evaluation time (transferability).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from .blackbox import Oracle
from .core import (
    ConfusionCounts,
    ContractViolationError,
    Dataset,
    DeviceClass,
    FeatureSchema,
    NumericError,
    ValidationError,
    identification_rate,
    spoofing_rate,
    validate_matrix,
)
from .learners import ClassifierModel, Net, bce_loss_and_dlogits, one_hot
from .substitute import SubstituteModel


@dataclass(frozen=True)
class MultiplierFactor:
    """Per-feature noise scale: zero on immutable features, U[0, 0.1] elsewhere."""

    r: np.ndarray


@dataclass(frozen=True)
class AttackMode:
    mode: str  # "misidentify" | "spoof"
    target: Optional[DeviceClass] = None

    def __post_init__(self):
        if self.mode not in ("misidentify", "spoof"):
            raise ValidationError(f"unknown attack mode {self.mode!r}")
        if self.mode == "spoof" and self.target is None:
            raise ValidationError("spoof mode needs a target class")


def misidentify() -> AttackMode:
    return AttackMode("misidentify")


def spoof(target: DeviceClass) -> AttackMode:
    return AttackMode("spoof", target)


def sample_multipliers(schema: FeatureSchema, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, K) multiplier draws respecting the mutability mask."""
    R = rng.uniform(0.0, 0.1, size=(n, len(schema)))
    R[:, ~schema.mutable_mask] = 0.0
    return R


def make_noise(h, schema: FeatureSchema, seed: int):
    """One multiplier draw and the perturbation s = r * h."""
    h = validate_matrix(schema, h, "noise input")[0]
    rng = np.random.default_rng(seed)
    r = sample_multipliers(schema, 1, rng)[0]
    return MultiplierFactor(r), r * h


class Generator:
    """Manipulative network over a feature schema; residual and range-safe."""

    def __init__(
        self,
        schema: FeatureSchema,
        mu: np.ndarray,
        sd: np.ndarray,
        hidden: Sequence[int] = (64, 64),
        delta_scale: float = 6.0,
        seed: int = 0,
    ):
        k = len(schema)
        self.schema = schema
        self.mu = np.asarray(mu, dtype=float)
        self.sd = np.where(np.asarray(sd, dtype=float) > 0, sd, 1.0)
        self.net = Net([2 * k, *hidden, k], seed=seed, zero_init_last=True)
        # Perturbation amplitude in units of the reference spread, not the
        # schema range: wide-range features would otherwise dominate the
        # gradient into the network and saturate the tanh irrecoverably.
        self.amp = delta_scale * self.sd * schema.mutable_mask
        self.trained = False
        self.training_curve: List[float] = []

    def _inputs(self, H: np.ndarray, S: np.ndarray) -> np.ndarray:
        return np.hstack([(H - self.mu) / self.sd, S / self.sd])

    def manipulate_batch(self, H: np.ndarray, S: np.ndarray, want_grad_cache: bool = False):
        H = np.asarray(H, dtype=float)
        S = np.asarray(S, dtype=float)
        if S.shape != H.shape:
            raise ValidationError("noise must match the feature matrix shape")
        Z = self._inputs(H, S)
        U, cache = self.net.forward_logits(Z, want_cache=True)
        T = np.tanh(U)
        raw = H + self.amp * T
        lo, hi = self.schema.lows, self.schema.highs
        Hp = np.clip(raw, lo, hi)
        imm = ~self.schema.mutable_mask
        Hp[:, imm] = H[:, imm]  # bit-exact functionality projection
        if not np.isfinite(Hp).all():
            raise NumericError("non-finite manipulated output")
        if want_grad_cache:
            at_lo = raw <= lo
            at_hi = raw >= hi
            return Hp, (cache, T, at_lo, at_hi)
        return Hp

    def backward_to_params(self, grad_cache, dHp: np.ndarray):
        """Parameter gradients from d(loss)/d(h').

        Clipped coordinates pass gradient only when the descent direction
        points back inside the valid range; outward pushes are blocked.
        Without the inward pass-through a coordinate that saturates at a
        range boundary would stop receiving any signal and could never
        recover.
        """
        cache, T, at_lo, at_hi = grad_cache
        blocked = (at_lo & (dHp >= 0)) | (at_hi & (dHp <= 0))
        dU = self.amp * (1.0 - T ** 2) * np.where(blocked, 0.0, dHp)
        dWs, dbs, _ = self.net.backward(cache, dU)
        return dWs, dbs


def manipulate(g: Generator, h, s) -> np.ndarray:
    """Single-vector manipulation; deterministic given (h, s)."""
    h = validate_matrix(g.schema, h, "manipulate input")[0]
    s = np.asarray(s, dtype=float)
    return g.manipulate_batch(h[None, :], s[None, :])[0]


def build_generator(
    schema: FeatureSchema,
    reference_X: np.ndarray,
    hidden: Sequence[int] = (64, 64),
    delta_scale: float = 6.0,
    seed: int = 0,
) -> Generator:
    """Generator with input normalization fitted to reference traffic."""
    X = np.asarray(reference_X, dtype=float)
    return Generator(schema, X.mean(axis=0), X.std(axis=0), hidden, delta_scale, seed)


def save_generator(g: Generator, path: str) -> None:
    from .learners.io import atomic_savez, net_to_arrays, schema_to_json

    atomic_savez(
        path,
        format_version=np.asarray(1),
        schema_json=np.asarray(schema_to_json(g.schema)),
        mu=g.mu,
        sd=g.sd,
        amp=g.amp,
        trained=np.asarray(int(g.trained)),
        training_curve=np.asarray(g.training_curve, dtype=float),
        **net_to_arrays(g.net, "net_"),
    )


def load_generator(path: str) -> Generator:
    from .learners.io import net_from_arrays, schema_from_json

    with np.load(path, allow_pickle=False) as data:
        schema = schema_from_json(str(data["schema_json"]))
        g = Generator(schema, np.array(data["mu"]), np.array(data["sd"]))
        g.net = net_from_arrays(data, "net_")
        g.amp = np.array(data["amp"])
        g.trained = bool(int(data["trained"]))
        g.training_curve = [float(v) for v in data["training_curve"]]
        return g


def _success_metric(
    g: Generator, sub: SubstituteModel, X: np.ndarray, mode: AttackMode,
    orig_labels: np.ndarray, rng: np.random.Generator,
) -> float:
    S = sample_multipliers(g.schema, X.shape[0], rng) * X
    pred = sub.predict_ids_pool(g.manipulate_batch(X, S))
    if mode.mode == "misidentify":
        return float(np.mean(pred != orig_labels))
    return float(np.mean(pred == mode.target.id))


def train_generator(
    g: Generator,
    sub: SubstituteModel,
    train: Dataset,
    mode: AttackMode,
    epochs: int,
    seed: int = 0,
    lr: float = 0.01,
    batch_size: int = 128,
    lr_decay: float = 1.0,
    bce_weight: float = 1.0,
    gate_success: bool = False,
    anchor_X: Optional[np.ndarray] = None,
    anchor_weight: float = 0.0,
    plateau_delta: float = 1e-4,
    plateau_window: int = 5,
    plateau_min_epochs: int = 20,
) -> Generator:
    """Gradient-train the generator against a frozen substitute.

    Misidentify mode ascends the substitute's cross-entropy against its
    own clean-traffic labels; spoof mode descends cross-entropy toward
    the chosen class. Multipliers are re-sampled fresh every epoch.

    Spoof mode supports two stabilisers. ``anchor_X`` with a positive
    ``anchor_weight`` adds a quadratic pull of the mutable features
    toward the centroid of the rows of ``anchor_X`` that the substitute
    labels as the target class, weighted per feature by the inverse
    squared reference spread; this keeps the output on the traffic
    manifold, where substitute agreement with the victim is high. With
    ``gate_success`` the cross-entropy gradient is zeroed for rows the
    substitute already assigns to the target, so late training only
    tightens the stragglers. ``lr`` is multiplied by ``lr_decay`` after
    each epoch; plain constant-step SGD oscillates around the anchor
    minimum instead of settling into it.
    """
    if not getattr(sub, "frozen", False):
        raise ContractViolationError("substitute must be trained and frozen")
    if epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {epochs}")
    if tuple(g.schema.names) != tuple(train.schema.names):
        raise ValidationError("generator and training data schemas differ")
    if mode.mode == "spoof" and not 0 <= mode.target.id < sub.n_classes:
        raise ValidationError("spoof target id outside the substitute's classes")

    X = train.X
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    eval_rng = np.random.default_rng(seed + 1)
    orig_labels = sub.predict_ids_pool(X)  # frozen clean labels
    anchor = None
    if mode.mode == "spoof":
        targets_row = one_hot(np.array([mode.target.id]), sub.n_classes)[0]
        if anchor_X is not None and anchor_weight > 0.0:
            rows = anchor_X[sub.predict_ids_pool(anchor_X) == mode.target.id]
            if rows.shape[0] == 0:
                raise ValidationError(
                    "anchor_X has no rows the substitute assigns to the spoof target"
                )
            anchor = rows.mean(axis=0)
            anchor_scale2 = g.sd**2
            mut = g.schema.mutable_mask

    sub_cols = np.asarray(sub.subset, dtype=int)
    g.training_curve = [
        _success_metric(g, sub, X, mode, orig_labels, eval_rng)
    ]
    for _epoch in range(epochs):
        S = sample_multipliers(g.schema, n, rng) * X
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            Hp, grad_cache = g.manipulate_batch(X[idx], S[idx], want_grad_cache=True)
            Xs = sub.scaler.transform(Hp[:, sub_cols])
            z, sub_cache = sub.net.forward_logits(Xs, want_cache=True)
            if mode.mode == "misidentify":
                T = one_hot(orig_labels[idx], sub.n_classes)
                _, dz = bce_loss_and_dlogits(z, T)
                dz = -dz  # ascend the loss against the frozen labels
            else:
                T = np.tile(targets_row, (idx.size, 1))
                _, dz = bce_loss_and_dlogits(z, T)
                if gate_success:
                    dz[np.argmax(z, axis=1) == mode.target.id] = 0.0
            _, _, dXs = sub.net.backward(sub_cache, dz)
            dHp = np.zeros_like(Hp)
            dHp[:, sub_cols] = bce_weight * dXs / sub.scaler.scale
            if anchor is not None:
                dHp += anchor_weight * 2.0 * (Hp - anchor) * mut / anchor_scale2 / idx.size
            dWs, dbs = g.backward_to_params(grad_cache, dHp)
            g.net.sgd_step(dWs, dbs, lr)
        lr *= lr_decay
        g.training_curve.append(
            _success_metric(g, sub, X, mode, orig_labels, eval_rng)
        )
        recent = g.training_curve[-plateau_window:]
        if (
            len(g.training_curve) > plateau_min_epochs
            and len(recent) == plateau_window
            and max(recent) - min(recent) < plateau_delta
        ):
            break
    g.trained = True
    return g


@dataclass(frozen=True)
class AttackReport:
    mode: str
    clean_rate: float
    attacked_rate: float
    n_rows: int

    @property
    def success_rate(self) -> float:
        """Evasion rate for misidentify; the attacked rate itself for spoof."""
        if self.mode == "misidentify":
            return 1.0 - self.attacked_rate
        return self.attacked_rate


def _victim_predict(victim: Union[ClassifierModel, Oracle], g: Generator, X: np.ndarray):
    if isinstance(victim, Oracle):
        return victim.collect(X).y
    cols = g.schema.projection_onto(victim.schema)
    return victim.predict_ids(X[:, cols])


def evaluate_attack(
    g: Generator,
    victim: Union[ClassifierModel, Oracle],
    test: Dataset,
    mode: AttackMode,
    seed: int = 0,
) -> AttackReport:
    """Measure the attack on the true victim with fresh per-row noise."""
    rng = np.random.default_rng(seed)
    X = test.X
    Hp = g.manipulate_batch(X, sample_multipliers(g.schema, X.shape[0], rng) * X)
    clean_pred = _victim_predict(victim, g, X)
    atk_pred = _victim_predict(victim, g, Hp)
    n = test.n_classes
    clean = identification_rate(ConfusionCounts.from_predictions(test.y, clean_pred, n))
    if mode.mode == "misidentify":
        attacked = identification_rate(ConfusionCounts.from_predictions(test.y, atk_pred, n))
    else:
        attacked = spoofing_rate(atk_pred, mode.target)
    return AttackReport(mode.mode, clean, attacked, X.shape[0])
