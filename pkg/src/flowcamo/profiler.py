"""Radio-signature device profiling: synthesis, multi-stage classifier, defense.

Signatures come from a parsimonious channel model (log-distance path
loss, one static per-device reflection, Gaussian measurement noise) so
they are device- and location-specific but entirely independent of the
traffic features the generator can touch. Identification is a shallow
decision tree over the four profiled features routing into per-group
neural scorers over profiled features plus simulated CSI magnitudes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import DeviceClass, ValidationError
from .learners import Net, Scaler, build_tree, one_hot, train_net, tree_apply

CARRIER_HZ = 2.4e9
WAVELENGTH_M = 2.998e8 / CARRIER_HZ
PATH_LOSS_REF_DB = 40.0  # at 1 m
PATH_LOSS_EXPONENT = 2.5
N_SUBCARRIERS = 30
SUBCARRIER_SPACING_HZ = 312.5e3


@dataclass(frozen=True)
class HardwareIdentity:
    """Static manufacturing/placement identity; drawn once per device."""

    device_id: int
    cfo_ppm: float
    iq_gain_imbalance: float
    iq_phase_skew_rad: float
    location: Tuple[float, float]  # meters; receiver array at origin, broadside +y


@dataclass(frozen=True)
class RfSignature:
    amplitude_attenuation: float  # dB, > 0
    phase_shift: float  # rad, (-pi, pi]
    frequency_offset: float  # Hz
    arrival_angle: float  # rad, (-pi/2, pi/2]
    csi: np.ndarray  # per-subcarrier channel magnitudes

    @property
    def profiled(self) -> np.ndarray:
        return np.array(
            [self.amplitude_attenuation, self.phase_shift,
             self.frequency_offset, self.arrival_angle]
        )


@dataclass(frozen=True)
class NoiseModel:
    freq_sigma_hz: float = 400.0
    angle_sigma_rad: float = 0.03
    atten_sigma_db: float = 1.0
    phase_sigma_rad: float = 0.08
    csi_snr_sigma: float = 0.08  # relative to the local path gain

    def scaled(self, factor: float) -> "NoiseModel":
        return NoiseModel(*(factor * v for v in (
            self.freq_sigma_hz, self.angle_sigma_rad, self.atten_sigma_db,
            self.phase_sigma_rad, self.csi_snr_sigma)))


DEFAULT_NOISE = NoiseModel()


def make_identities(n_devices: int, seed: int = 0) -> List[HardwareIdentity]:
    """Draw one fixed identity per device (ids double as class ids)."""
    rng = np.random.default_rng(seed)
    out = []
    for dev in range(n_devices):
        out.append(
            HardwareIdentity(
                device_id=dev,
                cfo_ppm=float(rng.uniform(-25.0, 25.0)),
                iq_gain_imbalance=float(rng.uniform(0.0, 0.1)),
                iq_phase_skew_rad=float(rng.uniform(-0.2, 0.2)),
                location=(float(rng.uniform(-15.0, 15.0)), float(rng.uniform(3.0, 30.0))),
            )
        )
    return out


def _device_multipath(device_id: int):
    """Static single-reflection parameters tied to the device, not the round."""
    rng = np.random.default_rng(np.random.SeedSequence([int(device_id), 0xD5]))
    psi = rng.uniform(0.0, 2 * np.pi)
    rho = rng.uniform(0.2, 0.4)
    tau_s = rng.uniform(20e-9, 100e-9)
    return psi, rho, tau_s


def _wrap_pi(x: float) -> float:
    return float(np.angle(np.exp(1j * x)))


def synthesize_signature(
    identity: HardwareIdentity,
    noise_seed: int,
    noise: NoiseModel = DEFAULT_NOISE,
    carrier_hz: float = CARRIER_HZ,
    path_loss_exponent: float = PATH_LOSS_EXPONENT,
) -> RfSignature:
    """One simulated observation; deterministic for a fixed (identity, seed)."""
    x, y = identity.location
    d = float(np.hypot(x, y))
    if d <= 0:
        raise ValidationError("device cannot sit on the receiver")
    rng = np.random.default_rng(np.random.SeedSequence([int(identity.device_id), int(noise_seed)]))
    psi, rho, tau_s = _device_multipath(identity.device_id)

    freq = carrier_hz * identity.cfo_ppm * 1e-6 + rng.normal(0.0, noise.freq_sigma_hz)

    angle = np.arctan2(x, y) + rng.normal(0.0, noise.angle_sigma_rad)
    angle = float(np.clip(angle, -np.pi / 2 + 1e-9, np.pi / 2))

    mp_db = 20.0 * np.log10(abs(1.0 + rho * np.exp(1j * psi)))
    mp_db *= 1.0 + identity.iq_gain_imbalance
    pl_db = PATH_LOSS_REF_DB + 10.0 * path_loss_exponent * np.log10(d)
    atten = pl_db + mp_db + rng.normal(0.0, noise.atten_sigma_db)

    phase = _wrap_pi(
        -2.0 * np.pi * d / WAVELENGTH_M
        + identity.iq_phase_skew_rad
        + rng.normal(0.0, noise.phase_sigma_rad)
    )

    gain = 10.0 ** (-pl_db / 20.0)
    k = np.arange(N_SUBCARRIERS) - N_SUBCARRIERS / 2
    ray = 1.0 + rho * np.exp(1j * (psi + 2.0 * np.pi * tau_s * k * SUBCARRIER_SPACING_HZ))
    csi = gain * np.abs(ray) * (1.0 + identity.iq_gain_imbalance)
    csi = csi + rng.normal(0.0, noise.csi_snr_sigma * gain, size=N_SUBCARRIERS)

    return RfSignature(float(atten), phase, float(freq), angle, csi)


def signature_batch(
    identities: Sequence[HardwareIdentity],
    per_device: int,
    noise_seed: int,
    noise: NoiseModel = DEFAULT_NOISE,
):
    """Stacked (profiled, csi, class_id) arrays; seeds vary per observation."""
    P, C, y = [], [], []
    for ident in identities:
        for j in range(per_device):
            sig = synthesize_signature(ident, noise_seed * 100003 + j, noise)
            P.append(sig.profiled)
            C.append(sig.csi)
            y.append(ident.device_id)
    return np.vstack(P), np.vstack(C), np.asarray(y, dtype=int)


@dataclass
class _StageTwo:
    classes: np.ndarray  # global class ids, sorted
    scaler: Optional[Scaler]
    net: Optional[Net]

    def score(self, features: np.ndarray) -> np.ndarray:
        if self.net is None:
            return np.ones((features.shape[0], 1))
        return self.net.scores(self.scaler.transform(features))


class MultiStageClassifier:
    """Stage-1 tree over profiled features routes to per-group stage-2 nets."""

    def __init__(self, tree, leaf_to_group: Dict[int, int], stages: List[_StageTwo],
                 class_labels: tuple):
        self.tree = tree
        self.leaf_to_group = dict(leaf_to_group)
        self.stages = stages
        self.class_labels = tuple(class_labels)

    @property
    def group_class_sets(self) -> List[set]:
        return [set(int(c) for c in s.classes) for s in self.stages]

    def route(self, profiled: np.ndarray) -> np.ndarray:
        leaves = tree_apply(self.tree, np.atleast_2d(profiled))
        return np.array([self.leaf_to_group[int(l)] for l in leaves], dtype=int)

    def identify_batch(self, P: np.ndarray, Csi: np.ndarray):
        P = np.atleast_2d(P)
        Csi = np.atleast_2d(Csi)
        features = np.hstack([P, Csi])
        groups = self.route(P)
        ids = np.empty(P.shape[0], dtype=int)
        scores = np.empty(P.shape[0])
        for gidx in np.unique(groups):
            rows = np.flatnonzero(groups == gidx)
            stage = self.stages[gidx]
            s = stage.score(features[rows])
            local = np.argmax(s, axis=1)
            ids[rows] = stage.classes[local]
            scores[rows] = s[np.arange(rows.size), local]
        return ids, scores

    def identify(self, sig: RfSignature):
        ids, scores = self.identify_batch(sig.profiled[None, :], sig.csi[None, :])
        return DeviceClass(int(ids[0]), self.class_labels[int(ids[0])]), float(scores[0])


def _subtree_leaves(tree, node: int) -> List[int]:
    if tree.feature[node] < 0:
        return [node]
    return _subtree_leaves(tree, tree.left[node]) + _subtree_leaves(tree, tree.right[node])


def fit_profiler(
    signatures: Sequence[Tuple[RfSignature, int]],
    seed: int = 0,
    class_labels: Optional[tuple] = None,
    stage1_depth: int = 3,
    stage2_hidden: Sequence[int] = (48,),
    stage2_epochs: int = 60,
    stage2_lr: float = 0.5,
) -> MultiStageClassifier:
    """Train the two-stage identifier; needs >= 10 signatures per class."""
    P = np.vstack([s.profiled for s, _ in signatures])
    Csi = np.vstack([s.csi for s, _ in signatures])
    y = np.asarray([int(c.id) if isinstance(c, DeviceClass) else int(c) for _, c in signatures])
    n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    if (counts < 10).any():
        bad = int(np.argmin(counts))
        raise ValidationError(f"class {bad} has {counts[bad]} signatures; need >= 10")
    if class_labels is None:
        class_labels = tuple(f"device_{i:02d}" for i in range(n_classes))

    tree = build_tree(P, y, n_classes, max_depth=stage1_depth)
    leaves = tree_apply(tree, P)

    # Parent map for the sibling-merge prune.
    parent = {}
    for node in range(tree.feature.size):
        if tree.feature[node] >= 0:
            parent[int(tree.left[node])] = node
            parent[int(tree.right[node])] = node

    # Nearest ancestor-or-self whose training subtree holds >= 2 classes.
    leaf_rows = {int(l): np.flatnonzero(leaves == l) for l in np.unique(leaves)}
    leaf_to_anchor = {}
    for leaf in leaf_rows:
        node = leaf
        while True:
            members = [l for l in _subtree_leaves(tree, node) if l in leaf_rows]
            classes = set()
            for l in members:
                classes.update(int(c) for c in np.unique(y[leaf_rows[l]]))
            if len(classes) >= 2 or node not in parent:
                break
            node = parent[node]
        leaf_to_anchor[leaf] = node

    # Anchors are consistent: a leaf's nearest qualifying ancestor is unique,
    # so mapping each leaf to its anchor partitions the leaves into groups.
    anchors = sorted(set(leaf_to_anchor.values()))
    leaf_to_group = {leaf: anchors.index(a) for leaf, a in leaf_to_anchor.items()}

    features = np.hstack([P, Csi])
    stages: List[_StageTwo] = []
    for gidx, _anchor in enumerate(anchors):
        rows = np.concatenate(
            [leaf_rows[l] for l, gg in leaf_to_group.items() if gg == gidx]
        )
        classes = np.unique(y[rows])
        if classes.size == 1:
            stages.append(_StageTwo(classes, None, None))
            continue
        local = np.searchsorted(classes, y[rows])
        scaler = Scaler.fit(features[rows])
        net = Net([features.shape[1], *stage2_hidden, classes.size], seed=seed + gidx)
        train_net(
            net,
            scaler.transform(features[rows]),
            one_hot(local, classes.size),
            epochs=stage2_epochs,
            lr=stage2_lr,
            batch_size=64,
            seed=seed + 1000 + gidx,
            lr_decay=0.97,
        )
        stages.append(_StageTwo(classes, scaler, net))
    return MultiStageClassifier(tree, leaf_to_group, stages, class_labels)


def stream_hash(P: np.ndarray, Csi: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(P).tobytes())
    h.update(np.ascontiguousarray(Csi).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class DefenseReport:
    epochs: tuple
    clean_rates: tuple
    attacked_rates: tuple
    clean_hash: str
    attacked_hash: str


def evaluate_defense(
    classifier: MultiStageClassifier,
    generator,
    identities: Sequence[HardwareIdentity],
    rounds: int = 30,
    per_device: int = 10,
    noise: NoiseModel = DEFAULT_NOISE,
    seed: int = 0,
    traffic: Optional[np.ndarray] = None,
) -> DefenseReport:
    """Identification rate per attack-training round.

    The generator manipulates traffic features each round, but signatures
    are re-synthesized from the unchanged hardware identities; the hash
    pair proves the attack has no write path into the RF stream.
    """
    epochs, clean_rates, attacked_rates = [], [], []
    clean_h = hashlib.sha256()
    atk_h = hashlib.sha256()
    rng = np.random.default_rng(seed)
    for r in range(rounds + 1):
        P, Csi, y = signature_batch(identities, per_device, noise_seed=seed + 7919 * r, noise=noise)
        ids, _ = classifier.identify_batch(P, Csi)
        rate = float(np.mean(ids == y))
        clean_h.update(stream_hash(P, Csi).encode())

        if generator is not None and traffic is not None:
            from .camouflage import sample_multipliers

            S = sample_multipliers(generator.schema, traffic.shape[0], rng) * traffic
            generator.manipulate_batch(traffic, S)  # touches traffic only
        P2, Csi2, y2 = signature_batch(identities, per_device, noise_seed=seed + 7919 * r, noise=noise)
        ids2, _ = classifier.identify_batch(P2, Csi2)
        atk_h.update(stream_hash(P2, Csi2).encode())

        epochs.append(r)
        clean_rates.append(rate)
        attacked_rates.append(float(np.mean(ids2 == y2)))
    return DefenseReport(
        tuple(epochs), tuple(clean_rates), tuple(attacked_rates),
        clean_h.hexdigest(), atk_h.hexdigest(),
    )
