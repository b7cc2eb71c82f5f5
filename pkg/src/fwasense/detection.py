"""Cooperative UAV presence detection.

Per-pair angle-delay maps are encoded by a shared 3-D conv embedder, the
embeddings of whichever pairs are available are pooled with gated
attention (softmax over the participating pairs), and a small classifier
turns the pooled feature into a presence probability. Training uses only
scene labels; a random subset of pairs participates per sample so the
model tolerates missing pairs at inference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import substream
from .scenario import PairId
from .tensornet import Tensor, ops
from .tensornet.layers import (
    Activation,
    BatchNorm,
    Conv3D,
    Dense,
    Dropout,
    Flatten,
    MaxPool3D,
    Net,
)
from .tensornet.optim import Adam, FitSchedule, bce_loss, fit_loop

MASK_OFF = -1e30  # additive logit bias for absent pairs


@dataclass
class AttentionReport:
    """Per-pair attention of one detection: raw logits and softmax weights
    for exactly the pairs that participated."""

    pair_ids: list[PairId]
    logits: np.ndarray
    weights: np.ndarray


@dataclass
class DetectionDecision:
    probability: float
    label: int  # 1 iff probability >= 0.5
    pooled: np.ndarray  # aggregated embedding, length embed_dim


@dataclass
class DetectorConfig:
    map_shape: tuple[int, int, int]  # (N_r, N_t, N_c')
    n_bs: int
    n_cpe: int
    embed_dim: int = 128
    attn_hidden: int = 64
    conv_channels: tuple[int, int, int] = (8, 16, 32)
    classifier_hidden: int = 64
    dropout: float = 0.1

    @property
    def n_pairs(self) -> int:
        return self.n_bs * self.n_cpe

    def all_pair_ids(self) -> list[PairId]:
        return [PairId.from_flat(f, self.n_cpe) for f in range(1, self.n_pairs + 1)]

    def to_meta(self) -> dict:
        return {
            "map_shape": list(self.map_shape),
            "n_bs": self.n_bs,
            "n_cpe": self.n_cpe,
            "embed_dim": self.embed_dim,
            "attn_hidden": self.attn_hidden,
            "conv_channels": list(self.conv_channels),
            "classifier_hidden": self.classifier_hidden,
            "dropout": self.dropout,
        }

    @staticmethod
    def from_meta(meta: dict) -> "DetectorConfig":
        return DetectorConfig(
            map_shape=tuple(meta["map_shape"]),
            n_bs=meta["n_bs"],
            n_cpe=meta["n_cpe"],
            embed_dim=meta["embed_dim"],
            attn_hidden=meta["attn_hidden"],
            conv_channels=tuple(meta["conv_channels"]),
            classifier_hidden=meta["classifier_hidden"],
            dropout=meta["dropout"],
        )


class PairEmbeddingNet(Net):
    """Shared per-pair encoder: three dilated Conv3D blocks (dilations
    1/2/3, BN + LeakyReLU), pooling after blocks 1 and 3, then a Dense
    projection to the embedding with a Sigmoid squash."""

    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        c1, c2, c3 = cfg.conv_channels
        self.conv1 = self.child("conv1", Conv3D(1, c1, rng, dilation=1))
        self.bn1 = self.child("bn1", BatchNorm(c1))
        self.conv2 = self.child("conv2", Conv3D(c1, c2, rng, dilation=2))
        self.bn2 = self.child("bn2", BatchNorm(c2))
        self.conv3 = self.child("conv3", Conv3D(c2, c3, rng, dilation=3))
        self.bn3 = self.child("bn3", BatchNorm(c3))
        self.pool = MaxPool3D((2, 1, 2))
        self.act = Activation("leaky_relu")
        d, h, w = cfg.map_shape
        flat = (d // 4) * h * (w // 4) * c3
        self.head = self.child("head", Dense(flat, cfg.embed_dim, rng, activation="sigmoid"))
        self.flatten = Flatten()

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        x = self.act.forward(self.bn1.forward(self.conv1.forward(x), train))
        x = self.pool.forward(x)
        x = self.act.forward(self.bn2.forward(self.conv2.forward(x), train))
        x = self.act.forward(self.bn3.forward(self.conv3.forward(x), train))
        x = self.pool.forward(x)
        return self.head.forward(self.flatten.forward(x))


class GatedAttentionPool(Net):
    """Gated attention scores: s = w^T (Tanh(V h) . Sigm(U h))."""

    def __init__(self, embed_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.v = self.child("v", Dense(embed_dim, hidden, rng, activation="tanh"))
        self.u = self.child("u", Dense(embed_dim, hidden, rng, activation="sigmoid"))
        self.w = self.child("w", Dense(hidden, 1, rng))

    def scores(self, h: Tensor) -> Tensor:
        """Logits over the last-but-one axis: (..., E) -> (..., 1)."""
        return self.w.forward(self.v.forward(h) * self.u.forward(h))


class SceneClassifier(Net):
    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        self.fc1 = self.child("fc1", Dense(cfg.embed_dim, cfg.classifier_hidden, rng, activation="relu"))
        self.drop = Dropout(cfg.dropout)
        self.fc2 = self.child("fc2", Dense(cfg.classifier_hidden, 1, rng, activation="sigmoid"))

    def forward(self, z: Tensor, train: bool = False, rng=None) -> Tensor:
        return self.fc2.forward(self.drop.forward(self.fc1.forward(z), train, rng))


class CooperativeDetector(Net):
    """Embedder + gated-attention pooling + classifier, end to end."""

    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.embedder = self.child("embedder", PairEmbeddingNet(cfg, rng))
        self.attention = self.child("attention", GatedAttentionPool(cfg.embed_dim, cfg.attn_hidden, rng))
        self.classifier = self.child("classifier", SceneClassifier(cfg, rng))

    def embed(self, maps: np.ndarray, train: bool = False, rng=None) -> Tensor:
        """Maps (B, N_r, N_t, N_c', 1) -> embeddings (B, embed_dim)."""
        x = ops.as_tensor(np.asarray(maps, dtype=np.float32))
        if x.ndim == 4:
            x = ops.reshape(x, (1,) + x.shape)
        if x.shape[1:4] != self.cfg.map_shape:
            raise ValueError(f"map shape {x.shape[1:]} != configured {self.cfg.map_shape}")
        return self.embedder.forward(x, train=train, rng=rng)

    def pool(self, embeddings: list[tuple[PairId, np.ndarray]]) -> tuple[np.ndarray, AttentionReport]:
        """Gated-attention MIL pooling of per-pair embeddings; softmax runs
        over exactly the supplied pairs."""
        if not embeddings:
            raise ValueError("cannot pool an empty set of pair embeddings")
        pair_ids = [p for p, _ in embeddings]
        h = Tensor(np.stack([np.asarray(v, dtype=np.float32).reshape(-1) for _, v in embeddings]))
        s = self.attention.scores(h).data.reshape(-1)
        a = np.exp(s - s.max())
        a = a / a.sum()
        z = (a[:, None] * h.data).sum(axis=0)
        return z, AttentionReport(pair_ids=pair_ids, logits=s.copy(), weights=a)

    def classify(self, z: np.ndarray) -> DetectionDecision:
        prob = float(self.classifier.forward(ops.as_tensor(np.asarray(z, dtype=np.float32).reshape(1, -1))).data[0, 0])
        return DetectionDecision(probability=prob, label=int(prob >= 0.5), pooled=np.asarray(z))

    def detect(self, pair_maps: list[tuple[PairId, np.ndarray]]) -> tuple[DetectionDecision, AttentionReport]:
        """Full decision on any nonempty subset of pairs (eval mode)."""
        if not pair_maps:
            raise ValueError("detect needs at least one pair")
        maps = np.stack([np.asarray(m, dtype=np.float32) for _, m in pair_maps])
        emb = self.embed(maps).data
        z, report = self.pool([(p, emb[i]) for i, (p, _) in enumerate(pair_maps)])
        return self.classify(z), report

    def batch_probs(self, flat_maps: np.ndarray, slot_rows: np.ndarray, mask_bias: np.ndarray,
                    n_samples: int, train: bool = False, rng=None) -> Tensor:
        """Vectorized forward for training/eval: embeddings of the
        participating maps are scattered into (samples, MN) slots, absent
        slots are masked out of the softmax."""
        mn = self.cfg.n_pairs
        emb = self.embed(flat_maps, train=train, rng=rng)
        padded = ops.reshape(
            ops.put_rows(emb, slot_rows, n_samples * mn), (n_samples, mn, self.cfg.embed_dim)
        )
        s = self.attention.scores(padded) + Tensor(mask_bias[:, :, None].astype(np.float32))
        a = ops.softmax(s, axis=1)
        z = ops.sum_(a * padded, axis=1)
        return self.classifier.forward(z, train=train, rng=rng)


@dataclass
class DetectionSplit:
    """Training view of a dataset split: maps and scene labels only (pair
    labels never reach the trainer)."""

    maps: np.ndarray  # (S, MN, N_r, N_t, N_c', 1) float32
    scene_labels: np.ndarray  # (S,) uint8

    def __len__(self) -> int:
        return self.maps.shape[0]

    @staticmethod
    def from_preprocessed(split) -> "DetectionSplit":
        return DetectionSplit(maps=split.maps, scene_labels=split.scene_labels)


@dataclass
class DetectorHyper:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    early_stop_patience: int = 12
    lr_patience: int = 5
    lr_decay: float = 0.5
    min_lr: float = 1e-6
    model: DetectorConfig | None = None  # filled from data when None


def _batch_layout(cfg: DetectorConfig, sample_idx: np.ndarray, subsets: list[np.ndarray]):
    """Flatten (sample, pair-subset) into contiguous rows plus slot/mask
    arrays for ``batch_probs``."""
    mn = cfg.n_pairs
    rows, slots = [], []
    mask = np.full((len(sample_idx), mn), MASK_OFF, dtype=np.float64)
    for pos, (si, subset) in enumerate(zip(sample_idx, subsets)):
        for flat in subset:
            rows.append((si, flat - 1))
            slots.append(pos * mn + flat - 1)
            mask[pos, flat - 1] = 0.0
    return np.array(rows), np.array(slots), mask


def eval_bce(model: CooperativeDetector, split: DetectionSplit, batch_size: int = 256) -> float:
    """Mean BCE over a split with all pairs participating (eval mode)."""
    probs = predict_probs(model, split.maps, batch_size=batch_size)
    p = np.clip(probs, 1e-7, 1 - 1e-7)
    y = split.scene_labels.astype(np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


def predict_probs(model: CooperativeDetector, maps: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Presence probabilities with all MN pairs, batched, eval mode."""
    mn = model.cfg.n_pairs
    out = np.empty(maps.shape[0])
    all_pairs = np.arange(1, mn + 1)
    for start in range(0, maps.shape[0], batch_size):
        chunk = maps[start : start + batch_size]
        b = chunk.shape[0]
        sample_idx = np.arange(b)
        rows, slots, mask = _batch_layout(model.cfg, sample_idx, [all_pairs] * b)
        flat = chunk.reshape((-1,) + chunk.shape[2:])
        probs = model.batch_probs(flat, slots, mask, b)
        out[start : start + b] = probs.data.reshape(-1)
    return out


def train_detector(
    train: DetectionSplit,
    val: DetectionSplit,
    hyper: DetectorHyper,
    seed: int,
    log_fn=None,
) -> tuple[CooperativeDetector, list[dict]]:
    """Joint end-to-end training on scene labels with random pair-sampling:
    per sample and epoch, a uniform-size subset of pairs (between half and
    all of them) participates in the pooled decision."""
    if hyper.model is None:
        raise ValueError("hyper.model must be set (map shape and pair count)")
    cfg = hyper.model
    mn = cfg.n_pairs
    model = CooperativeDetector(cfg, substream(seed, "init"))
    optimizer = Adam(model.named_parameters(), lr=hyper.lr)
    sampling = substream(seed, "sampling")
    dropout_rng = substream(seed, "dropout")
    labels = train.scene_labels.astype(np.float32)
    lo = (mn + 1) // 2  # ceil(MN/2)

    def train_epoch(epoch: int) -> float:
        order = sampling.permutation(len(train))
        total, count = 0.0, 0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            sizes = sampling.integers(lo, mn + 1, size=len(idx))
            subsets = [np.sort(sampling.choice(mn, size=k, replace=False)) + 1 for k in sizes]
            rows, slots, mask = _batch_layout(cfg, idx, subsets)
            flat = train.maps[rows[:, 0], rows[:, 1]]
            optimizer.zero_grad()
            probs = model.batch_probs(flat, slots, mask, len(idx), train=True, rng=dropout_rng)
            loss = bce_loss(ops.reshape(probs, (-1,)), labels[idx])
            loss.backward()
            optimizer.step()
            total += float(loss.data) * len(idx)
            count += len(idx)
        return total / count

    schedule = FitSchedule(
        lr=hyper.lr,
        epochs=hyper.epochs,
        batch_size=hyper.batch_size,
        early_stop_patience=hyper.early_stop_patience,
        lr_decay=hyper.lr_decay,
        lr_patience=hyper.lr_patience,
        min_lr=hyper.min_lr,
    )
    history = fit_loop(schedule, optimizer, model, train_epoch, lambda: eval_bce(model, val), log_fn)
    return model, history


def batch_reports(model: CooperativeDetector, maps: np.ndarray) -> list[AttentionReport]:
    """Attention reports for every sample of a split, all pairs present."""
    mn = model.cfg.n_pairs
    pair_ids = model.cfg.all_pair_ids()
    reports = []
    for start in range(0, maps.shape[0], 256):
        chunk = maps[start : start + 256]
        b = chunk.shape[0]
        flat = chunk.reshape((-1,) + chunk.shape[2:])
        emb = model.embed(flat).data.reshape(b, mn, -1)
        s = model.attention.scores(Tensor(emb.astype(np.float32))).data[..., 0]
        e = np.exp(s - s.max(axis=1, keepdims=True))
        a = e / e.sum(axis=1, keepdims=True)
        for i in range(b):
            reports.append(
                AttentionReport(pair_ids=pair_ids, logits=s[i].copy(), weights=a[i].copy())
            )
    return reports


def save_detector(path: str, model: CooperativeDetector, optimizer: Adam | None = None,
                  extra_meta: dict | None = None) -> None:
    from .tensornet.checkpoint import save_checkpoint

    arrays = model.state_arrays()
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    meta = {"kind": "detector", "config": model.cfg.to_meta()}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, meta, arrays)


def load_detector(path: str) -> CooperativeDetector:
    from .tensornet.checkpoint import load_checkpoint

    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "detector":
        raise ValueError(f"{path}: not a detector checkpoint (kind={meta.get('kind')!r})")
    model = CooperativeDetector(DetectorConfig.from_meta(meta["config"]), np.random.default_rng(0))
    model.load_state_arrays(arrays)
    return model


def export_attention_csv(path: str, reports: list[AttentionReport], pair_labels: np.ndarray | None = None) -> None:
    """One row per (sample, pair): sample id, m, n, logit, weight, and the
    true pair label when available."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "m", "n", "logit", "weight", "pair_label"])
        for i, rep in enumerate(reports):
            for j, pid in enumerate(rep.pair_ids):
                label = "" if pair_labels is None else int(pair_labels[i, pid.flat - 1])
                writer.writerow(
                    [i, pid.m, pid.n, f"{rep.logits[j]:.9g}", f"{rep.weights[j]:.9g}", label]
                )
