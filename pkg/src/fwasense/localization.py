"""UAV localization from selected pairs.

A shared per-pair locator maps one angle-delay map to a coarse position
estimate and a compact feature vector (tapped from a configurable hidden
layer). A Transformer encoder fuses the per-pair estimates, features, and
pair indexes into a refined cooperative estimate; hard fusion (averaging
the per-pair estimates) and soft fusion (the same Transformer fed
projected raw maps) serve as baselines.

Positions are normalized by the scene half-width inside the models;
public interfaces speak meters.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass

from .rng import substream
from .tensornet import Tensor, ops
from .tensornet.layers import (
    Activation,
    AvgPool,
    BatchNorm,
    Conv3D,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    LayerNorm,
    MaxPool3D,
    MultiHeadAttention,
    Net,
)
from .tensornet.optim import Adam, FitSchedule, fit_loop, mse_loss


class SpatialAttention(Net):
    """Feature reweighting by a map computed from channel-wise max and
    mean: out = in * Sigmoid(Conv3D([max_c, mean_c]))."""

    def __init__(self, rng: np.random.Generator, kernel=(3, 3, 3)):
        super().__init__()
        self.conv = self.child("conv", Conv3D(2, 1, rng, kernel=kernel))

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        max_c = ops.max_(x, axis=4, keepdims=True)
        mean_c = ops.mean(x, axis=4, keepdims=True)
        descriptor = ops.concat([max_c, mean_c], axis=4)
        gate = ops.sigmoid(self.conv.forward(descriptor))
        return x * gate


@dataclass
class LocatorConfig:
    map_shape: tuple[int, int, int]
    scale: float  # meters; positions are divided by this inside the model
    conv_channels: tuple[int, int, int] = (8, 16, 32)
    dense_chain: tuple[int, ...] = (256, 128, 64, 32)
    feature_tap: str = "dense64"

    def to_meta(self) -> dict:
        return {
            "map_shape": list(self.map_shape),
            "scale": self.scale,
            "conv_channels": list(self.conv_channels),
            "dense_chain": list(self.dense_chain),
            "feature_tap": self.feature_tap,
        }

    @staticmethod
    def from_meta(meta: dict) -> "LocatorConfig":
        return LocatorConfig(
            map_shape=tuple(meta["map_shape"]),
            scale=meta["scale"],
            conv_channels=tuple(meta["conv_channels"]),
            dense_chain=tuple(meta["dense_chain"]),
            feature_tap=meta["feature_tap"],
        )


class PairLocator(Net):
    """Per-pair coarse localization: Conv3D/BN/LeakyReLU blocks with
    spatial attention after the first two, two poolings, then a Dense
    chain ending in a 3-coordinate head. Hidden activations are recorded
    by name ("dense64", "act64", ...) so any of them can serve as the
    transmitted feature vector."""

    def __init__(self, cfg: LocatorConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.conv_channels
        self.conv1 = self.child("conv1", Conv3D(1, c1, rng))
        self.bn1 = self.child("bn1", BatchNorm(c1))
        self.sa1 = self.child("sa1", SpatialAttention(rng))
        self.conv2 = self.child("conv2", Conv3D(c1, c2, rng))
        self.bn2 = self.child("bn2", BatchNorm(c2))
        self.sa2 = self.child("sa2", SpatialAttention(rng))
        self.conv3 = self.child("conv3", Conv3D(c2, c3, rng))
        self.bn3 = self.child("bn3", BatchNorm(c3))
        self.pool = MaxPool3D((2, 1, 2))
        self.act = Activation("leaky_relu")
        self.flatten = Flatten()
        d, h, w = cfg.map_shape
        flat = (d // 4) * h * (w // 4) * c3
        widths = (flat,) + cfg.dense_chain
        self.dense_names = [f"dense{n}" for n in cfg.dense_chain]
        for name, din, dout in zip(self.dense_names, widths[:-1], widths[1:]):
            self.child(name, Dense(din, dout, rng))
        self.head = self.child("head", Dense(cfg.dense_chain[-1], 3, rng))
        valid = {n for w_ in cfg.dense_chain for n in (f"dense{w_}", f"act{w_}")}
        if cfg.feature_tap not in valid:
            raise ValueError(f"feature tap {cfg.feature_tap!r} not in {sorted(valid)}")

    def forward(self, x, train: bool = False, rng=None) -> tuple[Tensor, dict[str, Tensor]]:
        """Maps (B, N_r, N_t, N_c', 1) -> (normalized estimates (B, 3),
        recorded hidden activations by name)."""
        x = ops.as_tensor(np.asarray(x, dtype=np.float32))
        if x.ndim == 4:
            x = ops.reshape(x, (1,) + x.shape)
        x = self.act.forward(self.bn1.forward(self.conv1.forward(x), train))
        x = self.sa1.forward(x)
        x = self.pool.forward(x)
        x = self.act.forward(self.bn2.forward(self.conv2.forward(x), train))
        x = self.sa2.forward(x)
        x = self.pool.forward(x)
        x = self.act.forward(self.bn3.forward(self.conv3.forward(x), train))
        x = self.flatten.forward(x)
        taps: dict[str, Tensor] = {}
        for name, width in zip(self.dense_names, self.cfg.dense_chain):
            x = self._children[name].forward(x)
            taps[name] = x
            x = ops.relu(x)
            taps[f"act{width}"] = x
        return self.head.forward(x), taps

    def estimate(self, maps: np.ndarray, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode positions (meters) and tapped features for a stack of
        maps (K, N_r, N_t, N_c', 1)."""
        ests, feats = [], []
        for start in range(0, maps.shape[0], batch_size):
            est, taps = self.forward(maps[start : start + batch_size])
            ests.append(est.data * self.cfg.scale)
            feats.append(taps[self.cfg.feature_tap].data)
        return np.concatenate(ests), np.concatenate(feats)

    @property
    def feature_dim(self) -> int:
        return _tap_width(self.cfg.feature_tap)


def _tap_width(tap: str) -> int:
    return int(tap.replace("dense", "").replace("act", ""))


def hard_fusion(estimates: np.ndarray) -> np.ndarray:
    """Coordinate-wise mean of L >= 1 position estimates (L, 3)."""
    estimates = np.asarray(estimates, dtype=np.float64)
    if estimates.ndim != 2 or estimates.shape[0] < 1 or estimates.shape[1] != 3:
        raise ValueError(f"need (L, 3) estimates with L >= 1, got {estimates.shape}")
    return estimates.mean(axis=0)


@dataclass
class FusionConfig:
    token_dim: int  # 3 + N_v for medium fusion, flattened map size for soft
    n_pairs: int
    scale: float
    d_model: int = 64
    ffn_dim: int = 256
    n_layers: int = 4
    heads: int = 8
    dropout: float = 0.1
    head_hidden: int = 64

    def to_meta(self) -> dict:
        return {
            "token_dim": self.token_dim,
            "n_pairs": self.n_pairs,
            "scale": self.scale,
            "d_model": self.d_model,
            "ffn_dim": self.ffn_dim,
            "n_layers": self.n_layers,
            "heads": self.heads,
            "dropout": self.dropout,
            "head_hidden": self.head_hidden,
        }

    @staticmethod
    def from_meta(meta: dict) -> "FusionConfig":
        return FusionConfig(**meta)


class EncoderLayer(Net):
    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        super().__init__()
        self.mha = self.child("mha", MultiHeadAttention(cfg.d_model, cfg.heads, rng))
        self.ln1 = self.child("ln1", LayerNorm(cfg.d_model))
        self.ffn1 = self.child("ffn1", Dense(cfg.d_model, cfg.ffn_dim, rng, activation="relu"))
        self.ffn2 = self.child("ffn2", Dense(cfg.ffn_dim, cfg.d_model, rng))
        self.drop = Dropout(cfg.dropout)
        self.ln2 = self.child("ln2", LayerNorm(cfg.d_model))

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        x = self.ln1.forward(x + self.mha.forward(x, train, rng))
        f = self.drop.forward(self.ffn2.forward(self.ffn1.forward(x)), train, rng)
        return self.ln2.forward(x + f)


class TokenFusion(Net):
    """Transformer encoder over per-pair tokens: project + LayerNorm, add
    a pair-index embedding (table row 0 reserved), run the encoder stack,
    average over tokens, and regress three coordinates."""

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.proj = self.child("proj", Dense(cfg.token_dim, cfg.d_model, rng))
        self.norm = self.child("norm", LayerNorm(cfg.d_model))
        self.embed = self.child("embed", Embedding(cfg.n_pairs + 1, cfg.d_model, rng))
        self.layers = [
            self.child(f"layer{i}", EncoderLayer(cfg, rng)) for i in range(cfg.n_layers)
        ]
        self.pool = AvgPool(axis=1)
        self.head1 = self.child("head1", Dense(cfg.d_model, cfg.head_hidden, rng, activation="relu"))
        self.head2 = self.child("head2", Dense(cfg.head_hidden, 3, rng))

    def forward(self, tokens, indexes: np.ndarray, train: bool = False, rng=None) -> Tensor:
        """tokens (B, L, token_dim), indexes (B, L) flat pair ids in
        1..MN -> normalized estimates (B, 3)."""
        tokens = ops.as_tensor(np.asarray(tokens, dtype=np.float32))
        indexes = np.asarray(indexes, dtype=np.int64)
        if indexes.min() < 1 or indexes.max() > self.cfg.n_pairs:
            raise ValueError(
                f"pair indexes must lie in [1, {self.cfg.n_pairs}], got "
                f"[{indexes.min()}, {indexes.max()}]"
            )
        x = self.norm.forward(self.proj.forward(tokens)) + self.embed.forward(indexes)
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return self.head2.forward(self.head1.forward(self.pool.forward(x)))

    def fuse(self, tokens: np.ndarray, indexes: np.ndarray) -> np.ndarray:
        """Eval-mode fused position in meters for one sample (L tokens)."""
        out = self.forward(tokens[None, ...], np.asarray(indexes)[None, ...])
        return out.data[0] * self.cfg.scale


def medium_tokens(est_m: np.ndarray, feats: np.ndarray, scale: float) -> np.ndarray:
    """Concatenate normalized estimates with feature vectors: (L, 3+N_v)."""
    return np.concatenate([np.asarray(est_m) / scale, feats], axis=-1).astype(np.float32)


def soft_tokens(maps: np.ndarray) -> np.ndarray:
    """Flatten raw angle-delay maps into per-pair tokens: (L, Nr*Nt*Nc')."""
    maps = np.asarray(maps)
    return maps.reshape(maps.shape[0], -1).astype(np.float32)


@dataclass
class LocHyper:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 1000
    early_stop_patience: int = 15
    lr_patience: int = 6
    lr_decay: float = 0.5
    min_lr: float = 1e-6


def train_individual(
    train_maps: np.ndarray,
    train_targets_m: np.ndarray,
    val_maps: np.ndarray,
    val_targets_m: np.ndarray,
    cfg: LocatorConfig,
    hyper: LocHyper,
    seed: int,
    log_fn=None,
) -> tuple[PairLocator, list[dict]]:
    """MSE training of the per-pair locator on (map, true position)
    examples drawn from the selected pairs of with-UAV samples."""
    model = PairLocator(cfg, substream(seed, "init"))
    optimizer = Adam(model.named_parameters(), lr=hyper.lr)
    sampling = substream(seed, "sampling")
    y_train = (train_targets_m / cfg.scale).astype(np.float32)
    y_val = (val_targets_m / cfg.scale).astype(np.float32)

    def train_epoch(epoch: int) -> float:
        order = sampling.permutation(train_maps.shape[0])
        total, count = 0.0, 0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            optimizer.zero_grad()
            est, _ = model.forward(train_maps[idx], train=True)
            loss = mse_loss(est, y_train[idx])
            loss.backward()
            optimizer.step()
            total += float(loss.data) * len(idx)
            count += len(idx)
        return total / count

    def val_loss() -> float:
        total, count = 0.0, 0
        for start in range(0, val_maps.shape[0], 256):
            est, _ = model.forward(val_maps[start : start + 256])
            n = est.shape[0]
            total += float(mse_loss(est, y_val[start : start + n]).data) * n
            count += n
        return total / count

    schedule = FitSchedule(
        lr=hyper.lr, epochs=hyper.epochs, batch_size=hyper.batch_size,
        early_stop_patience=hyper.early_stop_patience, lr_decay=hyper.lr_decay,
        lr_patience=hyper.lr_patience, min_lr=hyper.min_lr,
    )
    history = fit_loop(schedule, optimizer, model, train_epoch, val_loss, log_fn)
    return model, history


def _bucket_batches(lengths: np.ndarray, batch_size: int, order: np.ndarray):
    """Group sample indexes by token count so batches stack rectangularly."""
    buckets: dict[int, list[int]] = {}
    for i in order:
        buckets.setdefault(int(lengths[i]), []).append(int(i))
    for length in sorted(buckets):
        idx = buckets[length]
        for start in range(0, len(idx), batch_size):
            yield np.array(idx[start : start + batch_size])


def train_fusion(
    train_tokens: list[np.ndarray],
    train_indexes: list[np.ndarray],
    train_targets_m: np.ndarray,
    val_tokens: list[np.ndarray],
    val_indexes: list[np.ndarray],
    val_targets_m: np.ndarray,
    cfg: FusionConfig,
    hyper: LocHyper,
    seed: int,
    log_fn=None,
) -> tuple[TokenFusion, list[dict]]:
    """MSE training of a token-fusion model (medium or soft, depending on
    how the tokens were built). Samples are bucketed by token count L so
    every stacked batch is rectangular."""
    model = TokenFusion(cfg, substream(seed, "init"))
    optimizer = Adam(model.named_parameters(), lr=hyper.lr)
    sampling = substream(seed, "sampling")
    dropout_rng = substream(seed, "dropout")
    lengths_tr = np.array([t.shape[0] for t in train_tokens])
    lengths_va = np.array([t.shape[0] for t in val_tokens])
    y_train = (train_targets_m / cfg.scale).astype(np.float32)
    y_val = (val_targets_m / cfg.scale).astype(np.float32)

    def run_batch(idx: np.ndarray, tokens, indexes, targets, train: bool) -> float:
        tok = np.stack([tokens[i] for i in idx])
        ids = np.stack([indexes[i] for i in idx])
        if train:
            optimizer.zero_grad()
        est = model.forward(tok, ids, train=train, rng=dropout_rng if train else None)
        loss = mse_loss(est, targets[idx])
        if train:
            loss.backward()
            optimizer.step()
        return float(loss.data)

    def train_epoch(epoch: int) -> float:
        order = sampling.permutation(len(train_tokens))
        total, count = 0.0, 0
        for idx in _bucket_batches(lengths_tr, hyper.batch_size, order):
            total += run_batch(idx, train_tokens, train_indexes, y_train, True) * len(idx)
            count += len(idx)
        return total / count

    def val_loss() -> float:
        total, count = 0.0, 0
        for idx in _bucket_batches(lengths_va, 256, np.arange(len(val_tokens))):
            total += run_batch(idx, val_tokens, val_indexes, y_val, False) * len(idx)
            count += len(idx)
        return total / count

    schedule = FitSchedule(
        lr=hyper.lr, epochs=hyper.epochs, batch_size=hyper.batch_size,
        early_stop_patience=hyper.early_stop_patience, lr_decay=hyper.lr_decay,
        lr_patience=hyper.lr_patience, min_lr=hyper.min_lr,
    )
    history = fit_loop(schedule, optimizer, model, train_epoch, val_loss, log_fn)
    return model, history


def save_locator(path: str, model: PairLocator, optimizer: Adam | None = None,
                 extra_meta: dict | None = None) -> None:
    from .tensornet.checkpoint import save_checkpoint

    arrays = model.state_arrays()
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    meta = {"kind": "locator", "config": model.cfg.to_meta()}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, meta, arrays)


def load_locator(path: str) -> PairLocator:
    from .tensornet.checkpoint import load_checkpoint

    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "locator":
        raise ValueError(f"{path}: not a locator checkpoint (kind={meta.get('kind')!r})")
    model = PairLocator(LocatorConfig.from_meta(meta["config"]), np.random.default_rng(0))
    model.load_state_arrays(arrays)
    return model


def save_fusion(path: str, model: TokenFusion, kind: str, optimizer: Adam | None = None,
                extra_meta: dict | None = None) -> None:
    from .tensornet.checkpoint import save_checkpoint

    if kind not in ("fusion_medium", "fusion_soft"):
        raise ValueError(f"unknown fusion kind {kind!r}")
    arrays = model.state_arrays()
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    meta = {"kind": kind, "config": model.cfg.to_meta()}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, meta, arrays)


def load_fusion(path: str, kind: str) -> TokenFusion:
    from .tensornet.checkpoint import load_checkpoint

    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != kind:
        raise ValueError(f"{path}: expected {kind!r} checkpoint, got {meta.get('kind')!r}")
    model = TokenFusion(FusionConfig.from_meta(meta["config"]), np.random.default_rng(0))
    model.load_state_arrays(arrays)
    return model
