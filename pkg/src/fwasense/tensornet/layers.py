"""NN building blocks over the autodiff core.

Weight init: He-uniform for Dense/Conv3D, N(0, 0.02) for embeddings,
gamma=1 / beta=0 for the norm layers. Dropout is inverted (eval mode is
the identity). A forward pass takes ``train`` plus an ``rng`` used only
by layers that draw randomness at train time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tensor import Tensor


class Net:
    """Base container: tracks parameters, buffers, and child modules so
    whole models serialize as flat name -> array dicts."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Net"] = {}

    def param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._buffers[name] = value
        return value

    def child(self, name: str, module: "Net") -> "Net":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + name, t) for name, t in self._params.items()]
        for cname, c in self._children.items():
            out.extend(c.named_parameters(prefix + cname + "."))
        return out

    def named_buffers(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        out = [(prefix + name, b) for name, b in self._buffers.items()]
        for cname, c in self._children.items():
            out.extend(c.named_buffers(prefix + cname + "."))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: t.data for name, t in self.named_parameters()}
        state.update({"buf:" + name: b for name, b in self.named_buffers()})
        return state

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            src = arrays[name]
            if src.shape != t.data.shape:
                raise ValueError(f"{name}: shape {src.shape} != expected {t.data.shape}")
            t.data = src.astype(t.data.dtype, copy=True)
        buffers = dict(self._walk_buffer_slots())
        for name, holder_key in buffers.items():
            holder, key = holder_key
            src = arrays["buf:" + name]
            holder._buffers[key] = src.astype(holder._buffers[key].dtype, copy=True)

    def _walk_buffer_slots(self, prefix: str = ""):
        for name in self._buffers:
            yield prefix + name, (self, name)
        for cname, c in self._children.items():
            yield from c._walk_buffer_slots(prefix + cname + ".")


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


ACTIVATIONS = {
    "relu": ops.relu,
    "leaky_relu": lambda x: ops.leaky_relu(x, 0.01),
    "sigmoid": ops.sigmoid,
    "tanh": ops.tanh,
}


class Activation(Net):
    def __init__(self, name: str):
        super().__init__()
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}; know {sorted(ACTIVATIONS)}")
        self.name = name

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        return ACTIVATIONS[self.name](x)


class Dense(Net):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 activation: str | None = None, dtype=np.float32):
        super().__init__()
        self.w = self.param("w", he_uniform(rng, (in_dim, out_dim), in_dim, dtype))
        self.b = self.param("b", np.zeros(out_dim, dtype=dtype))
        self.activation = activation

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        y = ops.matmul(x, self.w) + self.b
        if self.activation:
            y = ACTIVATIONS[self.activation](y)
        return y


class Conv3D(Net):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator,
                 kernel=(3, 3, 3), dilation: int | tuple = 1, dtype=np.float32):
        super().__init__()
        if isinstance(dilation, int):
            dilation = (dilation,) * 3
        self.dilation = tuple(dilation)
        fan_in = int(np.prod(kernel)) * in_ch
        self.w = self.param("w", he_uniform(rng, tuple(kernel) + (in_ch, out_ch), fan_in, dtype))
        self.b = self.param("b", np.zeros(out_ch, dtype=dtype))

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        return ops.conv3d(x, self.w, self.b, dilation=self.dilation)


class BatchNorm(Net):
    """Per-channel (last axis) batch normalization with running stats;
    train mode uses batch statistics and updates the running ones, eval
    mode is a fixed affine map."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5,
                 dtype=np.float32):
        super().__init__()
        self.gamma = self.param("gamma", np.ones(channels, dtype=dtype))
        self.beta = self.param("beta", np.zeros(channels, dtype=dtype))
        self.buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.buffer("running_var", np.ones(channels, dtype=dtype))
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        axes = tuple(range(x.ndim - 1))
        if train:
            mu = ops.mean(x, axis=axes, keepdims=True)
            xc = x - mu
            var = ops.mean(xc * xc, axis=axes, keepdims=True)
            m = self.momentum
            self._buffers["running_mean"] = (
                m * self._buffers["running_mean"] + (1 - m) * mu.data.reshape(-1)
            ).astype(self._buffers["running_mean"].dtype)
            self._buffers["running_var"] = (
                m * self._buffers["running_var"] + (1 - m) * var.data.reshape(-1)
            ).astype(self._buffers["running_var"].dtype)
            inv = ops.div(ops.as_tensor(np.asarray(1.0, dtype=x.dtype)), ops.sqrt(var + self.eps))
            return self.gamma * (xc * inv) + self.beta
        rm = self._buffers["running_mean"]
        rv = self._buffers["running_var"]
        scale = (1.0 / np.sqrt(rv + self.eps)).astype(x.dtype)
        return self.gamma * ((x - Tensor(rm.astype(x.dtype))) * Tensor(scale)) + self.beta


class MaxPool3D(Net):
    def __init__(self, window=(2, 2, 2)):
        super().__init__()
        self.window = tuple(window)

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        return ops.maxpool3d(x, self.window)


class AvgPool(Net):
    """Mean over one axis (e.g. the token axis of a sequence)."""

    def __init__(self, axis: int = 1):
        super().__init__()
        self.axis = axis

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        return ops.mean(x, axis=self.axis)


class Flatten(Net):
    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        return ops.reshape(x, (x.shape[0], -1))


class Dropout(Net):
    def __init__(self, rate: float = 0.1):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        if not train or self.rate == 0.0:
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        return ops.dropout(x, self.rate, rng)


class LayerNorm(Net):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gamma = self.param("gamma", np.ones(dim, dtype=dtype))
        self.beta = self.param("beta", np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        mu = ops.mean(x, axis=-1, keepdims=True)
        xc = x - mu
        var = ops.mean(xc * xc, axis=-1, keepdims=True)
        inv = ops.div(ops.as_tensor(np.asarray(1.0, dtype=x.dtype)), ops.sqrt(var + self.eps))
        return self.gamma * (xc * inv) + self.beta


class Embedding(Net):
    def __init__(self, num: int, dim: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.table = self.param("table", (0.02 * rng.standard_normal((num, dim))).astype(dtype))

    def forward(self, ids: np.ndarray, train: bool = False, rng=None) -> Tensor:
        return ops.embedding(self.table, ids)


class MultiHeadAttention(Net):
    """Self-attention over (B, L, D) token sequences."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"heads ({heads}) must divide model width ({dim})")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        for name in ("wq", "wk", "wv", "wo"):
            self.param(name, he_uniform(rng, (dim, dim), dim, dtype))
        for name in ("bq", "bk", "bv", "bo"):
            self.param(name, np.zeros(dim, dtype=dtype))

    def _split(self, t: Tensor, batch: int, length: int) -> Tensor:
        t = ops.reshape(t, (batch, length, self.heads, self.head_dim))
        return ops.transpose(t, (0, 2, 1, 3))

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        b, length, _ = x.shape
        p = self._params
        q = self._split(ops.matmul(x, p["wq"]) + p["bq"], b, length)
        k = self._split(ops.matmul(x, p["wk"]) + p["bk"], b, length)
        v = self._split(ops.matmul(x, p["wv"]) + p["bv"], b, length)
        scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2)))
        scores = scores * (1.0 / np.sqrt(self.head_dim))
        attn = ops.softmax(scores, axis=-1)
        ctx = ops.matmul(attn, v)
        ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (b, length, self.dim))
        return ops.matmul(ctx, p["wo"]) + p["bo"]


class LayerKind(enum.Enum):
    DENSE = "dense"
    CONV3D = "conv3d"
    BATCH_NORM = "batch_norm"
    MAX_POOL3D = "max_pool3d"
    AVG_POOL = "avg_pool"
    FLATTEN = "flatten"
    DROPOUT = "dropout"
    LAYER_NORM = "layer_norm"
    EMBEDDING = "embedding"
    MULTI_HEAD_ATTENTION = "multi_head_attention"
    ACTIVATION = "activation"


@dataclass
class LayerSpec:
    """Declarative layer description; ``hyper`` keys depend on the kind."""

    kind: LayerKind
    hyper: dict = field(default_factory=dict)

    def validate(self) -> None:
        h = self.hyper
        if self.kind is LayerKind.DENSE:
            if h.get("in_dim", 0) < 1 or h.get("out_dim", 0) < 1:
                raise ValueError(f"dense needs positive in_dim/out_dim, got {h}")
        elif self.kind is LayerKind.CONV3D:
            kernel = h.get("kernel", (3, 3, 3))
            if any(k < 1 or k % 2 == 0 for k in kernel):
                raise ValueError(f"conv3d kernel dims must be odd and positive, got {kernel}")
        elif self.kind is LayerKind.DROPOUT:
            if not 0.0 <= h.get("rate", 0.1) < 1.0:
                raise ValueError(f"dropout rate must be in [0, 1), got {h.get('rate')}")
        elif self.kind is LayerKind.MULTI_HEAD_ATTENTION:
            if h["dim"] % h.get("heads", 8) != 0:
                raise ValueError(f"heads must divide width, got {h}")
        elif self.kind is LayerKind.ACTIVATION:
            if h.get("name") not in ACTIVATIONS:
                raise ValueError(f"unknown activation {h.get('name')!r}")


def build_layer(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> Net:
    spec.validate()
    h = spec.hyper
    kind = spec.kind
    if kind is LayerKind.DENSE:
        return Dense(h["in_dim"], h["out_dim"], rng, activation=h.get("activation"), dtype=dtype)
    if kind is LayerKind.CONV3D:
        return Conv3D(h["in_ch"], h["out_ch"], rng, kernel=h.get("kernel", (3, 3, 3)),
                      dilation=h.get("dilation", 1), dtype=dtype)
    if kind is LayerKind.BATCH_NORM:
        return BatchNorm(h["channels"], dtype=dtype)
    if kind is LayerKind.MAX_POOL3D:
        return MaxPool3D(h.get("window", (2, 2, 2)))
    if kind is LayerKind.AVG_POOL:
        return AvgPool(h.get("axis", 1))
    if kind is LayerKind.FLATTEN:
        return Flatten()
    if kind is LayerKind.DROPOUT:
        return Dropout(h.get("rate", 0.1))
    if kind is LayerKind.LAYER_NORM:
        return LayerNorm(h["dim"], dtype=dtype)
    if kind is LayerKind.EMBEDDING:
        return Embedding(h["num"], h["dim"], rng, dtype=dtype)
    if kind is LayerKind.MULTI_HEAD_ATTENTION:
        return MultiHeadAttention(h["dim"], h.get("heads", 8), rng, dtype=dtype)
    if kind is LayerKind.ACTIVATION:
        return Activation(h["name"])
    raise ValueError(f"unknown layer kind {kind}")
