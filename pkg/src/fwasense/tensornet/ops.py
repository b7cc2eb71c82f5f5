"""Differentiable operations on :class:`Tensor`."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, make_node


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic --------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return make_node(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return make_node(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return make_node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    return make_node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """np.matmul semantics for operands of ndim >= 2, with broadcasting of
    leading batch dimensions."""
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_node(out, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return make_node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g / (2.0 * out),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    mask = ((a.data >= lo) & (a.data <= hi)).astype(a.dtype)
    return make_node(out, (a,), lambda g: (g * mask,))


# -- shape -------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    return make_node(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (g.transpose(inverse),),
    )


def index(a: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing."""
    out = a.data[key]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        return (ga,)

    return make_node(np.ascontiguousarray(out), (a,), backward)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return make_node(out, tuple(tensors), backward)


def put_rows(values: Tensor, row_idx: np.ndarray, n_rows: int) -> Tensor:
    """Scatter rows of ``values`` into a zero matrix of ``n_rows`` rows;
    ``row_idx`` must be unique."""
    out = np.zeros((n_rows,) + values.shape[1:], dtype=values.dtype)
    out[row_idx] = values.data
    return make_node(out, (values,), lambda g: (g[row_idx],))


# -- reductions --------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    # 64-bit accumulation regardless of storage dtype
    out = np.sum(a.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return make_node(out, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[i] for i in ax]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), Tensor(np.asarray(1.0 / count, dtype=a.dtype)))


def max_(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routes to the first argmax."""
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), g, axis=axis)
        return (ga,)

    return make_node(np.ascontiguousarray(out), (a,), backward)


# -- activations -------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(a.dtype)
    return make_node(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    factor = np.where(a.data > 0, a.dtype.type(1.0), a.dtype.type(slope))
    return make_node(a.data * factor, (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return make_node(out.astype(a.dtype), (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return make_node(out, (a,), backward)


# -- structured ops ----------------------------------------------------------


def _pad_spatial(x: np.ndarray, pads: tuple[int, int, int]) -> np.ndarray:
    """Zero-pad the three spatial axes of (B, D, H, W, C)."""
    b, d, h, w, c = x.shape
    pd, ph, pw = pads
    out = np.zeros((b, d + 2 * pd, h + 2 * ph, w + 2 * pw, c), dtype=x.dtype)
    out[:, pd : pd + d, ph : ph + h, pw : pw + w, :] = x
    return out


def conv3d(x: Tensor, w: Tensor, b: Tensor | None, dilation=(1, 1, 1)) -> Tensor:
    """3-D convolution, stride 1, 'same' zero padding, configurable
    dilation. x: (B, D, H, W, Cin); w: (kd, kh, kw, Cin, Cout).

    Evaluated as a sum of shifted-slice matmuls over the kernel taps,
    which keeps everything in large contiguous BLAS calls.
    """
    kd, kh, kw, cin, cout = w.shape
    if kd % 2 == 0 or kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel dims must be odd for 'same' padding, got {(kd, kh, kw)}")
    if x.ndim != 5 or x.shape[4] != cin:
        raise ValueError(f"conv3d input {x.shape} incompatible with kernel {w.shape}")
    bsz, d, h, wd_ = x.shape[:4]
    n_pos = bsz * d * h * wd_
    n_taps = kd * kh * kw
    pads = tuple(dilation[i] * (k - 1) // 2 for i, k in enumerate((kd, kh, kw)))
    xp = _pad_spatial(x.data, pads)
    taps = [
        (a * dilation[0], bb * dilation[1], cc * dilation[2])
        for a in range(kd)
        for bb in range(kh)
        for cc in range(kw)
    ]
    # im2col via whole-slice copies, then one GEMM
    cols = np.empty((n_pos, n_taps, cin), dtype=x.dtype)
    for i, (oa, ob, oc) in enumerate(taps):
        cols[:, i, :] = xp[:, oa : oa + d, ob : ob + h, oc : oc + wd_, :].reshape(n_pos, cin)
    cols2 = cols.reshape(n_pos, n_taps * cin)
    wmat = w.data.reshape(n_taps * cin, cout)
    out = (cols2 @ wmat).reshape(bsz, d, h, wd_, cout)
    if b is not None:
        out = out + b.data

    def backward(g):
        gflat = np.ascontiguousarray(g.reshape(n_pos, cout))
        gw = (cols2.T @ gflat).reshape(w.shape)
        wk = w.data.reshape(n_taps, cin, cout)
        gxp = np.zeros_like(xp)
        for i, (oa, ob, oc) in enumerate(taps):
            gxp[:, oa : oa + d, ob : ob + h, oc : oc + wd_, :] += (gflat @ wk[i].T).reshape(
                bsz, d, h, wd_, cin
            )
        gx = np.ascontiguousarray(
            gxp[:, pads[0] : pads[0] + d, pads[1] : pads[1] + h, pads[2] : pads[2] + wd_, :]
        )
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, backward)


def maxpool3d(x: Tensor, window=(2, 2, 2)) -> Tensor:
    """Non-overlapping max pooling; spatial dims must divide the window."""
    b, d, h, w, c = x.shape
    wd, wh, ww = window
    if d % wd or h % wh or w % ww:
        raise ValueError(f"input {x.shape[1:4]} not divisible by pool window {window}")
    do, ho, wo = d // wd, h // wh, w // ww
    xr = x.data.reshape(b, do, wd, ho, wh, wo, ww, c)
    xt = np.ascontiguousarray(xr.transpose(0, 1, 3, 5, 7, 2, 4, 6)).reshape(
        b, do, ho, wo, c, wd * wh * ww
    )
    idx = np.argmax(xt, axis=-1)
    out = np.take_along_axis(xt, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gt = np.zeros((b, do, ho, wo, c, wd * wh * ww), dtype=x.dtype)
        np.put_along_axis(gt, idx[..., None], g[..., None], axis=-1)
        gr = gt.reshape(b, do, ho, wo, c, wd, wh, ww).transpose(0, 1, 5, 2, 6, 3, 7, 4)
        return (np.ascontiguousarray(gr).reshape(b, d, h, w, c),)

    return make_node(out, (x,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return make_node(out, (table,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scaling happens at train time, eval is identity
    (callers simply skip the op in eval mode)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return mul(x, Tensor(mask))
