"""Differentiable primitives.

Elementwise binary ops accept equal shapes or a single-element operand; there is
no other broadcasting. Convolutions add an optional per-channel bias.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape} (only scalar operands broadcast)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def _axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"{op}: axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    out = a.data + b.data
    return Tensor._from_op(out, (a, b), lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    out = a.data - b.data
    return Tensor._from_op(out, (a, b), lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    out = a.data * b.data

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return Tensor._from_op(out, (a, b), backward, "mul")


def _unary(x: Tensor, out: np.ndarray, dydx: np.ndarray, op: str) -> Tensor:
    return Tensor._from_op(out, (x,), lambda g: (g * dydx,), op)


def relu(x: Tensor) -> Tensor:
    return _unary(x, np.maximum(x.data, 0.0), (x.data > 0).astype(np.float64), "relu")


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    pos = x.data > 0
    return _unary(x, np.where(pos, x.data, slope * x.data), np.where(pos, 1.0, slope), "leaky_relu")


def elu(x: Tensor) -> Tensor:
    pos = x.data > 0
    neg = np.exp(np.minimum(x.data, 0.0))
    return _unary(x, np.where(pos, x.data, neg - 1.0), np.where(pos, 1.0, neg), "elu")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _unary(x, y, y * (1.0 - y), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _unary(x, y, 1.0 - y * y, "tanh")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _unary(x, y, y, "exp")


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return _unary(x, np.abs(x.data), np.sign(x.data), "abs")


# ---------------------------------------------------------------- reductions / shape

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)
    return Tensor._from_op(out, (x,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat: empty input list")
    axis = _axis(axis, xs[0].ndim, "concat")
    for x in xs[1:]:
        if x.ndim != xs[0].ndim or any(
            s != t for i, (s, t) in enumerate(zip(x.shape, xs[0].shape)) if i != axis
        ):
            raise ValueError(f"concat: shapes {xs[0].shape} and {x.shape} differ off axis {axis}")
    out = np.concatenate([x.data for x in xs], axis=axis)
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tuple(xs), backward, "concat")


def index(x: Tensor, idx) -> Tensor:
    out = x.data[idx]
    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis)))
                for i in (idx if isinstance(idx, tuple) else (idx,)))

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return Tensor._from_op(np.array(out), (x,), backward, "index")


def pad(x: Tensor, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding; ``widths`` has one (before, after) pair per axis."""
    widths = tuple(tuple(w) for w in widths)
    if len(widths) != x.ndim or any(w < 0 for pair in widths for w in pair):
        raise ValueError(f"pad: need {x.ndim} nonnegative (before, after) pairs, got {widths}")
    out = np.pad(x.data, widths)
    sl = tuple(slice(b, b + n) for (b, _), n in zip(widths, x.shape))
    return Tensor._from_op(out, (x,), lambda g: (g[sl],), "pad")


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes.

    Supports 2-d @ 2-d, batched 3-d @ 3-d with equal batch, and a shared 2-d
    operand against a 3-d batch on either side.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise ValueError(f"matmul: expected 2-d or 3-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ValueError(f"matmul: batch sizes differ, {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        if a.ndim == 2 and ga.ndim == 3:
            ga = ga.sum(axis=0)
        if b.ndim == 2 and gb.ndim == 3:
            gb = gb.sum(axis=0)
        return ga, gb

    return Tensor._from_op(out, (a, b), backward, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _axis(axis, x.ndim, "softmax")
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward, "softmax")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Unit-norm along ``axis``; vectors with norm below ``eps`` map to zero."""
    axis = _axis(axis, x.ndim, "l2_normalize")
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    live = norm >= eps
    safe = np.where(live, norm, 1.0)
    y = np.where(live, x.data / safe, 0.0)

    def backward(g):
        gx = (g - y * np.sum(g * y, axis=axis, keepdims=True)) / safe
        return (np.where(live, gx, 0.0),)

    return Tensor._from_op(y, (x,), backward, "l2_normalize")


# ---------------------------------------------------------------- convolution / pooling

def _tuple(v, n: int, what: str) -> tuple[int, ...]:
    t = (v,) * n if np.isscalar(v) else tuple(v)
    if len(t) != n:
        raise ValueError(f"{what}: expected {n} values, got {t}")
    if any(int(s) < 0 for s in t):
        raise ValueError(f"{what}: negative value in {t}")
    return tuple(int(s) for s in t)


def _convnd(x: Tensor, w: Tensor, bias: Tensor | None, stride, padding, nd: int, name: str) -> Tensor:
    layout = "NCHW" if nd == 2 else "NCDHW"
    if x.ndim != nd + 2 or w.ndim != nd + 2:
        raise ValueError(f"{name}: expected {layout} input and {nd + 2}-d kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"{name}: channel axis mismatch, input C={x.shape[1]} vs kernel C_in={w.shape[1]}")
    if bias is not None and bias.shape != (w.shape[0],):
        raise ValueError(f"{name}: bias shape {bias.shape} != ({w.shape[0]},)")
    stride = _tuple(stride, nd, f"{name} stride")
    padding = _tuple(padding, nd, f"{name} padding")
    if any(s == 0 for s in stride):
        raise ValueError(f"{name}: stride must be positive, got {stride}")
    ksize = w.shape[2:]
    spatial = x.shape[2:]
    for ax, (n, k, p) in enumerate(zip(spatial, ksize, padding)):
        if n + 2 * p < k:
            raise ValueError(f"{name}: spatial axis {ax + 2} extent {n}+2*{p} smaller than kernel {k}")
    out_sz = tuple((n + 2 * p - k) // s + 1 for n, k, p, s in zip(spatial, ksize, padding, stride))

    xp = np.pad(x.data, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))
    axes = tuple(range(2, 2 + nd))
    win = sliding_window_view(xp, ksize, axis=axes)
    win = win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
    # win: (N, Cin, *out, *k)
    red_win = (1,) + tuple(range(2 + nd, 2 + 2 * nd))
    red_w = (1,) + tuple(range(2, 2 + nd))
    out = np.tensordot(win, w.data, axes=(red_win, red_w))  # (N, *out, Cout)
    out = np.moveaxis(out, -1, 1)
    if bias is not None:
        out = out + bias.data.reshape((1, -1) + (1,) * nd)

    def backward(g):
        # g: (N, Cout, *out)
        gw = np.tensordot(g, win, axes=((0,) + tuple(range(2, 2 + nd)), (0,) + tuple(range(2, 2 + nd))))
        gwin = np.tensordot(g, w.data, axes=((1,), (0,)))  # (N, *out, Cin, *k)
        gwin = np.moveaxis(gwin, 1 + nd, 1)  # (N, Cin, *out, *k)
        gxp = np.zeros_like(xp)
        for kidx in np.ndindex(*ksize):
            dst = (slice(None), slice(None)) + tuple(
                slice(k, k + s * (o - 1) + 1, s) for k, s, o in zip(kidx, stride, out_sz)
            )
            gxp[dst] += gwin[(Ellipsis,) + kidx]
        crop = (slice(None), slice(None)) + tuple(slice(p, p + n) for p, n in zip(padding, spatial))
        gb = g.sum(axis=(0,) + tuple(range(2, 2 + nd))) if bias is not None else None
        return (gxp[crop], gw, gb) if bias is not None else (gxp[crop], gw)

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._from_op(out, parents, backward, name)


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of an NCHW tensor with a (Cout, Cin, kh, kw) kernel."""
    return _convnd(x, w, bias, stride, padding, 2, "conv2d")


def conv3d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of an NCDHW tensor with a (Cout, Cin, kd, kh, kw) kernel."""
    return _convnd(x, w, bias, stride, padding, 3, "conv3d")


def maxpool3d(x: Tensor, window, stride=None) -> Tensor:
    """Max over (D, H, W) windows; ties route the gradient to the first element in scan order."""
    if x.ndim != 5:
        raise ValueError(f"maxpool3d: expected NCDHW input, got shape {x.shape}")
    window = _tuple(window, 3, "maxpool3d window")
    stride = window if stride is None else _tuple(stride, 3, "maxpool3d stride")
    for ax, (n, k) in enumerate(zip(x.shape[2:], window)):
        if k > n or k == 0:
            raise ValueError(f"maxpool3d: window {k} invalid for axis {ax + 2} of extent {n}")
    win = sliding_window_view(x.data, window, axis=(2, 3, 4))
    win = win[:, :, ::stride[0], ::stride[1], ::stride[2]]
    flat = win.reshape(win.shape[:5] + (-1,))
    arg = np.argmax(flat, axis=-1)  # first occurrence on ties
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out_sz = out.shape[2:]

    def backward(g):
        gx = np.zeros_like(x.data)
        kd, kh, kw = np.unravel_index(arg, window)
        n, c, od, oh, ow = np.indices(arg.shape)
        np.add.at(gx, (n, c, od * stride[0] + kd, oh * stride[1] + kh, ow * stride[2] + kw), g)
        return (gx,)

    assert out.shape[2:] == out_sz
    return Tensor._from_op(out, (x,), backward, "maxpool3d")


# ---------------------------------------------------------------- resampling

def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights with half-pixel-centred sampling (edge clamped)."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resampling of an NCHW tensor; a separable linear map ``Ry @ x @ Rx^T``."""
    if x.ndim != 4:
        raise ValueError(f"bilinear_resize: expected NCHW input, got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bilinear_resize: invalid output size {(out_h, out_w)}")
    ry = _interp_matrix(x.shape[2], out_h)
    rx = _interp_matrix(x.shape[3], out_w)
    out = np.einsum("ih,nchw,jw->ncij", ry, x.data, rx, optimize=True)
    return Tensor._from_op(out, (x,), lambda g: (np.einsum("ih,ncij,jw->nchw", ry, g, rx, optimize=True),), "bilinear_resize")


# ---------------------------------------------------------------- flow-network primitives

def local_correlation(f1: Tensor, f2: Tensor, radius: int) -> Tensor:
    """Correlation of ``f1`` with ``f2`` shifted by every offset in a (2r+1)^2 window.

    Output channel ``(dy + r) * (2r + 1) + (dx + r)`` holds
    ``sum_c f1[c, y, x] * f2[c, y + dy, x + dx] / sqrt(C)``; out-of-image samples are zero.
    """
    if f1.shape != f2.shape or f1.ndim != 4:
        raise ValueError(f"local_correlation: need equal NCHW shapes, got {f1.shape} and {f2.shape}")
    if radius < 0:
        raise ValueError("local_correlation: radius must be >= 0")
    n, c, h, w = f1.shape
    r = radius
    d = 2 * r + 1
    scale = 1.0 / np.sqrt(c)
    p2 = np.pad(f2.data, ((0, 0), (0, 0), (r, r), (r, r)))
    out = np.empty((n, d * d, h, w))
    for k, (oy, ox) in enumerate(np.ndindex(d, d)):
        out[:, k] = np.sum(f1.data * p2[:, :, oy:oy + h, ox:ox + w], axis=1) * scale

    def backward(g):
        g1 = np.zeros_like(f1.data)
        gp2 = np.zeros_like(p2)
        for k, (oy, ox) in enumerate(np.ndindex(d, d)):
            gk = g[:, k:k + 1] * scale
            g1 += gk * p2[:, :, oy:oy + h, ox:ox + w]
            gp2[:, :, oy:oy + h, ox:ox + w] += gk * f1.data
        return g1, gp2[:, :, r:r + h, r:r + w]

    return Tensor._from_op(out, (f1, f2), backward, "local_correlation")


def _unfold3x3_edge(a: np.ndarray) -> np.ndarray:
    """(N, C, h, w) -> (N, C, 9, h, w) of 3x3 neighbourhoods with replicate padding."""
    h, w = a.shape[2:]
    p = np.pad(a, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    return np.stack([p[:, :, i:i + h, j:j + w] for i in range(3) for j in range(3)], axis=2)


def _fold3x3_edge(g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_unfold3x3_edge`."""
    n, c, _, h, w = g.shape
    gp = np.zeros((n, c, h + 2, w + 2))
    for k, (i, j) in enumerate(np.ndindex(3, 3)):
        gp[:, :, i:i + h, j:j + w] += g[:, :, k]
    gp[:, :, 1, :] += gp[:, :, 0, :]
    gp[:, :, -2, :] += gp[:, :, -1, :]
    gp[:, :, :, 1] += gp[:, :, :, 0]
    gp[:, :, :, -2] += gp[:, :, :, -1]
    return gp[:, :, 1:-1, 1:-1]


def convex_upsample(flow: Tensor, mask: Tensor, factor: int) -> Tensor:
    """Upsample a coarse flow by softmax-weighted combinations of 3x3 coarse neighbours.

    ``mask`` has ``9 * factor**2`` channels; weights are softmax-normalised over the
    9 neighbours for every fine pixel. The result is scaled by ``factor`` so that
    displacements are expressed in fine-grid pixels.
    """
    n, c, h, w = flow.shape
    f = factor
    if mask.shape != (n, 9 * f * f, h, w):
        raise ValueError(f"convex_upsample: mask shape {mask.shape} != {(n, 9 * f * f, h, w)}")
    m = mask.data.reshape(n, 9, f, f, h, w)
    e = np.exp(m - m.max(axis=1, keepdims=True))
    wts = e / e.sum(axis=1, keepdims=True)
    unf = _unfold3x3_edge(flow.data)  # (n, c, 9, h, w)
    up = f * np.einsum("nkijyx,nckyx->ncijyx", wts, unf, optimize=True)
    out = up.transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * f, w * f)

    def backward(g):
        g6 = g.reshape(n, c, h, f, w, f).transpose(0, 1, 3, 5, 2, 4)  # (n,c,i,j,y,x)
        gunf = f * np.einsum("nkijyx,ncijyx->nckyx", wts, g6, optimize=True)
        gw = f * np.einsum("nckyx,ncijyx->nkijyx", unf, g6, optimize=True)
        gm = wts * (gw - np.sum(gw * wts, axis=1, keepdims=True))
        return _fold3x3_edge(gunf), gm.reshape(mask.shape)

    return Tensor._from_op(out, (flow, mask), backward, "convex_upsample")


# ---------------------------------------------------------------- recurrent cell

def gru_cell(h: Tensor, x: Tensor, params) -> Tensor:
    """Convolutional GRU update.

    ``params`` provides ``wz, bz, wr, br, wq, bq`` with kernels of shape
    ``(hidden, hidden + input, k, k)``; ``z`` and ``r`` are the update/reset gates.
    """
    if h.ndim != 4 or x.ndim != 4 or h.shape[0] != x.shape[0] or h.shape[2:] != x.shape[2:]:
        raise ValueError(f"gru_cell: incompatible hidden {h.shape} and input {x.shape}")
    need = h.shape[1] + x.shape[1]
    for nm in ("wz", "wr", "wq"):
        wt = getattr(params, nm)
        if wt.shape[0] != h.shape[1] or wt.shape[1] != need:
            raise ValueError(f"gru_cell: {nm} shape {wt.shape} needs ({h.shape[1]}, {need}, k, k)")
    pad_ = params.wz.shape[-1] // 2
    hx = concat([h, x], axis=1)
    z = sigmoid(conv2d(hx, params.wz, params.bz, padding=pad_))
    r = sigmoid(conv2d(hx, params.wr, params.br, padding=pad_))
    q = tanh(conv2d(concat([mul(r, h), x], axis=1), params.wq, params.bq, padding=pad_))
    return add(mul(sub(1.0, z), h), mul(z, q))
