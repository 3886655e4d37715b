"""Differentiable operators over :class:`NdValue`.

Spatial tensors are channel-last, ``(h, w, c)``, single image.  Conv kernels
are stored ``(kh, kw, c_in, c_out)``.
"""

import numpy as np

from ..errors import DimensionError, NumericInputError, UnsupportedConfigError
from .value import NdValue, as_value, make_result

LEAKY_SLOPE = 0.01


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, what):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return make_result(out, (a, b), bw)


def scale(x, c):
    x = as_value(x)
    c = float(c)
    return make_result(x.data * c, (x,), lambda g: (g * c,))


def relu(x):
    x = as_value(x)
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=LEAKY_SLOPE):
    x = as_value(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return make_result(x.data * factor, (x,), lambda g: (g * factor,))


def absolute(x):
    x = as_value(x)
    sign = np.sign(x.data)
    return make_result(np.abs(x.data), (x,), lambda g: (g * sign,))


def square(x):
    x = as_value(x)
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def power(x, p):
    x = as_value(x)
    p = float(p)
    return make_result(x.data ** p, (x,), lambda g: (g * p * x.data ** (p - 1.0),))


def exp(x):
    x = as_value(x)
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_value(x)
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x):
    x = as_value(x)
    out = np.sqrt(x.data)
    return make_result(out, (x,), lambda g: (g * 0.5 / out,))


# ---------------------------------------------------------------- reductions / shape

def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = as_value(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    kept = x.data.sum(axis=axis, keepdims=True).shape

    def bw(g):
        # NdValue stores 0-d results as shape (1,), so reshape rather than expand
        return (np.broadcast_to(np.reshape(g, kept), x.shape),)

    return make_result(out, (x,), bw)


def mean(x, axis=None, keepdims=False):
    x = as_value(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    x = as_value(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {shape}") from None
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_value(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return make_result(out, (x,), lambda g: (np.transpose(g, inv),))


def broadcast_to(x, shape):
    x = as_value(x)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast {x.shape} to {shape}") from None
    return make_result(out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def concat(values, axis=-1):
    values = [as_value(v) for v in values]
    if not values:
        raise DimensionError("concat needs at least one input")
    try:
        out = np.concatenate([v.data for v in values], axis=axis)
    except ValueError:
        shapes = [v.shape for v in values]
        raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(out, values, bw)


def index(x, key):
    """Basic or advanced indexing; backward scatters with accumulation."""
    x = as_value(x)
    out = x.data[key]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return make_result(np.array(out), (x,), bw)


def take(x, indices, axis=0):
    """Gather along ``axis`` with a 1-d index array (repeats allowed)."""
    x = as_value(x)
    indices = np.asarray(indices, dtype=np.intp).reshape(-1)
    out = np.take(x.data, indices, axis=axis)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(np.moveaxis(full, axis, 0), indices, np.moveaxis(g, axis, 0))
        return (full,)

    return make_result(out, (x,), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(a.data @ b.data, (a, b), bw)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` over the last axis of ``x`` (any leading shape)."""
    x, weight = as_value(x), as_value(weight)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    out = matmul(flat, weight)
    if bias is not None:
        out = add(out, bias)
    if x.ndim != 2:
        out = reshape(out, lead + (weight.shape[1],))
    return out


# ---------------------------------------------------------------- normalisation

def softmax(x, axis=-1):
    """Numerically stable softmax (max-subtracted) along ``axis``."""
    x = as_value(x)
    if x.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    if not np.all(np.isfinite(x.data)):
        raise NumericInputError("softmax received non-finite input")
    z = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    s = z / z.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result(s, (x,), bw)


def softmax_lastaxis(x):
    return softmax(x, axis=-1)


def standardize(x, axes=-1, eps=1e-5):
    """``(x - mean) / sqrt(var + eps)`` with statistics over ``axes``."""
    x = as_value(x)
    axes = tuple(np.atleast_1d(axes) % x.ndim)
    mu = x.data.mean(axis=axes, keepdims=True)
    centred = x.data - mu
    inv = 1.0 / np.sqrt((centred ** 2).mean(axis=axes, keepdims=True) + eps)
    xhat = centred * inv

    def bw(g):
        gm = g.mean(axis=axes, keepdims=True)
        gx = (g * xhat).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return make_result(xhat, (x,), bw)


def layer_norm(x, gamma, beta, eps=1e-5):
    return add(mul(standardize(x, -1, eps), gamma), beta)


# ---------------------------------------------------------------- convolution

def _pad_hw(a, pad):
    return np.pad(a, ((pad, pad), (pad, pad), (0, 0))) if pad else a


def _im2col(x, k, stride):
    """Patches of a zero-padded (h, w, c) array -> (ho, wo, k, k, c)."""
    pad = k // 2
    xp = _pad_hw(x, pad)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(0, 1))
    # win: (h', w', c, k, k)
    win = win[::stride, ::stride]
    return np.ascontiguousarray(np.transpose(win, (0, 1, 3, 4, 2)))


def _col2im(cols, out_hw, stride):
    """Adjoint of :func:`_im2col`: accumulate (ho, wo, k, k, c) into (h, w, c)."""
    ho, wo, k, _, c = cols.shape
    pad = k // 2
    h, w = out_hw
    acc = np.zeros((h + 2 * pad, w + 2 * pad, c))
    for a in range(k):
        for b in range(k):
            acc[a:a + stride * ho:stride, b:b + stride * wo:stride] += cols[:, :, a, b]
    return acc[pad:pad + h, pad:pad + w] if pad else acc


def conv2d(x, kernel, bias=None, stride=1):
    """Cross-correlation with "same" zero padding (1x1 or 3x3; stride 1 or 2)."""
    x, kernel = as_value(x), as_value(kernel)
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects (h,w,c) input and 4-d kernel, got {x.shape}, {kernel.shape}")
    k = kernel.shape[0]
    if k not in (1, 3) or kernel.shape[1] != k:
        raise UnsupportedConfigError(f"conv2d supports 1x1 and 3x3 kernels, got {kernel.shape[:2]}")
    if stride not in (1, 2):
        raise UnsupportedConfigError(f"conv2d supports stride 1 or 2, got {stride}")
    c_in, c_out = kernel.shape[2], kernel.shape[3]
    if x.shape[2] != c_in:
        raise DimensionError(f"conv2d: input channels {x.shape} do not match kernel {kernel.shape}")
    h, w = x.shape[:2]

    if k == 1:
        xs = x.data[::stride, ::stride]
        ho, wo = xs.shape[:2]
        flat = xs.reshape(-1, c_in)
        out = (flat @ kernel.data[0, 0]).reshape(ho, wo, c_out)

        def bw(g):
            g2 = g.reshape(-1, c_out)
            gk = (flat.T @ g2)[None, None]
            gx = np.zeros_like(x.data)
            gx[::stride, ::stride] = (g2 @ kernel.data[0, 0].T).reshape(ho, wo, c_in)
            return gx, gk
    else:
        cols = _im2col(x.data, 3, stride)
        ho, wo = cols.shape[:2]
        flat = cols.reshape(ho * wo, 9 * c_in)
        kmat = kernel.data.reshape(9 * c_in, c_out)
        out = (flat @ kmat).reshape(ho, wo, c_out)

        def bw(g):
            g2 = g.reshape(-1, c_out)
            gk = (flat.T @ g2).reshape(kernel.shape)
            gcols = (g2 @ kmat.T).reshape(ho, wo, 3, 3, c_in)
            return _col2im(gcols, (h, w), stride), gk

    res = make_result(out, (x, kernel), bw)
    return add(res, bias) if bias is not None else res


def conv_transpose2d(x, kernel, bias=None):
    """3x3, stride-2 transposed convolution that exactly doubles h and w.

    Equivalent to padding 1 with output padding 1, and the adjoint of
    ``conv2d(., K, stride=2)`` when ``kernel[a, b] == K[a, b].T``.
    """
    x, kernel = as_value(x), as_value(kernel)
    if x.ndim != 3 or kernel.shape[:2] != (3, 3):
        raise DimensionError(f"conv_transpose2d expects (h,w,c) input and 3x3 kernel, got {x.shape}, {kernel.shape}")
    c_in, c_out = kernel.shape[2], kernel.shape[3]
    if x.shape[2] != c_in:
        raise DimensionError(f"conv_transpose2d: input {x.shape} does not match kernel {kernel.shape}")
    h, w = x.shape[:2]
    flat = x.data.reshape(h * w, c_in)
    # kt: (c_in, 3*3*c_out)
    kt = np.transpose(kernel.data, (2, 0, 1, 3)).reshape(c_in, 9 * c_out)
    cols = (flat @ kt).reshape(h, w, 3, 3, c_out)
    out = _col2im(cols, (2 * h, 2 * w), 2)

    def bw(g):
        gcols = _im2col(g, 3, 2).reshape(h * w, 9 * c_out)
        gx = (gcols @ kt.T).reshape(h, w, c_in)
        gk = np.transpose((flat.T @ gcols).reshape(c_in, 3, 3, c_out), (1, 2, 0, 3))
        return gx, gk

    res = make_result(out, (x, kernel), bw)
    return add(res, bias) if bias is not None else res


def conv1d(x, kernel, bias=None):
    """Same-padded 1-d convolution of ``x`` (c_in, length) by kernel (c_out, c_in, 3)."""
    x, kernel = as_value(x), as_value(kernel)
    c_out, c_in, k = kernel.shape
    if k != 3:
        raise UnsupportedConfigError(f"conv1d supports kernel 3, got {k}")
    if x.ndim != 2 or x.shape[0] != c_in:
        raise DimensionError(f"conv1d: input {x.shape} does not match kernel {kernel.shape}")
    length = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (1, 1)))
    # stacked: (c_in*3, length), row index = ci*3 + tap
    stacked = np.stack([xp[:, t:t + length] for t in range(3)], axis=1).reshape(c_in * 3, length)
    kmat = kernel.data.reshape(c_out, c_in * 3)
    out = kmat @ stacked

    def bw(g):
        gk = (g @ stacked.T).reshape(kernel.shape)
        gs = (kmat.T @ g).reshape(c_in, 3, length)
        gxp = np.zeros_like(xp)
        for t in range(3):
            gxp[:, t:t + length] += gs[:, t]
        return gxp[:, 1:-1], gk

    res = make_result(out, (x, kernel), bw)
    if bias is not None:
        res = add(res, reshape(as_value(bias), (c_out, 1)))
    return res


# ---------------------------------------------------------------- propagation

NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _fold_edge_pad(gp):
    """Adjoint of one-pixel edge (replicate) padding of an (h, w) array."""
    g = gp[1:-1, 1:-1].copy()
    g[0, :] += gp[0, 1:-1]
    g[-1, :] += gp[-1, 1:-1]
    g[:, 0] += gp[1:-1, 0]
    g[:, -1] += gp[1:-1, -1]
    g[0, 0] += gp[0, 0]
    g[0, -1] += gp[0, -1]
    g[-1, 0] += gp[-1, 0]
    g[-1, -1] += gp[-1, -1]
    return g


def neighbors8(x):
    """(h, w) -> (h, w, 8) stack of the 8-neighbourhood, replicating edges."""
    x = as_value(x)
    if x.ndim != 2:
        raise DimensionError(f"neighbors8 expects a 2-d map, got {x.shape}")
    h, w = x.shape
    xp = np.pad(x.data, 1, mode="edge")
    out = np.stack([xp[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] for dy, dx in NEIGHBOR_OFFSETS], axis=-1)

    def bw(g):
        gp = np.zeros((h + 2, w + 2))
        for k, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
            gp[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] += g[..., k]
        return (_fold_edge_pad(gp),)

    return make_result(out, (x,), bw)
