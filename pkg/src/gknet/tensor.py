"""Dense float64 tensor primitives.

Construction, matmul, elementwise ops, zero padding, valid convolution and
pooling, plus the sliding-window helpers (im2col / col2im) the layer
implementations build on. Functions treat their inputs as read-only and
return fresh arrays; nothing here keeps state.

Convolution layout: images are [C, H, W] (batched: [B, C, H, W]), kernel
banks are [O, C, Kh, Kw]. "Valid" placement only; padding is explicit and
symmetric. Output extent along an axis is floor((size - k) / stride) + 1.
"""

import math

import numpy as np

from .errors import ShapeError


def new_tensor(shape, fill=0.0):
    """Create a float64 tensor of `shape`.

    `fill` is either a scalar (broadcast) or array-like data whose element
    count matches the shape's element count.
    """
    try:
        shape = tuple(int(s) for s in shape)
    except TypeError as exc:
        raise ShapeError(f"shape must be a sequence of ints, got {shape!r}") from exc
    if len(shape) == 0:
        raise ShapeError("tensor rank must be at least 1")
    if any(s < 1 for s in shape):
        raise ShapeError(f"extents must be positive, got {shape}")
    if np.isscalar(fill):
        return np.full(shape, float(fill))
    data = np.asarray(fill, dtype=np.float64)
    if data.size != math.prod(shape):
        raise ShapeError(
            f"data has {data.size} elements, shape {shape} needs {math.prod(shape)}"
        )
    return data.reshape(shape).copy()


def matmul(a, b):
    """Matrix product of two rank-2 tensors, [n,m] @ [m,p] -> [n,p]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    return a @ b


def elementwise(op, a, b=None):
    """Elementwise arithmetic and mapping.

    op: "add" | "sub" | "mul" (b is an equal-shape tensor or a scalar),
        "scale" (b is a scalar), "map" (b is a callable applied pointwise).
    """
    a = np.asarray(a, dtype=np.float64)
    if op == "map":
        if not callable(b):
            raise ShapeError("map needs a callable")
        return np.vectorize(b, otypes=[np.float64])(a)
    if op == "scale":
        if not np.isscalar(b):
            raise ShapeError("scale needs a scalar")
        return a * float(b)
    if op not in ("add", "sub", "mul"):
        raise ShapeError(f"unknown elementwise op {op!r}")
    if np.isscalar(b):
        b = np.full_like(a, float(b))
    else:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != a.shape:
            raise ShapeError(f"operand shapes differ: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    return a * b


def pad2d(x, pad):
    """Zero-pad the two trailing axes symmetrically by `pad` on each side."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ShapeError("pad2d needs at least 2 trailing spatial axes")
    if pad < 0:
        raise ShapeError(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return x.copy()
    width = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    return np.pad(x, width)


def out_extent(size, window, stride):
    """Output length of a valid sliding window: floor((size-window)/stride)+1."""
    if window > size:
        raise ShapeError(f"window {window} exceeds extent {size}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    return (size - window) // stride + 1


def _window_view(x, kh, kw, stride):
    """Read-only strided view [B, C, kh, kw, Ho, Wo] of all window placements."""
    bsz, ch, h, w = x.shape
    ho = out_extent(h, kh, stride)
    wo = out_extent(w, kw, stride)
    s0, s1, s2, s3 = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(bsz, ch, kh, kw, ho, wo),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )


def im2col(x, kh, kw, stride):
    """Unfold [B,C,H,W] into columns [B, C*kh*kw, Ho*Wo].

    Row ordering matches a row-major reshape of an [O,C,kh,kw] kernel bank,
    so convolution reduces to one batched matmul against these columns.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    bsz = x.shape[0]
    view = _window_view(x, kh, kw, stride)
    ho, wo = view.shape[4], view.shape[5]
    return view.reshape(bsz, -1, ho * wo)


def col2im_add(cols, x_shape, kh, kw, stride):
    """Fold columns [B, C*kh*kw, Ho*Wo] back onto [B,C,H,W], summing overlaps.

    This is the adjoint of im2col. The accumulation runs as kh*kw strided
    slice additions rather than a scatter, which keeps it fast at any size.
    """
    bsz, ch, h, w = x_shape
    ho = out_extent(h, kh, stride)
    wo = out_extent(w, kw, stride)
    cols = cols.reshape(bsz, ch, kh, kw, ho, wo)
    out = np.zeros(x_shape, dtype=np.float64)
    for i in range(kh):
        ylim = i + stride * (ho - 1) + 1
        for j in range(kw):
            xlim = j + stride * (wo - 1) + 1
            out[:, :, i:ylim:stride, j:xlim:stride] += cols[:, :, i, j]
    return out


def _check_conv_operands(x, kernels, stride, batched):
    want = 4 if batched else 3
    if x.ndim != want:
        raise ShapeError(f"image must be rank {want}, got rank {x.ndim}")
    if kernels.ndim != 4:
        raise ShapeError(f"kernel bank must be rank 4, got rank {kernels.ndim}")
    ch = x.shape[1] if batched else x.shape[0]
    if kernels.shape[1] != ch:
        raise ShapeError(
            f"kernel channels {kernels.shape[1]} != image channels {ch}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")


def conv2d_batch(x, kernels, stride=1, bias=None):
    """Valid cross-correlation of [B,C,H,W] with [O,C,Kh,Kw] -> [B,O,Ho,Wo]."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    _check_conv_operands(x, kernels, stride, batched=True)
    nout, _, kh, kw = kernels.shape
    bsz, _, h, w = x.shape
    ho = out_extent(h, kh, stride)
    wo = out_extent(w, kw, stride)
    cols = im2col(x, kh, kw, stride)
    kmat = kernels.reshape(nout, -1)
    out = np.matmul(kmat, cols)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None]
    return out.reshape(bsz, nout, ho, wo)


def conv2d_valid(x, kernels, stride=1):
    """Valid cross-correlation of one image [C,H,W] with [O,C,Kh,Kw].

    out[o,y,x] = sum_{c,i,j} in[c, y*stride+i, x*stride+j] * K[o,c,i,j].
    """
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    _check_conv_operands(x, kernels, stride, batched=False)
    return conv2d_batch(x[None], kernels, stride)[0]


def pool2d_batch(x, window, stride, mode):
    """Pool [B,C,H,W] over window x window patches -> [B,C,Ho,Wo]."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"pool input must be rank 4, got rank {x.ndim}")
    if window < 1:
        raise ShapeError(f"window must be >= 1, got {window}")
    if mode not in ("max", "avg"):
        raise ShapeError(f"pool mode must be 'max' or 'avg', got {mode!r}")
    view = _window_view(x, window, window, stride)
    if mode == "max":
        return view.max(axis=(2, 3))
    return view.mean(axis=(2, 3))


def pool2d(x, window, stride, mode):
    """Pool one image [C,H,W]. mode is "max" or "avg"."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"pool input must be rank 3, got rank {x.ndim}")
    return pool2d_batch(x[None], window, stride, mode)[0]


def pool_argmax(x, window, stride):
    """Flat within-window argmax per output cell, [B,C,Ho,Wo] int64.

    Ties resolve to the first position in row-major window scan order.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    view = _window_view(x, window, window, stride)
    bsz, ch, _, _, ho, wo = view.shape
    flat = view.transpose(0, 1, 4, 5, 2, 3).reshape(bsz, ch, ho, wo, window * window)
    return flat.argmax(axis=-1)
