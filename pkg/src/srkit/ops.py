"""Forward and backward rules for every primitive the networks need.

Every op is a pure function: arrays in, arrays out, no hidden state. Each
``*_bwd`` implements the exact analytic adjoint of its forward and is
validated against central finite differences in the test suite and the
``gradcheck`` harness.

Determinism contract: accumulation orders are fixed (ascending channel,
then row, then column; 3x3 taps in ascending (di, dj) order), so identical
inputs produce bit-identical outputs run to run. ``conv1x1_fwd`` in
particular accumulates channels left to right and therefore matches a
naive per-element loop bit for bit.

Ops preserve the input dtype: float32 in production, float64 when a
finite-difference oracle reruns them on upcast copies.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .tensor import check_axis, check_nchw


# ---------------------------------------------------------------------------
# 1x1 convolution (single output channel, bias-free)
# ---------------------------------------------------------------------------

def conv1x1_fwd(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Compress channels: out[n,0,i,j] = sum_ch weight[ch] * x[n,ch,i,j].

    Products are rounded once per element, then accumulated strictly in
    ascending channel order (``add.accumulate`` is sequential, unlike the
    pairwise ``sum``), so the result is bit-identical to a scalar loop.
    """
    n, c, h, w = check_nchw(x)
    if weight.ndim != 1 or weight.shape[0] != c:
        raise DimensionError(
            f"weight: channel axis is {weight.shape}, expected ({c},)"
        )
    products = weight[None, :, None, None] * x
    return np.add.accumulate(products, axis=1)[:, c - 1 : c]


def conv1x1_bwd(
    x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of conv1x1_fwd.

    grad_x[n,ch,i,j]  = weight[ch] * grad_out[n,0,i,j]
    grad_weight[ch]   = sum_{n,i,j} x[n,ch,i,j] * grad_out[n,0,i,j]
    """
    n, c, h, w = check_nchw(x)
    check_nchw(grad_out, "grad_out")
    check_axis(grad_out.shape[0], n, "batch", "grad_out")
    check_axis(grad_out.shape[1], 1, "channel", "grad_out")
    check_axis(grad_out.shape[2], h, "height", "grad_out")
    check_axis(grad_out.shape[3], w, "width", "grad_out")
    grad_x = weight[None, :, None, None] * grad_out
    grad_w = np.tensordot(x, grad_out[:, 0], axes=([0, 2, 3], [0, 1, 2]))
    return grad_x, grad_w


# ---------------------------------------------------------------------------
# Bias-free linear layer
# ---------------------------------------------------------------------------

def linear_fwd(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Matrix product x @ weight.T for x (n, in) and weight (out, in)."""
    if x.ndim != 2 or weight.ndim != 2:
        raise DimensionError("linear expects rank-2 x and weight")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"x: input axis is {x.shape[1]}, expected {weight.shape[1]}"
        )
    return x @ weight.T


def linear_bwd(
    x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Standard matmul adjoints: grad_x = g @ W, grad_W = g.T @ x."""
    if grad_out.shape != (x.shape[0], weight.shape[0]):
        raise DimensionError(
            f"grad_out: shape is {grad_out.shape}, expected "
            f"({x.shape[0]}, {weight.shape[0]})"
        )
    return grad_out @ weight, grad_out.T @ x


# ---------------------------------------------------------------------------
# Softmax over the last axis of a matrix
# ---------------------------------------------------------------------------

def softmax_fwd(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    if logits.ndim != 2:
        raise DimensionError("softmax expects a rank-2 (n, p) matrix")
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax received non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """grad_logits = probs * (grad_out - <grad_out, probs>) per row."""
    if probs.shape != grad_out.shape:
        raise DimensionError(
            f"grad_out: shape is {grad_out.shape}, expected {probs.shape}"
        )
    inner = np.sum(grad_out * probs, axis=1, keepdims=True)
    return probs * (grad_out - inner)


# ---------------------------------------------------------------------------
# 3x3 convolution, padding 1, stride 1 or 2, bias-free
# ---------------------------------------------------------------------------

def _conv3x3_out_extent(extent: int, stride: int) -> int:
    return (extent + 2 - 3) // stride + 1


def _check_conv3x3(x: np.ndarray, weight: np.ndarray, stride: int):
    n, c, h, w = check_nchw(x)
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise DimensionError("weight must have shape (out, in, 3, 3)")
    check_axis(weight.shape[1], c, "channel", "weight")
    if stride not in (1, 2):
        raise ConfigError(f"stride must be 1 or 2, got {stride}")
    return n, c, h, w, weight.shape[0]


def conv3x3_fwd(x: np.ndarray, weight: np.ndarray, stride: int = 1) -> np.ndarray:
    """3x3 convolution with zero padding 1; taps accumulate in (di, dj) order."""
    n, c, h, w, o = _check_conv3x3(x, weight, stride)
    oh, ow = _conv3x3_out_extent(h, stride), _conv3x3_out_extent(w, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, o, oh, ow), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            xs = xp[:, :, di : di + (oh - 1) * stride + 1 : stride,
                    dj : dj + (ow - 1) * stride + 1 : stride]
            # (o,c) x (n,c,oh,ow) -> (o,n,oh,ow)
            t = np.tensordot(weight[:, :, di, dj], xs, axes=([1], [1]))
            out += t.transpose(1, 0, 2, 3)
    return out


def conv3x3_bwd(
    x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of conv3x3_fwd; scatter back through the same tap order."""
    n, c, h, w, o = _check_conv3x3(x, weight, stride)
    oh, ow = _conv3x3_out_extent(h, stride), _conv3x3_out_extent(w, stride)
    if grad_out.shape != (n, o, oh, ow):
        raise DimensionError(
            f"grad_out: shape is {grad_out.shape}, expected {(n, o, oh, ow)}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    grad_xp = np.zeros_like(xp)
    grad_w = np.empty_like(weight)
    for di in range(3):
        for dj in range(3):
            rows = slice(di, di + (oh - 1) * stride + 1, stride)
            cols = slice(dj, dj + (ow - 1) * stride + 1, stride)
            xs = xp[:, :, rows, cols]
            grad_w[:, :, di, dj] = np.tensordot(
                grad_out, xs, axes=([0, 2, 3], [0, 2, 3])
            )
            # (n,o,oh,ow) x (o,c) -> (n,oh,ow,c)
            t = np.tensordot(grad_out, weight[:, :, di, dj], axes=([1], [0]))
            grad_xp[:, :, rows, cols] += t.transpose(0, 3, 1, 2)
    return grad_xp[:, :, 1 : 1 + h, 1 : 1 + w], grad_w


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------

def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_bwd(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if x.shape != grad_out.shape:
        raise DimensionError(
            f"grad_out: shape is {grad_out.shape}, expected {x.shape}"
        )
    return grad_out * (x > 0)


# ---------------------------------------------------------------------------
# Global average pooling (n,c,h,w) -> (n,c)
# ---------------------------------------------------------------------------

def global_avgpool_fwd(x: np.ndarray) -> np.ndarray:
    check_nchw(x)
    return x.mean(axis=(2, 3), dtype=x.dtype)


def global_avgpool_bwd(x_shape: tuple[int, int, int, int], grad_out: np.ndarray) -> np.ndarray:
    n, c, h, w = x_shape
    if grad_out.shape != (n, c):
        raise DimensionError(
            f"grad_out: shape is {grad_out.shape}, expected {(n, c)}"
        )
    scale = np.asarray(1.0 / (h * w), dtype=grad_out.dtype)
    return np.broadcast_to((grad_out * scale)[:, :, None, None], x_shape).copy()


# ---------------------------------------------------------------------------
# Cross entropy with integrated log-softmax, mean reduction over the batch
# ---------------------------------------------------------------------------

def cross_entropy_fwd(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood; returns (loss, probs) with probs cached
    for the backward pass. Uses log-sum-exp with max subtraction."""
    if logits.ndim != 2:
        raise DimensionError("cross_entropy expects rank-2 logits")
    n = logits.shape[0]
    if labels.shape != (n,):
        raise DimensionError(f"labels: shape is {labels.shape}, expected ({n},)")
    if not np.all(np.isfinite(logits)):
        raise NumericError("cross_entropy received non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - lse
    loss = -log_probs[np.arange(n), labels].mean(dtype=logits.dtype)
    return float(loss), np.exp(log_probs)


def cross_entropy_bwd(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """grad_logits for a unit upstream gradient: (probs - onehot) / n."""
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    return grad * np.asarray(1.0 / n, dtype=probs.dtype)


# ---------------------------------------------------------------------------
# Elementwise add (residual), flatten / reshape
# ---------------------------------------------------------------------------

def add_fwd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return a + b


def flatten_fwd(x: np.ndarray) -> np.ndarray:
    """(n, c, h, w) -> (n, c*h*w), row-major."""
    check_nchw(x)
    return x.reshape(x.shape[0], -1)


def flatten_bwd(grad_out: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
    return grad_out.reshape(x_shape)


# ---------------------------------------------------------------------------
# Dropout: elementwise or channelwise (dropout2d), inverted 1/(1-p) scaling
# ---------------------------------------------------------------------------

def dropout_mask(
    shape: tuple[int, ...],
    p: float,
    rng: np.random.Generator,
    channelwise: bool,
    dtype=np.float32,
) -> np.ndarray:
    """Draw a keep/scale mask for a (n,c,h,w) map.

    Channelwise masks draw one uniform per (n, c) slice, in row-major
    (n, c) order; elementwise masks draw per element in (n,c,h,w) order.
    An entry is dropped when its uniform draw is < p; survivors carry the
    inverted scale 1/(1-p).
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout_p must be in [0, 1), got {p}")
    n, c = shape[0], shape[1]
    if p == 0.0:
        return np.ones(shape if not channelwise else (n, c, 1, 1), dtype=dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=dtype)
    if channelwise:
        keep = rng.random((n, c)) >= p
        return (keep.astype(dtype) * scale).reshape(n, c, 1, 1)
    keep = rng.random(shape) >= p
    return keep.astype(dtype) * scale


def dropout_apply(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Multiply by a previously drawn mask (broadcasts channel masks)."""
    return x * mask


def dropout_bwd(mask: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * mask
