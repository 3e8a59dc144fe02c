"""Dense NCHW tensor primitives with hand-written gradients.

Tensors are plain ``numpy.ndarray`` objects of shape (batch, channels,
height, width), stored as float32. Every reduction (convolution, bias
gradient) accumulates in ``accumulate`` precision, float64 by default, and
casts back to the storage dtype of the inputs.

Convolution is cross-correlation (no kernel flip) everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible with an operation."""


def check_tensor(x: np.ndarray, name: str = "input") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D NCHW array, got shape {np.shape(x)}")
    if x.size == 0:
        raise ShapeError(f"{name} is empty: shape {x.shape}")
    return x


@dataclass
class ConvKernel:
    """Convolution weights (out, in, kh, kw) and per-output-channel bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"weights must be 4-D, got {self.weights.shape}")
        out_c, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel sides must be odd, got {kh}x{kw}")
        if self.bias.shape != (out_c,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({out_c},)")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def identity(cls, channels: int, dtype=np.float32) -> "ConvKernel":
        w = np.eye(channels, dtype=dtype).reshape(channels, channels, 1, 1)
        return cls(w, np.zeros(channels, dtype=dtype))


def _pad_amounts(kernel_shape, padding: str) -> tuple[int, int]:
    kh, kw = kernel_shape[-2:]
    if padding == "same":
        return (kh - 1) // 2, (kw - 1) // 2
    if padding == "valid":
        return 0, 0
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Patches of an already padded (N, C, H, W) array as (C*kh*kw, N*Ho*Wo)."""
    n, c, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {(h, w)} smaller than kernel {(kh, kw)}")
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    xt = x.transpose(1, 0, 2, 3)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + ho, j:j + wo]
    return cols.reshape(c * kh * kw, n * ho * wo), ho, wo


def _correlate(x: np.ndarray, w: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Multi-channel cross-correlation, no bias. Returns (N, O, Ho, Wo)."""
    o, c, kh, kw = w.shape
    n = x.shape[0]
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if kh == 1 and kw == 1:
        ho, wo = x.shape[2:]
        cols = x.transpose(1, 0, 2, 3).reshape(c, -1)
    else:
        cols, ho, wo = _im2col(x, kh, kw)
    out = w.reshape(o, -1) @ cols  # O, N*Ho*Wo
    return out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3)


def conv2d(x: np.ndarray, kernel: ConvKernel, padding: str = "same",
           accumulate=np.float64) -> np.ndarray:
    """Cross-correlate ``x`` with ``kernel`` and add the bias.

    ``same`` zero-pads by (kh-1)/2, (kw-1)/2 so the spatial size is kept;
    ``valid`` shrinks it by kh-1, kw-1.
    """
    check_tensor(x)
    if x.shape[1] != kernel.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, kernel expects {kernel.in_channels}")
    ph, pw = _pad_amounts(kernel.weights.shape, padding)
    out_dtype = np.result_type(x.dtype, kernel.weights.dtype)
    out = _correlate(x.astype(accumulate, copy=False),
                     kernel.weights.astype(accumulate, copy=False), ph, pw)
    out += kernel.bias.astype(accumulate)[None, :, None, None]
    return np.ascontiguousarray(out, dtype=out_dtype)


def conv2d_backward(x: np.ndarray, kernel: ConvKernel, grad_out: np.ndarray,
                    padding: str = "same", accumulate=np.float64):
    """Gradients of ``conv2d(x, kernel, padding)`` given the output gradient.

    Returns ``(grad_input, grad_weights, grad_bias)``.
    """
    check_tensor(x)
    check_tensor(grad_out, "grad_out")
    o, c, kh, kw = kernel.weights.shape
    ph, pw = _pad_amounts(kernel.weights.shape, padding)
    n, _, h, w = x.shape
    expected = (n, o, h + 2 * ph - kh + 1, w + 2 * pw - kw + 1)
    if x.shape[1] != c or grad_out.shape != expected:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} inconsistent with forward {expected}")
    g = grad_out.astype(accumulate, copy=False)
    xa = x.astype(accumulate, copy=False)
    wa = kernel.weights.astype(accumulate, copy=False)

    grad_bias = g.sum(axis=(0, 2, 3))
    g_rows = g.transpose(1, 0, 2, 3).reshape(o, -1)  # O, N*Ho*Wo
    if kh == 1 and kw == 1 and ph == 0 and pw == 0:
        cols = xa.transpose(1, 0, 2, 3).reshape(c, -1)
    else:
        xp = np.pad(xa, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xa
        cols, _, _ = _im2col(xp, kh, kw)
    grad_w = (g_rows @ cols.T).reshape(o, c, kh, kw)

    # full correlation of grad_out with the flipped, transposed kernel
    w_t = wa[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    grad_x = _correlate(g, w_t, kh - 1 - ph, kw - 1 - pw)

    dtype = x.dtype
    return (np.ascontiguousarray(grad_x, dtype=dtype),
            grad_w.astype(kernel.weights.dtype),
            grad_bias.astype(kernel.bias.dtype))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def concat_channels(inputs: Sequence[np.ndarray]) -> np.ndarray:
    if not inputs:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = check_tensor(inputs[0])
    for t in inputs[1:]:
        check_tensor(t)
        if t.shape[0] != ref.shape[0] or t.shape[2:] != ref.shape[2:]:
            raise ShapeError(f"cannot concat {t.shape} with {ref.shape}")
    return np.concatenate(inputs, axis=1)


def split_channels(x: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    """Inverse of :func:`concat_channels`; also its backward pass."""
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"sizes {list(sizes)} do not sum to {x.shape[1]} channels")
    bounds = np.cumsum([0, *sizes])
    return [x[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a - b


def scale(a: np.ndarray, alpha: float) -> np.ndarray:
    return (a * alpha).astype(a.dtype, copy=False)


def add_backward(grad_out):
    return grad_out, grad_out


def sub_backward(grad_out):
    return grad_out, -grad_out


def scale_backward(grad_out, alpha: float):
    return (grad_out * alpha).astype(grad_out.dtype, copy=False)
