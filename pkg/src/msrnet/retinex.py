"""Classical single/multi-scale Retinex in the log domain, and the same
multi-scale operator rebuilt as a cascade of Gaussian convolution layers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import tensor as T
from .tensor import ConvKernel

LOG_FLOOR = 1.0 / 255.0


def three_sigma(c: float) -> int:
    return int(math.ceil(3 * c))


@dataclass(frozen=True)
class GaussianSurround:
    """Normalised, truncated Gaussian kernel of standard deviation ``c``.

    The 2-D kernel is the outer product of :attr:`kernel_1d` with itself,
    which is exactly the sampled 2-D Gaussian renormalised to sum 1.
    """

    c: float
    radius: int
    kernel_1d: np.ndarray = field(repr=False)

    @property
    def kernel(self) -> np.ndarray:
        return np.outer(self.kernel_1d, self.kernel_1d)


def gaussian_kernel(c: float, radius: Optional[int] = None) -> GaussianSurround:
    if not c > 0:
        raise ValueError(f"Gaussian standard deviation must be positive, got {c}")
    radius = three_sigma(c) if radius is None else int(radius)
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-x * x / (2.0 * c * c))
    k /= k.sum()
    return GaussianSurround(float(c), radius, k)


def blur(x: np.ndarray, surround: GaussianSurround) -> np.ndarray:
    """Separable zero-padded ``same`` correlation of an NCHW array.

    Taps further from the centre than the image extent can only ever meet
    padding zeros, so they are dropped; the result is identical to the
    full-radius convolution.
    """
    T.check_tensor(x)
    out = np.asarray(x, dtype=np.float64)
    for axis in (2, 3):
        r = min(surround.radius, out.shape[axis] - 1)
        k = surround.kernel_1d[surround.radius - r: surround.radius + r + 1]
        if r == 0:
            out = out * k[0]
            continue
        shape = [1, 1, 1, 1]
        shape[axis] = k.size
        # flip so the convolution below is a correlation with k
        out = fftconvolve(out, k[::-1].reshape(shape), mode="same", axes=axis)
    return out


def safe_log(image: np.ndarray, log_floor: float = LOG_FLOOR) -> np.ndarray:
    if log_floor <= 0:
        raise ValueError("log_floor must be positive")
    return np.log(np.maximum(np.asarray(image, dtype=np.float64), log_floor))


def ssr(image: np.ndarray, surround: GaussianSurround,
        log_floor: float = LOG_FLOOR) -> np.ndarray:
    """Single-scale Retinex: log I minus its Gaussian-blurred log."""
    log_i = safe_log(T.check_tensor(image), log_floor)
    return log_i - blur(log_i, surround)


@dataclass
class MsrScales:
    scales: list  # (c_n, w_n) pairs

    def __post_init__(self):
        self.scales = [(float(c), float(w)) for c, w in self.scales]
        if not self.scales:
            raise ValueError("at least one scale is required")
        cs = self.stds
        if any(b <= a for a, b in zip(cs, cs[1:])):
            raise ValueError(f"scale standard deviations must increase strictly: {cs}")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"scale weights must sum to 1, got {sum(self.weights)}")

    @property
    def stds(self) -> list:
        return [c for c, _ in self.scales]

    @property
    def weights(self) -> list:
        return [w for _, w in self.scales]

    @classmethod
    def equal(cls, stds: Sequence[float]) -> "MsrScales":
        return cls([(c, 1.0 / len(stds)) for c in stds])


DEFAULT_SCALES = (15.0, 80.0, 250.0)


def default_scales() -> MsrScales:
    return MsrScales.equal(DEFAULT_SCALES)


def msr(image: np.ndarray, scales: Optional[MsrScales] = None,
        log_floor: float = LOG_FLOOR,
        radius_rule: Callable[[float], int] = three_sigma) -> np.ndarray:
    """Weighted sum of single-scale Retinex outputs."""
    scales = scales or default_scales()
    log_i = safe_log(T.check_tensor(image), log_floor)
    out = np.zeros_like(log_i)
    for c, w in scales.scales:
        out += w * (log_i - blur(log_i, gaussian_kernel(c, radius_rule(c))))
    return out


@dataclass
class MsrCascade:
    """Multi-scale Retinex as a feedforward network.

    Stage ``n`` blurs the previous stage's output with a Gaussian of variance
    ``c_n**2 - c_{n-1}**2``, so its output is the blur at ``c_n``. The taps
    after every stage are concatenated, mixed by a fixed 1x1 convolution
    holding the scale weights, and subtracted from the log image.

    With ``extend_canvas`` (default) the log image is first zero-extended
    by the summed radii of all but the last stage, so light blurred past
    the image border by one stage is still seen by the next one; the
    cascade then matches the direct operator on every pixel. Without it
    each stage is a plain ``same`` convolution on the image grid and the
    match holds only away from the border.
    """

    stages: list
    weights: list
    extend_canvas: bool = True

    @property
    def mix(self) -> ConvKernel:
        n = len(self.stages)
        w = np.zeros((3, 3 * n, 1, 1))
        for s, wt in enumerate(self.weights):
            for ch in range(3):
                w[ch, 3 * s + ch] = wt
        return ConvKernel(w, np.zeros(3))

    @property
    def margin(self) -> int:
        return sum(s.radius for s in self.stages[:-1]) if self.extend_canvas else 0

    def taps(self, log_image: np.ndarray) -> list:
        """Blurred log image after each stage, cropped to the image grid."""
        pad = self.margin
        _, _, h, w = log_image.shape
        cur = np.pad(log_image, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        out = []
        for s in self.stages:
            cur = blur(cur, s)
            out.append(cur[:, :, pad:pad + h, pad:pad + w])
        return out

    def forward(self, image: np.ndarray, log_floor: float = LOG_FLOOR) -> np.ndarray:
        log_i = safe_log(T.check_tensor(image), log_floor)
        if log_i.shape[1] != 3:
            raise T.ShapeError("cascade expects 3-channel images")
        surround = T.conv2d(T.concat_channels(self.taps(log_i)), self.mix, "same")
        return T.sub(log_i, surround)

    __call__ = forward


def build_msr_cascade(scales: Optional[MsrScales] = None,
                      radius_rule: Callable[[float], int] = three_sigma,
                      extend_canvas: bool = True) -> MsrCascade:
    scales = scales or default_scales()
    stages, prev = [], 0.0
    for c in scales.stds:
        var = c * c - prev * prev
        if var <= 0:
            raise ValueError("cascade needs strictly increasing scales")
        step = math.sqrt(var)
        stages.append(gaussian_kernel(step, radius_rule(step)))
        prev = c
    return MsrCascade(stages, scales.weights, extend_canvas)


def crf_baseline(msr_out: np.ndarray, original: np.ndarray, alpha: float = 125.0,
                 beta: float = 46.0, log_floor: float = LOG_FLOOR) -> np.ndarray:
    """Chromaticity colour restoration: beta*(log(alpha*I_i) - log sum_j I_j)
    multiplied into each channel of the Retinex output."""
    if original.shape[1] != 3 or msr_out.shape != original.shape:
        raise T.ShapeError(f"need matching 3-channel tensors, got {msr_out.shape}, "
                           f"{original.shape}")
    i = np.maximum(np.asarray(original, dtype=np.float64), log_floor)
    gain = beta * (np.log(alpha * i) - np.log(i.sum(axis=1, keepdims=True)))
    return gain * msr_out


def postprocess_display(x: np.ndarray, clip_percent: float = 1.0) -> np.ndarray:
    """Percentile-clip each image of a batch and stretch it to [0, 1].

    A constant image maps to 0.5 everywhere.
    """
    if not 0 <= clip_percent <= 10:
        raise ValueError(f"clip_percent must be in [0, 10], got {clip_percent}")
    T.check_tensor(x)
    out = np.empty(x.shape, dtype=np.float64)
    for i, img in enumerate(np.asarray(x, dtype=np.float64)):
        lo, hi = np.percentile(img, [clip_percent, 100 - clip_percent])
        if hi <= lo:
            out[i] = 0.5
        else:
            out[i] = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    return out
