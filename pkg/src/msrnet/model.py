"""The trainable enhancement network: multi-scale log transform, a learned
difference-of-convolution block and a 1x1 colour-restoration layer.

Layer shapes (out, in, kh, kw), ReLU only where marked::

    W-1  (width, 3n, 1, 1)  + ReLU
    W0   (3, width, 3, 3)
    W1   (width, 3, 3, 3)   + ReLU
    Wm   (width, width, 3, 3) + ReLU,   m = 2..K
    WK+1 (3, width*K, 1, 1)
    WK+2 (3, 3, 1, 1)
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import Parameter, loss_mse_l2
from .tensor import ConvKernel, ShapeError


@dataclass
class MsrNetConfig:
    n: int = 4
    v: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 300.0])
    K: int = 10
    width: int = 32
    kernel_hidden: int = 3
    patch: int = 64

    def __post_init__(self):
        self.v = [float(s) for s in self.v]
        if len(self.v) != self.n:
            raise ValueError(f"len(v)={len(self.v)} does not match n={self.n}")
        if any(s <= 0 for s in self.v):
            raise ValueError(f"log-transform scales must be positive: {self.v}")
        if self.K < 1 or self.width < 1:
            raise ValueError("K and width must be >= 1")
        if self.kernel_hidden % 2 == 0:
            raise ValueError("kernel_hidden must be odd")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def receptive_radius(self) -> int:
        """Pixels of context on each side that influence one output pixel."""
        return (self.K + 1) * (self.kernel_hidden // 2)

    def layer_shapes(self) -> dict:
        c, w, k = 3, self.width, self.kernel_hidden
        shapes = {"W-1": (w, 3 * self.n, 1, 1), "W0": (c, w, k, k), "W1": (w, c, k, k)}
        for m in range(2, self.K + 1):
            shapes[f"W{m}"] = (w, w, k, k)
        shapes[f"W{self.K + 1}"] = (c, w * self.K, 1, 1)
        shapes[f"W{self.K + 2}"] = (c, c, 1, 1)
        return shapes


def multi_log(x: np.ndarray, v) -> np.ndarray:
    """Concatenate ln(1 + v_j x) / ln(1 + v_j) over scales along channels."""
    return np.concatenate(
        [(np.log1p(s * x) / np.log1p(s)).astype(x.dtype) for s in v], axis=1)


class MsrNet:
    def __init__(self, config: Optional[MsrNetConfig] = None, seed: int = 0,
                 dtype=np.float32, init: str = "he"):
        self.config = config or MsrNetConfig()
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params: dict[str, Parameter] = {}
        for idx in self.layer_ids():
            shape = self.config.layer_shapes()[f"W{idx}"]
            if init == "he":
                fan_in = shape[1] * shape[2] * shape[3]
                w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
            elif init == "zeros":
                w = np.zeros(shape)
            else:
                raise ValueError(f"unknown init {init!r}")
            self.params[f"W{idx}"] = Parameter(f"W{idx}", w.astype(self.dtype))
            self.params[f"b{idx}"] = Parameter(f"b{idx}", np.zeros(shape[0], self.dtype))
        self._cache = None
        # ReLU on/off patterns of the last forward, and an optional override
        # that replaces every ReLU by a fixed 0/1 gate (gradient checking)
        self.last_masks: dict = {}
        self.frozen_masks: Optional[dict] = None

    def layer_ids(self) -> list[int]:
        return list(range(-1, self.config.K + 3))

    def parameters(self) -> list[Parameter]:
        return [self.params[k] for k in sorted(self.params)]

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def kernel(self, idx: int) -> ConvKernel:
        return ConvKernel(self.params[f"W{idx}"].value, self.params[f"b{idx}"].value)

    def astype(self, dtype) -> "MsrNet":
        """Copy of the network with parameters (and optimizer state) cast."""
        other = MsrNet.__new__(MsrNet)
        other.config = self.config
        other.dtype = np.dtype(dtype)
        other.params = {
            k: Parameter(p.name, p.value.astype(dtype), p.grad.astype(dtype),
                         p.adam_m.astype(dtype), p.adam_v.astype(dtype), p.step_count)
            for k, p in self.params.items()}
        other._cache = None
        other.last_masks, other.frozen_masks = {}, None
        return other

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    # -- forward ---------------------------------------------------------

    def _conv(self, x, idx):
        return T.conv2d(x, self.kernel(idx), "same", accumulate=self.dtype)

    def _relu(self, a, key):
        if self.frozen_masks is not None:
            return a * self.frozen_masks[key]
        self.last_masks[key] = a > 0
        return T.relu(a)

    def _check_input(self, x):
        T.check_tensor(x)
        if x.shape[1] != 3:
            raise ShapeError(f"expected 3 input channels, got {x.shape[1]}")
        return x.astype(self.dtype, copy=False)

    def f1(self, x, cache=None):
        x = self._check_input(x)
        m = multi_log(x, self.config.v)
        a = self._conv(m, -1)
        h = self._relu(a, -1)
        x1 = self._conv(h, 0)
        if cache is not None:
            cache.update(m=m, a_m1=a, h_m1=h)
        return x1

    def f2(self, x1, cache=None):
        K = self.config.K
        hs, pre = [], []
        h = x1
        for m in range(1, K + 1):
            a = self._conv(h, m)
            pre.append(a)
            h = self._relu(a, m)
            hs.append(h)
        hcat = T.concat_channels(hs)
        h_out = self._conv(hcat, K + 1)
        if cache is not None:
            cache.update(x1=x1, pre=pre, hs=hs, hcat=hcat)
        return T.sub(x1, h_out)

    def f3(self, x2, cache=None):
        if cache is not None:
            cache["x2"] = x2
        return self._conv(x2, self.config.K + 2)

    def forward(self, x: np.ndarray, keep_cache: bool = False) -> np.ndarray:
        """Raw network output; no clamping to [0, 1]."""
        cache = {} if keep_cache else None
        y = self.f3(self.f2(self.f1(x, cache), cache), cache)
        self._cache = cache
        return y

    __call__ = forward

    # -- backward --------------------------------------------------------

    def _conv_back(self, x, idx, g):
        gx, gw, gb = T.conv2d_backward(x, self.kernel(idx), g, "same",
                                       accumulate=self.dtype)
        self.params[f"W{idx}"].grad += gw
        self.params[f"b{idx}"].grad += gb
        return gx

    def backward(self, grad_out: np.ndarray):
        """Accumulate parameter gradients for the last ``forward(keep_cache=True)``."""
        c = self._cache
        if c is None:
            raise RuntimeError("backward() needs a preceding forward(..., keep_cache=True)")
        K = self.config.K
        g_x2 = self._conv_back(c["x2"], K + 2, grad_out)
        # X2 = X1 - H_{K+1}
        g_x1, g_hout = T.sub_backward(g_x2)
        g_hcat = self._conv_back(c["hcat"], K + 1, g_hout)
        g_hs = T.split_channels(g_hcat, [self.config.width] * K)
        g_h = None
        for m in range(K, 0, -1):
            g = g_hs[m - 1] if g_h is None else g_hs[m - 1] + g_h
            g = self._relu_back(c["pre"][m - 1], g, m)
            h_in = c["x1"] if m == 1 else c["hs"][m - 2]
            g_h = self._conv_back(h_in, m, g)
        g_x1 = g_x1 + g_h
        g_hm1 = self._conv_back(c["h_m1"], 0, g_x1)
        g_a = self._relu_back(c["a_m1"], g_hm1, -1)
        self._conv_back(c["m"], -1, g_a)

    def _relu_back(self, a, g, key):
        if self.frozen_masks is not None:
            return g * self.frozen_masks[key]
        return T.relu_backward(a, g)

    def forward_backward(self, x: np.ndarray, y: np.ndarray, lam: float = 0.0) -> float:
        """Zero grads, run forward and backward; return the regularized loss."""
        self.zero_grad()
        pred = self.forward(x, keep_cache=True)
        loss, g = loss_mse_l2(pred, y.astype(self.dtype, copy=False),
                              self.parameters(), lam)
        self.backward(g)
        self._cache = None
        return loss

    # -- inference -------------------------------------------------------

    def enhance(self, image: np.ndarray, tile: Optional[int] = None,
                overlap: int = 16) -> np.ndarray:
        """Enhance one CHW image in [0, 1]; see :func:`enhance_image`."""
        return enhance_image(image, self, tile=tile, overlap=overlap)


def _ramp(length: int, lo_blend: int, hi_blend: int) -> np.ndarray:
    w = np.ones(length)
    if lo_blend:
        w[:lo_blend] = np.arange(1, lo_blend + 1) / (lo_blend + 1)
    if hi_blend:
        w[length - hi_blend:] = np.arange(hi_blend, 0, -1) / (hi_blend + 1)
    return w


def _tile_starts(size: int, tile: int, overlap: int) -> list[int]:
    """Fewest tiles that overlap by at least ``overlap``, spread evenly."""
    if tile >= size:
        return [0]
    count = -(-(size - overlap) // (tile - overlap))
    return [round(i * (size - tile) / (count - 1)) for i in range(count)]


def enhance_image(image: np.ndarray, model: MsrNet, tile: Optional[int] = None,
                  overlap: int = 16) -> np.ndarray:
    """Run the network on a single (3, H, W) image and clamp to [0, 1].

    With ``tile`` set, the image is cut into ``tile``-sized blocks that
    overlap by ``overlap`` pixels. Each block is evaluated with a halo of
    the network's receptive radius so its own pixels are exact, and blocks
    are blended with linear weights across the overlap.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got {image.shape}")
    x = image[None].astype(model.dtype, copy=False)
    _, _, h, w = x.shape
    if tile is None or (tile >= h and tile >= w):
        out = model.forward(x)[0]
        return np.clip(out, 0.0, 1.0)
    if overlap < 0 or overlap >= tile:
        raise ValueError(f"overlap must be in [0, tile), got {overlap}")
    halo = model.config.receptive_radius
    acc = np.zeros((3, h, w), np.float64)
    wsum = np.zeros((h, w), np.float64)
    ys, xs = _tile_starts(h, tile, overlap), _tile_starts(w, tile, overlap)
    for i, y0 in enumerate(ys):
        y1 = min(y0 + tile, h)
        wy = _ramp(y1 - y0, overlap if i > 0 else 0, overlap if i < len(ys) - 1 else 0)
        for j, x0 in enumerate(xs):
            x1 = min(x0 + tile, w)
            wx = _ramp(x1 - x0, overlap if j > 0 else 0, overlap if j < len(xs) - 1 else 0)
            py0, px0 = max(y0 - halo, 0), max(x0 - halo, 0)
            py1, px1 = min(y1 + halo, h), min(x1 + halo, w)
            out = model.forward(x[:, :, py0:py1, px0:px1])[0]
            core = out[:, y0 - py0:y1 - py0, x0 - px0:x1 - px0]
            wt = np.outer(wy, wx)
            acc[:, y0:y1, x0:x1] += core * wt
            wsum[y0:y1, x0:x1] += wt
    return np.clip(acc / wsum, 0.0, 1.0).astype(model.dtype)
