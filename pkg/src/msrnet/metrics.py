"""SSIM, discrete entropy and angular colour error, plus report assembly.

All functions take (3, H, W) float images in [0, 1]; 2-D arrays are
treated as already-grey luminance.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.ndimage import correlate1d

BT601 = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def luminance(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) or (H, W) image, got {img.shape}")
    return np.tensordot(BT601, img, axes=1)


def _window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:-r, r:-r]


def _ssim_gray(a: np.ndarray, b: np.ndarray) -> float:
    g = _window_1d()
    if min(a.shape) < len(g):
        raise ValueError(f"image {a.shape} smaller than the {len(g)}x{len(g)} SSIM window")
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, per_channel: bool = False) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), data
    range 1, averaged over valid window positions.

    Computed on BT.601 luminance, or as the mean over RGB channels with
    ``per_channel``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if per_channel and a.ndim == 3:
        return float(np.mean([_ssim_gray(a[c], b[c]) for c in range(a.shape[0])]))
    return _ssim_gray(luminance(a), luminance(b))


def discrete_entropy(img: np.ndarray) -> float:
    """Shannon entropy (bits) of the 256-bin histogram of 8-bit grey levels."""
    levels = np.round(np.clip(luminance(img), 0.0, 1.0) * 255.0).astype(np.int64)
    counts = np.bincount(levels.ravel(), minlength=256)
    p = counts[counts > 0] / levels.size
    return float(max(0.0, -np.sum(p * np.log2(p))))


def angular_error(y: np.ndarray, yhat: np.ndarray, mode: str = "global") -> float:
    """Angle in degrees between ground truth and result.

    ``global`` treats each image as one flattened vector; ``perpixel``
    averages the RGB-vector angle over pixels, skipping pixels where
    either vector is zero.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"dimension mismatch: {y.shape} vs {yhat.shape}")
    if mode == "global":
        ny, nh = np.linalg.norm(y), np.linalg.norm(yhat)
        if ny == 0 or nh == 0:
            raise ValueError("angular error undefined for a zero-norm image")
        cos = float(np.dot(y.ravel(), yhat.ravel())) / (ny * nh)
        return math.degrees(math.acos(min(1.0, max(-1.0, cos))))
    if mode == "perpixel":
        a = y.reshape(y.shape[0], -1)
        b = yhat.reshape(yhat.shape[0], -1)
        na, nb = np.linalg.norm(a, axis=0), np.linalg.norm(b, axis=0)
        ok = (na > 0) & (nb > 0)
        if not ok.any():
            raise ValueError("no pixel with two non-zero colour vectors")
        cos = np.sum(a[:, ok] * b[:, ok], axis=0) / (na[ok] * nb[ok])
        return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).mean())
    raise ValueError(f"mode must be 'global' or 'perpixel', got {mode!r}")


# -- reports -----------------------------------------------------------------

COLUMNS = ("ssim", "entropy", "angular_deg")


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict:
        out = {}
        for col in COLUMNS:
            vals = [r[col] for r in self.per_image if r.get(col) is not None]
            out[col] = float(np.mean(vals)) if vals else None
        out["count"] = len(self.per_image)
        out["niqe"] = None  # not implemented
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", *COLUMNS])
            for r in self.per_image:
                w.writerow([r["id"]] + ["" if r.get(c) is None else repr(r[c]) for c in COLUMNS])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"aggregate": self.aggregate, "config": self.config,
                                    "per_image": self.per_image}, indent=2, sort_keys=True))
        return path


def evaluate(pairs: Iterable, produce: Callable, angular_mode: str = "global",
             config: Optional[dict] = None,
             ground_truth: Optional[Callable] = None) -> MetricReport:
    """Score ``produce(pair)`` against each pair's ground truth.

    ``produce`` returns the image under test (enhanced output, or the
    low-light input for the baseline column). ``ground_truth(pair)``
    defaults to reading ``pair.hq_path``; when it returns None or the file
    is missing, the GT-based metrics are recorded as absent.
    """
    from .data import read_image

    def default_gt(pair):
        p = Path(pair.hq_path)
        return read_image(p) if p.exists() else None

    ground_truth = ground_truth or default_gt
    report = MetricReport(config=dict(config or {}))
    for pair in pairs:
        out = np.asarray(produce(pair), dtype=np.float64)
        gt = ground_truth(pair)
        row = {"id": Path(pair.ll_path).stem, "entropy": discrete_entropy(out),
               "ssim": None, "angular_deg": None}
        if gt is not None:
            row["ssim"] = ssim(gt, out)
            row["angular_deg"] = angular_error(gt, out, angular_mode)
        report.per_image.append(row)
    return report
