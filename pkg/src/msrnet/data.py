"""Image I/O, synthetic low-light degradation, patch extraction and
train/test manifests.

Images inside the library are float32 arrays of shape (3, H, W) in [0, 1].
On disk they are 8-bit RGB PNGs.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

PIPELINE_VERSION = "1:contrast>brightness>clamp>gamma"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm"}

# sampling ranges for the synthetic degradation, each uniform
CONTRAST_RANGE = (0.5, 0.9)
BRIGHTNESS_RANGE = (-0.2, 0.0)
GAMMA_RANGE = (1.5, 3.5)


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    return (rgb / 255.0).transpose(2, 0, 1).copy()


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, image: np.ndarray):
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got {image.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image).transpose(1, 2, 0), "RGB").save(path, format="PNG")


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass(frozen=True)
class DegradeParams:
    contrast: float
    brightness: float
    gamma: float
    seed: int

    @classmethod
    def sample(cls, seed: int) -> "DegradeParams":
        rng = np.random.default_rng(seed)
        return cls(contrast=float(rng.uniform(*CONTRAST_RANGE)),
                   brightness=float(rng.uniform(*BRIGHTNESS_RANGE)),
                   gamma=float(rng.uniform(*GAMMA_RANGE)),
                   seed=int(seed))


def degrade(hq: np.ndarray, p: DegradeParams) -> np.ndarray:
    """Lower contrast about mid-grey, shift brightness, clamp, then gamma."""
    x = (np.asarray(hq, dtype=np.float64) - 0.5) * p.contrast + 0.5 + p.brightness
    return (np.clip(x, 0.0, 1.0) ** p.gamma).astype(np.float32)


@dataclass
class ImagePair:
    hq_path: Path
    ll_path: Path
    degrade: DegradeParams
    split: str = "train"

    def load(self) -> tuple[np.ndarray, np.ndarray]:
        hq, ll = read_image(self.hq_path), read_image(self.ll_path)
        if hq.shape != ll.shape:
            raise ValueError(f"{self.hq_path} and {self.ll_path} differ in size")
        return hq, ll


# -- manifests -------------------------------------------------------------

def _record(pair: ImagePair, root: Path) -> dict:
    d = pair.degrade
    return {"hq": os.path.relpath(pair.hq_path, root), "ll": os.path.relpath(pair.ll_path, root),
            "contrast": d.contrast, "brightness": d.brightness, "gamma": d.gamma,
            "seed": d.seed, "split": pair.split, "pipeline_version": PIPELINE_VERSION}


def write_manifest(path, pairs: Iterable[ImagePair]) -> Path:
    path = Path(path)
    root = path.parent.resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for pair in pairs:
            fh.write(json.dumps(_record(pair, root), sort_keys=True) + "\n")
    return path


def read_manifest(path) -> list[ImagePair]:
    path = Path(path)
    root = path.parent.resolve()
    pairs = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            pairs.append(ImagePair(
                hq_path=root / r["hq"], ll_path=root / r["ll"],
                degrade=DegradeParams(r["contrast"], r["brightness"], r["gamma"], r["seed"]),
                split=r.get("split", "train")))
    return pairs


# -- synthesis ---------------------------------------------------------------

@dataclass
class SynthesisSummary:
    manifest: Path
    pairs: list
    skipped: int


def _child_seed(seed: int, parent: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, parent, k]).generate_state(1)[0])


def synthesize_dataset(hq_dir, out_dir, per_image: int = 10, seed: int = 0,
                       test_fraction: Optional[float] = 0.2) -> SynthesisSummary:
    """Write ``per_image`` degraded copies of every HQ image plus a manifest.

    Undecodable files are skipped and counted. With ``test_fraction`` set,
    parents are split into train/test via :func:`split_dataset`.
    """
    hq_dir, out_dir = Path(hq_dir), Path(out_dir)
    files = list_images(hq_dir) if hq_dir.is_dir() else []
    if per_image < 0:
        raise ValueError("per_image must be >= 0")
    pairs, skipped, usable = [], 0, 0
    for idx, path in enumerate(files):
        try:
            hq = read_image(path)
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped += 1
            continue
        usable += 1
        for k in range(per_image):
            params = DegradeParams.sample(_child_seed(seed, idx, k))
            ll_path = out_dir / "ll" / f"{path.stem}_{k:02d}.png"
            write_image(ll_path, degrade(hq, params))
            pairs.append(ImagePair(path.resolve(), ll_path.resolve(), params))
    if usable == 0:
        raise ValueError(f"no decodable images in {hq_dir} ({skipped} skipped)")
    if test_fraction is not None and pairs:
        train, test = split_dataset(pairs, test_fraction, seed)
        for p in test:
            p.split = "test"
        for p in train:
            p.split = "train"
    manifest = write_manifest(out_dir / "manifest.jsonl", pairs)
    if skipped:
        log.warning("%d undecodable file(s) skipped", skipped)
    return SynthesisSummary(manifest, pairs, skipped)


def split_dataset(pairs: list[ImagePair], test_fraction: float, seed: int = 0):
    """Split by HQ parent so all children of one source land on one side."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    parents = sorted({str(p.hq_path) for p in pairs})
    n_test = int(round(len(parents) * test_fraction))
    if n_test == 0 or n_test == len(parents):
        raise ValueError(f"fraction {test_fraction} of {len(parents)} parents leaves a side empty")
    order = np.random.default_rng(seed).permutation(len(parents))
    test_parents = {parents[i] for i in order[:n_test]}
    train = [p for p in pairs if str(p.hq_path) not in test_parents]
    test = [p for p in pairs if str(p.hq_path) in test_parents]
    return train, test


# -- patches -----------------------------------------------------------------

def extract_patches(pair: ImagePair, patch: int = 64, per_pair: int = 1, seed: int = 0,
                    images: Optional[tuple] = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Uniformly random aligned crops as ``(ll_patch, hq_patch)`` tuples.

    ``images`` may hold an already loaded ``(hq, ll)`` to skip disk reads.
    """
    hq, ll = images if images is not None else pair.load()
    _, h, w = hq.shape
    if h < patch or w < patch:
        log.warning("skipping %s: %dx%d smaller than patch %d", pair.hq_path, h, w, patch)
        return []
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, h - patch + 1, size=per_pair)
    cols = rng.integers(0, w - patch + 1, size=per_pair)
    return [(ll[:, r:r + patch, c:c + patch].copy(), hq[:, r:r + patch, c:c + patch].copy())
            for r, c in zip(rows, cols)]


def build_patch_dataset(pairs: list[ImagePair], patch: int, per_pair: int, seed: int = 0):
    """Stack patches from every pair into a :class:`~msrnet.nn.PatchDataset`."""
    from .nn import PatchDataset

    ll, hq = [], []
    for i, pair in enumerate(pairs):
        for a, b in extract_patches(pair, patch, per_pair, seed=_child_seed(seed, i, 0)):
            ll.append(a)
            hq.append(b)
    if not ll:
        raise ValueError("no patches could be extracted")
    return PatchDataset(np.stack(ll), np.stack(hq))
