"""Small stand-in HQ corpus cut from the colour photographs bundled with
scikit-image, for demos and tests when no curated HQ set is at hand."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import write_image

SOURCES = ("astronaut.png", "chelsea.png", "coffee.png", "rocket.jpg",
           "motorcycle_left.png", "ihc.png")


def load_sources() -> list[np.ndarray]:
    """The source photographs as (3, H, W) float32 arrays in [0, 1]."""
    import skimage
    from PIL import Image

    root = Path(skimage.__file__).parent / "data"
    out = []
    for name in SOURCES:
        with Image.open(root / name) as im:
            out.append(np.asarray(im.convert("RGB"), dtype=np.float32).transpose(2, 0, 1) / 255)
    return out


def make_hq_corpus(out_dir, count: int = 60, size: int = 96, seed: int = 0) -> list[Path]:
    """Write ``count`` random ``size`` x ``size`` crops as PNGs, cycling
    through the source photographs."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    sources = load_sources()
    paths = []
    for i in range(count):
        img = sources[i % len(sources)]
        _, h, w = img.shape
        r, c = rng.integers(0, h - size + 1), rng.integers(0, w - size + 1)
        p = out_dir / f"hq_{i:03d}.png"
        write_image(p, img[:, r:r + size, c:c + size])
        paths.append(p)
    return paths
