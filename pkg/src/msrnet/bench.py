"""Wall-clock timing of full-image enhancement at several square sizes."""
from __future__ import annotations

import csv
import logging
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import MsrNet, enhance_image

log = logging.getLogger(__name__)

TABLE_SIZES = (500, 750, 1000)


def benchmark(model: MsrNet, sizes: Sequence[int] = TABLE_SIZES, repeat: int = 3,
              tile: Optional[int] = 256, seed: int = 0) -> list[dict]:
    """Time ``enhance_image`` on random ``size`` x ``size`` inputs.

    Each row carries mean and (population) standard deviation over
    ``repeat`` runs. A row whose mean is below the previous size's mean is
    flagged ``non_monotone`` rather than treated as an error.
    """
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        img = rng.random((3, size, size), dtype=np.float32)
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            enhance_image(img, model, tile=tile)
            times.append(time.perf_counter() - t0)
        rows.append({"size": int(size), "repeat": repeat, "mean_s": float(np.mean(times)),
                     "std_s": float(np.std(times)), "non_monotone": False})
    for prev, row in zip(rows, rows[1:]):
        if row["size"] > prev["size"] and row["mean_s"] < prev["mean_s"]:
            row["non_monotone"] = True
            log.warning("timing for %d px is below the %d px timing", row["size"], prev["size"])
    return rows


def write_benchmark_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["size", "repeat", "mean_s", "std_s", "non_monotone"])
        w.writeheader()
        w.writerows(rows)
    return path
