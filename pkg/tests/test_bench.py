import csv
import logging

import numpy as np

from msrnet import bench
from msrnet.model import MsrNet, MsrNetConfig


def test_rows_and_csv(tmp_path):
    net = MsrNet(MsrNetConfig(n=1, v=[300], K=1, width=2))
    rows = bench.benchmark(net, sizes=(16, 24, 32), repeat=2, tile=None)
    assert [r["size"] for r in rows] == [16, 24, 32]
    assert all(r["mean_s"] > 0 and r["std_s"] >= 0 for r in rows)
    out = list(csv.DictReader(open(bench.write_benchmark_csv(rows, tmp_path / "b.csv"))))
    assert len(out) == 3 and set(out[0]) == {"size", "repeat", "mean_s", "std_s",
                                             "non_monotone"}


def test_non_monotone_is_flagged_not_fatal(monkeypatch, caplog):
    clock = iter([0.0, 2.0, 0.0, 1.0])  # the larger size runs faster
    monkeypatch.setattr(bench.time, "perf_counter", lambda: next(clock))
    monkeypatch.setattr(bench, "enhance_image", lambda *a, **k: None)
    with caplog.at_level(logging.WARNING):
        rows = bench.benchmark(None, sizes=(8, 16), repeat=1)
    assert [r["non_monotone"] for r in rows] == [False, True]
    assert "below" in caplog.text


def test_table_sizes():
    assert bench.TABLE_SIZES == (500, 750, 1000)
    assert np.all(np.diff(bench.TABLE_SIZES) > 0)
