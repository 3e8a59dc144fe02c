import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from msrnet import metrics as M


def direct_ssim(a, b):
    """Window-by-window SSIM written straight from the definition."""
    ya = 0.299 * a[0] + 0.587 * a[1] + 0.114 * a[2]
    yb = 0.299 * b[0] + 0.587 * b[1] + 0.114 * b[2]
    x = np.arange(11) - 5.0
    w = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * 1.5 ** 2))
    w /= w.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for i in range(ya.shape[0] - 10):
        for j in range(ya.shape[1] - 10):
            pa, pb = ya[i:i + 11, j:j + 11], yb[i:i + 11, j:j + 11]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va, vb = np.sum(w * (pa - ma) ** 2), np.sum(w * (pb - mb) ** 2)
            cov = np.sum(w * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2)
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def fixed_pair():
    rng = np.random.default_rng(21)
    a = rng.random((3, 32, 32))
    b = np.clip(0.8 * a + 0.1 * rng.standard_normal(a.shape) + 0.05, 0, 1)
    return a, b


def test_ssim_identity_and_symmetry(rng):
    a = rng.random((3, 20, 24))
    b = rng.random((3, 20, 24))
    assert M.ssim(a, a) == 1.0
    assert abs(M.ssim(a, b) - M.ssim(b, a)) < 1e-9
    assert M.ssim(a, b) < 1


def test_ssim_direct_oracle():
    a, b = fixed_pair()
    assert abs(M.ssim(a, b) - direct_ssim(a, b)) < 1e-6


def test_ssim_reference_library():
    skm = pytest.importorskip("skimage.metrics")
    a, b = fixed_pair()
    ya, yb = M.luminance(a), M.luminance(b)
    ref = skm.structural_similarity(ya, yb, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, data_range=1.0)
    assert abs(M.ssim(a, b) - ref) < 1e-9


def test_ssim_errors(rng):
    with pytest.raises(ValueError):
        M.ssim(rng.random((3, 20, 20)), rng.random((3, 20, 21)))
    with pytest.raises(ValueError):
        M.ssim(rng.random((3, 8, 8)), rng.random((3, 8, 8)))


def test_ssim_per_channel_flag(rng):
    a = rng.random((3, 16, 16))
    b = rng.random((3, 16, 16))
    expect = np.mean([M.ssim(a[c], b[c]) for c in range(3)])
    assert M.ssim(a, b, per_channel=True) == pytest.approx(expect, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 12, 12), elements=st.floats(0, 1)),
       arrays(np.float64, (3, 12, 12), elements=st.floats(0, 1)))
def test_ssim_bounded(a, b):
    assert -1 <= M.ssim(a, b) <= 1 + 1e-12


def test_entropy_examples():
    assert M.discrete_entropy(np.full((3, 8, 8), 0.3)) == 0.0
    two = np.zeros((16, 16))
    two[:8] = 1.0
    assert M.discrete_entropy(two) == 1.0
    uniform = (np.arange(256 * 4) % 256 / 255.0).reshape(32, 32)
    assert M.discrete_entropy(uniform) == 8.0
    rgb_uniform = np.repeat(uniform[None], 3, axis=0)
    assert M.discrete_entropy(rgb_uniform) == 8.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2 ** 31))
def test_entropy_bounded_by_distinct_levels(k, seed):
    rng = np.random.default_rng(seed)
    levels = rng.choice(256, size=k, replace=False)
    img = rng.choice(levels, size=(10, 10)) / 255.0
    distinct = len(np.unique(img))
    assert 0 <= M.discrete_entropy(img) <= math.log2(distinct) + 1e-12


def test_angular_examples(rng):
    y = rng.random((3, 5, 5)) + 0.01
    assert M.angular_error(y, y) == pytest.approx(0.0, abs=1e-6)
    r = np.array([1.0, 0, 0]).reshape(3, 1, 1)
    g = np.array([0, 1.0, 0]).reshape(3, 1, 1)
    for mode in ("global", "perpixel"):
        assert M.angular_error(r, g, mode) == pytest.approx(90.0, abs=1e-12)
    with pytest.raises(ValueError):
        M.angular_error(np.zeros((3, 2, 2)), y[:, :2, :2])
    with pytest.raises(ValueError):
        M.angular_error(y, y, "bogus")


def test_perpixel_skips_zero_pixels():
    y = np.zeros((3, 1, 2))
    yh = np.zeros((3, 1, 2))
    y[:, 0, 0] = [1, 0, 0]
    yh[:, 0, 0] = [1, 1, 0]
    assert M.angular_error(y, yh, "perpixel") == pytest.approx(45.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4, 4), elements=st.floats(0.01, 1)),
       arrays(np.float64, (3, 4, 4), elements=st.floats(0.01, 1)),
       st.floats(0.01, 100), st.sampled_from(["global", "perpixel"]))
def test_angular_scale_invariance_and_symmetry(y, yh, alpha, mode):
    e = M.angular_error(y, yh, mode)
    assert 0 <= e <= 180
    assert M.angular_error(y, alpha * yh, mode) == pytest.approx(e, abs=1e-5)
    assert M.angular_error(yh, y, mode) == pytest.approx(e, abs=1e-9)


class _Pair:
    def __init__(self, i, img):
        self.ll_path = f"/x/img_{i}.png"
        self.hq_path = f"/missing/{i}.png"
        self.img = img


def test_evaluate_report(tmp_path, rng):
    pairs = [_Pair(i, rng.random((3, 16, 16))) for i in range(4)]
    rep = M.evaluate(pairs, lambda p: p.img, ground_truth=lambda p: p.img,
                     config={"note": "gt vs gt"})
    agg = rep.aggregate
    assert agg["count"] == 4 and agg["ssim"] == 1.0
    assert agg["angular_deg"] == pytest.approx(0.0, abs=1e-6)
    assert agg["niqe"] is None
    ent = [r["entropy"] for r in rep.per_image]
    assert abs(agg["entropy"] - sum(ent) / len(ent)) < 1e-12
    rows = list(csv.reader(open(rep.write_csv(tmp_path / "r.csv"))))
    assert rows[0] == ["id", "ssim", "entropy", "angular_deg"] and len(rows) == 5
    js = json.loads(rep.write_json(tmp_path / "r.json").read_text())
    assert js["config"] == {"note": "gt vs gt"}


def test_evaluate_missing_gt_is_absent(rng):
    pairs = [_Pair(0, rng.random((3, 16, 16)))]
    rep = M.evaluate(pairs, lambda p: p.img)
    row = rep.per_image[0]
    assert row["ssim"] is None and row["angular_deg"] is None
    assert row["entropy"] > 0
    assert rep.aggregate["ssim"] is None
