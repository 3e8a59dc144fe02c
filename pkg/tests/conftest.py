import numpy as np
import pytest

from msrnet.data import write_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_image(rng, h, w):
    """Random but spatially smooth RGB image in [0, 1]."""
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    chans = []
    for _ in range(3):
        a, b, c, d = rng.uniform(0.5, 4, size=4)
        chans.append(0.5 + 0.25 * np.sin(a * xx + b) * np.cos(c * yy + d)
                     + 0.05 * rng.standard_normal((h, w)))
    return np.clip(np.stack(chans), 0, 1).astype(np.float32)


@pytest.fixture
def hq_dir(tmp_path, rng):
    d = tmp_path / "hq"
    for i in range(3):
        write_image(d / f"img{i}.png", smooth_image(rng, 40, 48))
    return d


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


@pytest.fixture
def report_criterion():
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
