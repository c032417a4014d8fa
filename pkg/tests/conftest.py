import numpy as np
import pytest

from treenet.data import ImagePlane, save_pgm


def synthetic_image(seed, size=123):
    """Piecewise-smooth test card: shapes and thin lines on a low-frequency background."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = 0.3 + 0.2 * np.sin(2 * np.pi * (rng.uniform(0.5, 2) * xx + rng.uniform())) \
        * np.cos(2 * np.pi * rng.uniform(0.5, 2) * yy)
    for _ in range(14):
        kind = rng.integers(3)
        val = rng.uniform(0, 1)
        cx, cy = rng.uniform(0, 1, 2)
        if kind == 0:
            r = rng.uniform(0.05, 0.25)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        elif kind == 1:
            w, h = rng.uniform(0.05, 0.4, 2)
            mask = (abs(xx - cx) < w / 2) & (abs(yy - cy) < h / 2)
        else:
            th = rng.uniform(0, np.pi)
            mask = np.abs((xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)) < rng.uniform(0.005, 0.03)
        img[mask] = val
    th, f = rng.uniform(0, np.pi), rng.uniform(8, 20)
    img += 0.05 * np.sin(2 * np.pi * f * (xx * np.cos(th) + yy * np.sin(th)))
    return ImagePlane(np.clip(img, 0, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def corpus(tmp_path):
    """Tiny train/eval corpus on disk: 2 training images, 1 eval image."""
    root = tmp_path / "corpus"
    (root / "train").mkdir(parents=True)
    (root / "eval").mkdir()
    for i in range(2):
        save_pgm(root / "train" / f"img{i}.pgm", synthetic_image(i, 84))
    save_pgm(root / "eval" / "held.pgm", synthetic_image(99, 60))
    return root


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
