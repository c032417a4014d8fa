"""PSNR, SSIM and the branch contribution index (CI)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CIError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _plane(x):
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        arr = np.squeeze(arr)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D image plane, got shape {np.shape(values)}")
    return arr


def _crop(arr, border):
    if border <= 0:
        return arr
    h, w = arr.shape
    if 2 * border >= min(h, w):
        raise ShapeError(f"border_crop {border} leaves nothing of a {h}x{w} image")
    return arr[border:h - border, border:w - border]


def psnr(a, b, border_crop=0, peak=1.0, cap=100.0):
    """Peak signal-to-noise ratio in dB, capped at ``cap`` for (near) identical inputs."""
    x, y = _plane(a), _plane(b)
    if x.shape != y.shape:
        raise ShapeError(f"psnr: image shapes differ, {x.shape} vs {y.shape}")
    x, y = _crop(x, border_crop), _crop(y, border_crop)
    mse = float(np.mean((x - y) ** 2))
    if mse < peak * peak * 10.0 ** (-cap / 10.0):
        return float(cap)
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(arr, taps):
    # separable 'valid' correlation: rows then columns
    rows = sliding_window_view(arr, len(taps), axis=1) @ taps
    return sliding_window_view(rows, len(taps), axis=0) @ taps


def ssim_map(a, b, peak=1.0):
    x, y = _plane(a), _plane(b)
    if x.shape != y.shape:
        raise ShapeError(f"ssim: image shapes differ, {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    taps = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_x, mu_y = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mu_x * mu_x
    syy = _filter_valid(y * y, taps) - mu_y * mu_y
    sxy = _filter_valid(x * y, taps) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b, peak=1.0):
    """Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5)."""
    return float(np.mean(ssim_map(a, b, peak)))


# ---------------------------------------------------------------------------
# contribution index


@dataclass(frozen=True)
class BranchRow:
    psnr: float
    receptive_field: float
    params: float


@dataclass(frozen=True)
class CIInputs:
    branches: tuple
    whole: BranchRow
    lam: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(BranchRow(*r) if not isinstance(r, BranchRow) else r
                                                   for r in self.branches))
        if not isinstance(self.whole, BranchRow):
            object.__setattr__(self, "whole", BranchRow(*self.whole))


@dataclass(frozen=True)
class CIEntry:
    beta: float
    pvi: float
    rfi: float
    pqi: float
    ci: float


def compute_ci(inputs):
    """Contribution index of each branch.

    ``CI = (beta * PVI + lam * RFI) / exp(PQI)`` with

    * ``PVI = (P - floor(P)) / (P0 - floor(P))``
    * ``beta = (P0 - min_j P_j) / (P0 - P)``
    * ``RFI = R / R0`` and ``PQI = Pq / Pq0``
    """
    whole = inputs.whole
    if not inputs.branches:
        raise CIError("at least one branch row is required")
    if whole.params <= 0 or whole.receptive_field <= 0:
        raise CIError("whole-network receptive field and parameter count must be positive")
    for i, row in enumerate(inputs.branches, start=1):
        if row.psnr >= whole.psnr:
            raise CIError(
                f"branch {i}: branch PSNR must be strictly below whole-network PSNR "
                f"({row.psnr} >= {whole.psnr})"
            )
    p_min = min(r.psnr for r in inputs.branches)
    out = []
    for row in inputs.branches:
        floor_p = math.floor(row.psnr)
        pvi = (row.psnr - floor_p) / (whole.psnr - floor_p)
        beta = (whole.psnr - p_min) / (whole.psnr - row.psnr)
        rfi = row.receptive_field / whole.receptive_field
        pqi = row.params / whole.params
        ci = (beta * pvi + inputs.lam * rfi) / math.exp(pqi)
        out.append(CIEntry(beta, pvi, rfi, pqi, ci))
    return tuple(out)


# Branch rows exactly as printed for the 3x enlargement experiment, including
# 95027 for branch 4 (the counting rule gives 95072; see the README).
PUBLISHED_BRANCHES = (
    BranchRow(32.74, 11, 37728),
    BranchRow(32.89, 13, 54112),
    BranchRow(32.94, 15, 70496),
    BranchRow(32.99, 17, 95027),
)
PUBLISHED_WHOLE = BranchRow(33.09, 17, 191328)
PUBLISHED_CI = (0.83, 1.38, 1.68, 2.24)


def published_inputs(lam=0.5):
    return CIInputs(PUBLISHED_BRANCHES, PUBLISHED_WHOLE, lam)


CI_COLUMNS = ("branch", "psnr", "receptive_field", "parameters", "ci")


def ci_report_csv(inputs, results=None, whole_label="whole"):
    """CSV with one row per branch plus a final whole-network row (empty ci)."""
    results = compute_ci(inputs) if results is None else results
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CI_COLUMNS)
    for i, (row, res) in enumerate(zip(inputs.branches, results), start=1):
        w.writerow([f"branch{i}", f"{row.psnr:.4f}", _num(row.receptive_field), _num(row.params), f"{res.ci:.6f}"])
    wh = inputs.whole
    w.writerow([whole_label, f"{wh.psnr:.4f}", _num(wh.receptive_field), _num(wh.params), ""])
    return buf.getvalue()


def _num(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def parse_ci_csv(text, lam=0.5):
    """Inverse of :func:`ci_report_csv`; the ``ci`` column is ignored."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise CIError("CI input CSV has no rows")
    missing = {"psnr", "receptive_field", "parameters"} - set(rows[0])
    if missing:
        raise CIError(f"CI input CSV lacks columns {sorted(missing)}")
    branches, whole = [], None
    for r in rows:
        row = BranchRow(float(r["psnr"]), float(r["receptive_field"]), float(r["parameters"]))
        if r.get("branch", "").startswith("branch"):
            branches.append(row)
        else:
            whole = row
    if whole is None:
        raise CIError("CI input CSV needs a whole-network row (branch column not starting with 'branch')")
    return CIInputs(tuple(branches), whole, lam)
