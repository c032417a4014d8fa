import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_ssim
from treenet.errors import CIError, ShapeError
from treenet.metrics import (
    PUBLISHED_CI,
    BranchRow,
    CIInputs,
    ci_report_csv,
    compute_ci,
    gaussian_window,
    parse_ci_csv,
    psnr,
    ssim,
    ssim_map,
    published_inputs,
)


class TestPSNR:
    def test_constant_offset(self):
        a = np.full((8, 8), 0.5)
        assert psnr(a, a + 16 / 255) == pytest.approx(24.0485, abs=1e-4)

    def test_identical_capped(self):
        a = np.random.default_rng(0).uniform(size=(6, 6))
        assert psnr(a, a) == 100.0
        assert psnr(a, a, cap=60.0) == 60.0

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(9, 7)), rng.uniform(size=(9, 7))
        assert psnr(a, b) == psnr(b, a)

    def test_border_crop_ignores_edges(self):
        a = np.zeros((10, 10))
        b = a.copy()
        b[0, :] = 1.0
        assert psnr(a, b, border_crop=1) == 100.0
        assert psnr(a, b) < 100.0

    def test_crop_too_large(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), border_crop=2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_peak(self):
        a = np.full((4, 4), 128.0)
        assert psnr(a, a + 16, peak=255) == pytest.approx(24.0485, abs=1e-4)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.001, 0.5), st.floats(0.001, 0.5))
    def test_monotone_in_error(self, e1, e2):
        a = np.zeros((5, 5))
        lo, hi = sorted((e1, e2))
        assert psnr(a, a + lo) >= psnr(a, a + hi)


class TestSSIM:
    def test_window_normalised(self):
        g = gaussian_window()
        assert g.shape == (11,)
        assert np.outer(g, g).sum() == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(g, g[::-1])

    def test_identical_is_one(self, rng):
        a = rng.uniform(size=(20, 20))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_matches_oracle(self, rng):
        for _ in range(3):
            a = rng.uniform(size=(17, 19))
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
            assert abs(ssim(a, b) - naive_ssim(a, b)) < 1e-10

    def test_oracle_on_constant_regions(self):
        a = np.full((13, 13), 0.3)
        b = np.full((13, 13), 0.6)
        assert abs(ssim(a, b) - naive_ssim(a, b)) < 1e-10

    def test_valid_map_shape(self, rng):
        a = rng.uniform(size=(15, 20))
        assert ssim_map(a, a).shape == (5, 10)

    def test_too_small(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((10, 12)), np.zeros((10, 12)))

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(14, 14)), rng.uniform(size=(14, 14))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)

    def test_noise_lowers(self, rng):
        a = rng.uniform(size=(24, 24))
        small = np.clip(a + rng.normal(0, 0.02, a.shape), 0, 1)
        big = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
        assert ssim(a, small) > ssim(a, big)


def rows(psnrs, rfs=(11, 13, 15, 17), params=(37728, 54112, 70496, 95072)):
    return [BranchRow(p, r, q) for p, r, q in zip(psnrs, rfs, params)]


WHOLE = BranchRow(33.09, 17, 191328)


class TestCI:
    def test_published_fixture(self):
        ci = [e.ci for e in compute_ci(published_inputs())]
        assert [round(c, 3) for c in ci] == [0.823, 1.365, 1.697, 2.239]
        for got, printed in zip(ci, PUBLISHED_CI):
            assert abs(got - printed) <= 0.02

    def test_lowest_branch_beta_one(self):
        res = compute_ci(CIInputs(rows([32.9, 32.5, 33.0, 32.7]), WHOLE))
        assert res[1].beta == 1.0
        assert all(e.beta >= 1.0 for e in res)

    def test_components(self):
        res = compute_ci(published_inputs())[0]
        assert res.pvi == pytest.approx(0.74 / 1.09)
        assert res.rfi == pytest.approx(11 / 17)
        assert res.pqi == pytest.approx(37728 / 191328)

    def test_increasing_in_psnr(self):
        base = rows([32.5, 32.6, 32.7, 32.8])
        bumped = rows([32.5, 32.65, 32.7, 32.8])
        a, b = compute_ci(CIInputs(base, WHOLE)), compute_ci(CIInputs(bumped, WHOLE))
        assert b[1].ci > a[1].ci

    def test_increasing_in_rf(self):
        a = compute_ci(CIInputs(rows([32.5] * 4, rfs=(11, 11, 11, 11)), WHOLE))
        b = compute_ci(CIInputs(rows([32.5] * 4, rfs=(11, 13, 11, 11)), WHOLE))
        assert b[1].ci > a[1].ci

    def test_decreasing_in_params(self):
        a = compute_ci(CIInputs(rows([32.5] * 4, params=(1000,) * 4), WHOLE))
        b = compute_ci(CIInputs(rows([32.5] * 4, params=(1000, 9000, 1000, 1000)), WHOLE))
        assert b[1].ci < a[1].ci

    def test_lambda_doubling(self):
        inp = published_inputs()
        half = compute_ci(inp)
        full = compute_ci(published_inputs(lam=1.0))
        for h, f in zip(half, full):
            assert f.ci - h.ci == pytest.approx(0.5 * h.rfi / math.exp(h.pqi))

    def test_equal_psnr_rejected(self):
        with pytest.raises(CIError, match="strictly below"):
            compute_ci(CIInputs(rows([32.5, 33.09, 32.7, 32.8]), WHOLE))

    def test_above_whole_rejected(self):
        with pytest.raises(CIError, match="branch 3"):
            compute_ci(CIInputs(rows([32.5, 32.6, 33.2, 32.8]), WHOLE))

    def test_empty(self):
        with pytest.raises(CIError):
            compute_ci(CIInputs((), WHOLE))

    def test_csv_roundtrip(self):
        inp = published_inputs()
        text = ci_report_csv(inp)
        assert text.splitlines()[0] == "branch,psnr,receptive_field,parameters,ci"
        back = parse_ci_csv(text)
        assert [e.ci for e in compute_ci(back)] == pytest.approx([e.ci for e in compute_ci(inp)])

    def test_csv_missing_whole(self):
        with pytest.raises(CIError, match="whole"):
            parse_ci_csv("branch,psnr,receptive_field,parameters\nbranch1,32,11,100\n")

    def test_csv_missing_column(self):
        with pytest.raises(CIError, match="lacks"):
            parse_ci_csv("branch,psnr\nbranch1,32\n")
