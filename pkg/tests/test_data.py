import numpy as np
import pytest

from conftest import synthetic_image
from oracles import naive_bicubic
from treenet.data import (
    ImagePlane,
    augment,
    bicubic_resize,
    build_multiscale_dataset,
    decode_pnm,
    dihedral,
    encode_pgm,
    extract_patches,
    load_directory,
    load_image,
    load_sample_cache,
    make_pair,
    resample_taps,
    save_pgm,
    save_sample_cache,
)
from treenet.errors import DataError, ShapeError
from treenet.metrics import psnr


def ppm_bytes(rgb, maxval=255):
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n{maxval}\n".encode() + rgb.astype(np.uint8).tobytes()


class TestPNM:
    def test_pgm_roundtrip(self, tmp_path, rng):
        img = ImagePlane(np.round(rng.uniform(size=(7, 9)) * 255) / 255)
        save_pgm(tmp_path / "a.pgm", img)
        back = load_image(tmp_path / "a.pgm")
        assert np.array_equal(back.values, img.values)

    def test_16bit(self, rng):
        img = ImagePlane(np.round(rng.uniform(size=(4, 5)) * 1000) / 1000)
        back = decode_pnm(encode_pgm(img, maxval=1000))
        assert np.allclose(back.values, img.values, atol=1e-12)

    def test_green_pixel_luma(self):
        rgb = np.zeros((1, 1, 3))
        rgb[0, 0, 1] = 255
        assert decode_pnm(ppm_bytes(rgb)).values[0, 0] == pytest.approx(0.587)

    def test_colour_weights(self):
        rgb = np.array([[[255, 0, 0], [0, 0, 255], [255, 255, 255]]])
        assert decode_pnm(ppm_bytes(rgb)).values[0].tolist() == pytest.approx([0.299, 0.114, 1.0])

    def test_header_comment(self):
        buf = b"P5\n# made by hand\n2 1\n255\n" + bytes([0, 255])
        assert decode_pnm(buf).values.tolist() == [[0.0, 1.0]]

    def test_truncated_raster(self):
        buf = b"P5\n4 4\n255\n" + bytes(10)
        with pytest.raises(DataError, match="truncated") as info:
            decode_pnm(buf)
        assert info.value.offset == len(buf)
        assert "byte offset" in str(info.value)

    def test_bad_magic(self):
        with pytest.raises(DataError) as info:
            decode_pnm(b"P2\n1 1\n255\n0")
        assert info.value.offset == 0

    def test_bad_header_integer(self):
        with pytest.raises(DataError, match="integer"):
            decode_pnm(b"P5\n4 x\n255\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_image(tmp_path / "nope.pgm")

    def test_directory(self, corpus):
        imgs, paths = load_directory(corpus / "train")
        assert len(imgs) == 2 and paths[0].endswith("img0.pgm")

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DataError, match="no .pgm"):
            load_directory(tmp_path)

    def test_plane_clamps(self):
        assert ImagePlane(np.array([[-1.0, 2.0]])).values.tolist() == [[0.0, 1.0]]


class TestBicubic:
    def test_identity_at_same_size(self, rng):
        a = rng.uniform(size=(10, 13))
        assert np.array_equal(bicubic_resize(a, 13, 10).values, a)

    def test_constant_exact(self):
        for c in (0.0, 0.37, 1.0):
            a = np.full((9, 12), c)
            for w, h in ((4, 3), (24, 18), (7, 11)):
                assert np.all(bicubic_resize(a, w, h).values == c)

    @pytest.mark.parametrize("size", [(5, 3), (3, 3), (20, 14), (27, 9)])
    def test_matches_oracle(self, rng, size):
        a = rng.uniform(size=(9, 12))
        got = bicubic_resize(a, *size).values
        assert np.max(np.abs(got - naive_bicubic(a, *size))) < 1e-10

    def test_taps_sum_to_one(self):
        _, w, _ = resample_taps(13, 39)
        assert np.allclose(w.sum(axis=1), 1.0, atol=1e-14)

    def test_bad_size(self):
        with pytest.raises(ShapeError):
            bicubic_resize(np.zeros((4, 4)), 0, 4)

    def test_pair_crops_to_multiple(self):
        lr, hr = make_pair(synthetic_image(0, 41), 3)
        assert lr.shape == hr.shape == (39, 39)

    def test_downscale_loses_detail(self):
        hr = synthetic_image(3)
        for s in (2, 3, 4):
            lr, tgt = make_pair(hr, s)
            assert psnr(lr.values, tgt.values) < 100

    def test_larger_scale_is_worse(self):
        hr = synthetic_image(5, 120)
        scores = [psnr(*(p.values for p in make_pair(hr, s))) for s in (2, 3, 4)]
        assert scores[0] > scores[1] > scores[2]

    def test_bad_scale(self):
        with pytest.raises(ShapeError, match="scale"):
            make_pair(synthetic_image(0, 20), 5)


class TestPatches:
    def test_exact_fit(self):
        assert len(extract_patches(np.zeros((82, 82)))) == 4

    def test_partial_windows_dropped(self):
        assert len(extract_patches(np.zeros((100, 90)))) == 4

    def test_too_small(self):
        with pytest.raises(ShapeError, match="exceeds"):
            extract_patches(np.zeros((40, 100)))

    def test_patch_content(self, rng):
        a = rng.uniform(size=(82, 82))
        p = extract_patches(a)
        assert np.array_equal(p[1].values, a[:41, 41:])

    def test_off_diagonal_marker_distinct(self):
        # corners are fixed by the diagonal flip, so mark an off-diagonal pixel
        a = np.zeros((5, 5))
        a[0, 1] = 1.0
        outs = {tuple(map(tuple, p.values)) for p in augment(a)}
        assert len(outs) == 8

    def test_identity_first(self, rng):
        a = rng.uniform(size=(6, 6))
        assert np.array_equal(augment(a)[0].values, a)

    def test_group_closed(self, rng):
        a = rng.uniform(size=(4, 4))
        ref = {dihedral(a, t).tobytes() for t in range(8)}
        for t in range(8):
            for u in range(8):
                assert dihedral(dihedral(a, t), u).tobytes() in ref

    def test_square_required(self):
        with pytest.raises(ShapeError):
            augment(np.zeros((3, 4)))


class TestDataset:
    def test_counts(self):
        img = synthetic_image(0, 84)
        plain = build_multiscale_dataset([img], scales=(2,), augment_flag=False)
        assert len(plain) == 4
        assert len(build_multiscale_dataset([img], scales=(2,))) == 32

    def test_multiscale_labels(self):
        ds = build_multiscale_dataset([synthetic_image(0, 84)], augment_flag=False)
        assert sorted(set(ds.scales.tolist())) == [2, 3, 4]
        assert ds.inputs.shape[1:] == (41, 41)

    def test_pairs_aligned(self):
        img = synthetic_image(2, 84)
        ds = build_multiscale_dataset([img], scales=(3,))
        lr, hr = make_pair(img, 3)
        img_id, scale, p_id, t = ds.provenance[13]
        assert (img_id, scale) == (0, 3)
        y, x = divmod(p_id, 2)
        want = dihedral(hr.values[41 * y:41 * y + 41, 41 * x:41 * x + 41], t)
        assert np.array_equal(ds.targets[13], want)
        want_in = dihedral(lr.values[41 * y:41 * y + 41, 41 * x:41 * x + 41], t)
        assert np.array_equal(ds.inputs[13], want_in)

    def test_small_images_skipped(self):
        ds = build_multiscale_dataset([synthetic_image(0, 84), synthetic_image(1, 30)], augment_flag=False)
        assert {p[0] for p in ds.provenance} == {0}

    def test_nothing_usable(self):
        with pytest.raises(DataError, match="large enough"):
            build_multiscale_dataset([synthetic_image(0, 30)])

    def test_deterministic(self):
        imgs = [synthetic_image(0, 84), synthetic_image(1, 84)]
        a = build_multiscale_dataset(imgs, seed=7, max_pairs=20)
        b = build_multiscale_dataset(imgs, seed=7, max_pairs=20)
        c = build_multiscale_dataset(imgs, seed=8, max_pairs=20)
        assert np.array_equal(a.inputs, b.inputs) and a.provenance == b.provenance
        assert a.provenance != c.provenance
        assert len(a) == 20

    def test_cache_roundtrip(self, tmp_path):
        ds = build_multiscale_dataset([synthetic_image(0, 84)], scales=(2, 4))
        save_sample_cache(tmp_path / "c.bin", ds)
        back = load_sample_cache(tmp_path / "c.bin")
        assert np.array_equal(back.inputs, ds.inputs)
        assert np.array_equal(back.targets, ds.targets)
        assert np.array_equal(back.scales, ds.scales)

    def test_cache_truncated(self, tmp_path):
        ds = build_multiscale_dataset([synthetic_image(0, 84)], scales=(2,), augment_flag=False)
        save_sample_cache(tmp_path / "c.bin", ds)
        raw = (tmp_path / "c.bin").read_bytes()
        (tmp_path / "c.bin").write_bytes(raw[:-5])
        with pytest.raises(DataError, match="truncated"):
            load_sample_cache(tmp_path / "c.bin")
