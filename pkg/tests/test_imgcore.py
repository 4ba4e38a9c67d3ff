import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from autostereo.errors import (CorruptData, DimensionMismatch, InvalidSpec, TooSmall,
                               UnsupportedFormat, ZeroDimension)
from autostereo.imgcore import (DegradeSpec, GrayImage, block_dct_quantize, degrade, load_image,
                                minmax_normalize, psnr, quant_table, resize, save_image, ssim,
                                ssim_map)

from oracles import idct_quantize_block, ssim_per_window


def test_grayimage_clamps_and_is_readonly():
    img = GrayImage(np.array([[-0.5, 0.25], [2.0, np.nan]]))
    assert img.data.tolist() == [[0.0, 0.25], [1.0, 0.0]]
    assert img.shape == (2, 2) and img.height == 2 and img.width == 2
    with pytest.raises(ValueError):
        img.data[0, 0] = 0.5


def test_grayimage_rejects_empty():
    with pytest.raises(ZeroDimension):
        GrayImage(np.zeros((0, 3)))


class TestIO:
    def test_full_scale_and_zero(self, tmp_path):
        Image.fromarray(np.array([[0, 255]], dtype=np.uint8)).save(tmp_path / "a.png")
        assert load_image(tmp_path / "a.png").data.tolist() == [[0.0, 1.0]]

    def test_roundtrip_within_one_level(self, tmp_path):
        x = np.random.default_rng(0).random((13, 17))
        save_image(x, tmp_path / "r.png")
        y = load_image(tmp_path / "r.png").data
        assert y.shape == x.shape
        assert np.abs(x - y).max() <= 1 / 255 + 1e-12

    def test_pgm_roundtrip(self, tmp_path):
        x = np.random.default_rng(1).random((5, 9))
        save_image(x, tmp_path / "r.pgm")
        assert (tmp_path / "r.pgm").read_bytes()[:2] == b"P5"
        assert np.abs(load_image(tmp_path / "r.pgm").data - x).max() <= 1 / 255 + 1e-12

    def test_rgb_luminance(self, tmp_path):
        rgb = np.zeros((1, 3, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 0, 0)
        rgb[0, 1] = (0, 255, 0)
        rgb[0, 2] = (0, 0, 255)
        Image.fromarray(rgb).save(tmp_path / "c.png")
        assert np.allclose(load_image(tmp_path / "c.png").data[0], [0.299, 0.587, 0.114], atol=1e-9)

    def test_sixteen_bit(self, tmp_path):
        arr = np.array([[0, 65535, 32768]], dtype=np.uint16)
        Image.fromarray(arr).save(tmp_path / "w.png")
        v = load_image(tmp_path / "w.png").data[0]
        assert v[0] == 0.0 and v[1] == 1.0 and abs(v[2] - 0.5) < 1e-4

    def test_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "missing.png")
        (tmp_path / "junk.png").write_bytes(b"not an image at all")
        with pytest.raises(UnsupportedFormat):
            load_image(tmp_path / "junk.png")
        Image.fromarray(np.zeros((32, 32), dtype=np.uint8)).save(tmp_path / "t.png")
        blob = (tmp_path / "t.png").read_bytes()
        (tmp_path / "trunc.png").write_bytes(blob[: len(blob) // 2])
        with pytest.raises((CorruptData, UnsupportedFormat)):
            load_image(tmp_path / "trunc.png")


class TestResize:
    def test_identity(self):
        x = np.random.default_rng(2).random((6, 7))
        for mode in ("nearest", "bilinear"):
            assert np.array_equal(resize(x, 6, 7, mode).data, x)

    def test_constant(self):
        out = resize(np.full((5, 3), 0.5), 11, 8, "bilinear")
        assert out.shape == (11, 8) and np.allclose(out.data, 0.5)

    def test_checkerboard_nearest(self):
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = resize(x, 4, 4, "nearest").data
        oracle = np.array([[x[i // 2, j // 2] for j in range(4)] for i in range(4)])
        assert np.array_equal(out, oracle)

    def test_zero_dimension(self):
        with pytest.raises(ZeroDimension):
            resize(np.zeros((3, 3)), 0, 3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 12), st.integers(2, 12), st.integers(1, 20), st.integers(1, 20), st.integers(0, 999))
    def test_bilinear_convexity(self, h, w, nh, nw, seed):
        x = np.random.default_rng(seed).random((h, w))
        y = resize(x, nh, nw, "bilinear").data
        assert y.shape == (nh, nw)
        assert y.min() >= x.min() - 1e-12 and y.max() <= x.max() + 1e-12


class TestMetrics:
    def test_psnr_cases(self):
        a = np.zeros((8, 8))
        assert psnr(a, a) == 99.0
        assert abs(psnr(a, np.full((8, 8), 0.5)) - 6.0206) < 1e-3
        b = a.copy()
        b[:, :] = 0.1  # MSE 0.01
        assert abs(psnr(a, b) - 20.0) < 1e-3

    def test_psnr_monotone(self):
        a = np.random.default_rng(3).random((16, 16)) * 0.5
        vals = [psnr(a, a + e) for e in (0.01, 0.05, 0.1, 0.3)]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_psnr_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            psnr(np.zeros((3, 3)), np.zeros((3, 4)))

    def test_ssim_identity_and_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((32, 40)), rng.random((32, 40))
        assert ssim(a, a) == 1.0
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_ssim_matches_per_window_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.random((24, 30))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        assert abs(ssim(a, b) - ssim_per_window(a, b)) < 1e-6
        assert ssim_map(a, b).shape == (14, 20)

    def test_ssim_errors(self):
        with pytest.raises(TooSmall):
            ssim(np.zeros((10, 20)), np.zeros((10, 20)))
        with pytest.raises(DimensionMismatch):
            ssim(np.zeros((12, 12)), np.zeros((12, 13)))

    def test_minmax(self):
        assert np.array_equal(minmax_normalize(np.full((2, 2), 3.0)), np.full((2, 2), 0.5))
        y = minmax_normalize(np.array([[2.0, 4.0], [3.0, 6.0]]))
        assert y.min() == 0.0 and y.max() == 1.0 and y[0, 1] == 0.5


class TestDegrade:
    def test_spec_validation(self):
        with pytest.raises(InvalidSpec):
            DegradeSpec.blur(0)
        with pytest.raises(InvalidSpec):
            DegradeSpec.jpeg(0)
        with pytest.raises(InvalidSpec):
            DegradeSpec.jpeg(101)
        with pytest.raises(InvalidSpec):
            DegradeSpec.exposure(-1)
        with pytest.raises(InvalidSpec):
            DegradeSpec("sharpen")
        with pytest.raises(InvalidSpec):
            DegradeSpec.parse("sepia:3")

    def test_parse_and_label(self):
        assert DegradeSpec.parse("blur:1") == DegradeSpec.blur(1.0)
        assert DegradeSpec.parse("jpeg:20").label() == "jpeg20"
        assert DegradeSpec.parse("gain:1.5").label() == "gain1.5"

    def test_blur_constant(self):
        out = degrade(np.full((20, 20), 0.3), DegradeSpec.blur(1.0)).data
        assert np.allclose(out, 0.3, atol=1e-12)

    def test_gain_identity_and_clamp(self):
        x = np.random.default_rng(6).random((9, 9))
        assert np.array_equal(degrade(x, DegradeSpec.exposure(1.0)).data, x)
        y = degrade(x, DegradeSpec.exposure(1.5)).data
        assert np.allclose(y, np.clip(1.5 * x, 0, 1))

    def test_jpeg_quality_100_near_lossless(self):
        x = np.random.default_rng(7).random((37, 29))
        y = degrade(x, DegradeSpec.jpeg(100)).data
        assert np.abs(y - x).max() <= 1 / 255

    def test_jpeg_matches_basis_oracle(self):
        x = np.random.default_rng(8).random((16, 16))
        table = quant_table(20)
        ours = block_dct_quantize(x, 20)
        for bi in range(2):
            for bj in range(2):
                blk = x[8 * bi:8 * bi + 8, 8 * bj:8 * bj + 8] * 255 - 128
                ref = (idct_quantize_block(blk, table) + 128) / 255
                assert np.allclose(ours[8 * bi:8 * bi + 8, 8 * bj:8 * bj + 8], ref, atol=1e-9)

    def test_lower_quality_loses_more(self):
        x = np.random.default_rng(9).random((32, 32))
        errs = [np.abs(degrade(x, DegradeSpec.jpeg(q)).data - x).mean() for q in (90, 50, 20, 5)]
        assert errs == sorted(errs)

    def test_noise_deterministic(self):
        x = np.full((8, 8), 0.5)
        a = degrade(x, DegradeSpec.noise(0.1), seed=3).data
        assert np.array_equal(a, degrade(x, DegradeSpec.noise(0.1), seed=3).data)
        assert not np.array_equal(a, degrade(x, DegradeSpec.noise(0.1), seed=4).data)

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(["blur", "jpeg", "gain", "noise"]), st.floats(0.1, 3.0),
           st.integers(1, 100), st.integers(0, 10 ** 6))
    def test_output_in_unit_range(self, kind, value, quality, seed):
        spec = {"blur": DegradeSpec.blur(value), "jpeg": DegradeSpec.jpeg(quality),
                "gain": DegradeSpec.exposure(value), "noise": DegradeSpec.noise(value)}[kind]
        x = np.random.default_rng(seed).random((12, 12))
        y = degrade(x, spec, seed).data
        assert y.min() >= 0.0 and y.max() <= 1.0
