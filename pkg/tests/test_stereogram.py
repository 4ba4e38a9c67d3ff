import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autostereo import _accel
from autostereo.classic import decode_window_match, default_config
from autostereo.errors import (AlphaOutOfRange, DepthOutOfRange, DimensionMismatch,
                               DisparityOutOfRange, GeometryInvalid, TextureTooNarrow)
from autostereo.stereogram import (EncodeOptions, RandomDotTexture, StereoGeometry,
                                   _propagate_rows_np, constraint_violations, depth_of_disparity,
                                   disparity_of_depth, encode, encode_random_dot, propagate_rows,
                                   shift_map, watermark_embed)

from oracles import walk_constraints

G32 = StereoGeometry(beta=0.5, stripe_width=32)


class TestGeometry:
    def test_invariants(self):
        for bad in (dict(beta=0.0), dict(beta=1.0), dict(stripe_width=1), dict(stripe_width=2.5)):
            with pytest.raises(GeometryInvalid):
                StereoGeometry(**bad)
        with pytest.raises(GeometryInvalid):
            G32.check_width(63)
        G32.check_width(64)

    def test_default_for_width(self):
        assert StereoGeometry.for_width(64) == StereoGeometry(0.5, 8)
        assert StereoGeometry.for_width(256).stripe_width == 32

    def test_disparity_examples(self):
        assert disparity_of_depth(1.0, G32) == 32.0
        assert disparity_of_depth(0.0, G32) == 16.0
        assert disparity_of_depth(0.5, G32) == 24.0
        with pytest.raises(DepthOutOfRange):
            disparity_of_depth(1.2, G32)

    def test_inverse_examples(self):
        assert depth_of_disparity(32, G32) == 1.0
        assert depth_of_disparity(16, G32) == 0.0
        with pytest.raises(DisparityOutOfRange):
            depth_of_disparity(12, G32)
        d = np.random.default_rng(0).random(100)
        assert np.allclose(depth_of_disparity(disparity_of_depth(d, G32), G32), d, atol=1e-12)

    def test_rounding_half_even(self):
        g = StereoGeometry(0.5, 8)
        # d = 0.125 -> s = 4.5 -> 4 ;  d = 0.375 -> s = 5.5 -> 6
        assert shift_map(np.array([[0.125, 0.375]]), g).tolist() == [[4, 6]]
        assert shift_map(np.array([[0.125, 0.375]]), g, "floor").tolist() == [[4, 5]]

    @settings(max_examples=50)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 0.95), st.integers(2, 64))
    def test_monotone_and_in_range(self, a, b, beta, stripe):
        g = StereoGeometry(beta, stripe)
        lo, hi = sorted((a, b))
        assert disparity_of_depth(lo, g) <= disparity_of_depth(hi, g)
        s = shift_map(np.array([[lo, hi]]), g)
        r0, r1 = g.shift_range
        assert r0 <= s.min() and s.max() <= r1


class TestEncode:
    def test_flat_far_plane_is_periodic(self):
        out = encode(np.ones((16, 96)), EncodeOptions(G32, RandomDotTexture(3))).data
        assert np.array_equal(out[:, 32:], out[:, :-32])

    def test_rectangle_interior(self):
        d = np.ones((48, 128))
        d[12:36, 48:96] = 0.0
        out = encode(d, EncodeOptions(G32, RandomDotTexture(1))).data
        inner = out[12:36, 64:96]
        assert np.array_equal(inner, out[12:36, 48:80])
        assert constraint_violations(out, d, G32) == 0

    def test_left_columns_come_from_texture(self):
        tex = RandomDotTexture(5).render(10, 32)
        out = encode(np.ones((10, 64)), EncodeOptions(G32, tex)).data
        assert np.array_equal(out[:, :32], tex.data)

    def test_texture_tiles_vertically(self):
        tex = np.random.default_rng(0).random((4, 40))
        out = encode(np.ones((10, 64)), EncodeOptions(G32, tex)).data
        assert np.array_equal(out[4:8, :32], tex[:, :32])

    def test_determinism(self):
        d = np.random.default_rng(2).random((20, 80))
        a = encode_random_dot(d, G32, 7).data
        assert np.array_equal(a, encode_random_dot(d, G32, 7).data)
        assert not np.array_equal(a, encode_random_dot(d, G32, 8).data)

    def test_texture_too_narrow(self):
        with pytest.raises(TextureTooNarrow):
            encode(np.ones((8, 64)), EncodeOptions(G32, np.zeros((8, 16))))

    def test_geometry_invalid_for_narrow_image(self):
        with pytest.raises(GeometryInvalid):
            encode(np.ones((8, 40)), EncodeOptions(G32))

    def test_random_dot_stripe_histogram(self):
        out = encode_random_dot(np.ones((256, 64)), G32, 11).data[:, :32]
        hist, _ = np.histogram(out, bins=8, range=(0, 1))
        expected = out.size / 8
        assert np.all(np.abs(hist - expected) < 4 * np.sqrt(expected))

    def test_random_dot_seeds_decode_alike(self):
        d = np.ones((48, 256))
        d[10:40, 100:180] = 0.5
        cfg = default_config(G32)
        outs = [decode_window_match(encode_random_dot(d, G32, s), cfg, G32).data for s in (1, 2)]
        inner = (slice(14, 36), slice(120, 170))
        for o in outs:
            assert np.allclose(o[inner], 0.5)
            assert np.allclose(o[14:36, 40:90], 1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 12), st.integers(16, 80), st.integers(0, 10 ** 6),
           st.sampled_from(["half_even", "floor"]))
    def test_constraint_soundness(self, h, w, seed, rounding):
        g = StereoGeometry(0.5, 8)
        rng = np.random.default_rng(seed)
        d = rng.random((h, w))
        out = encode(d, EncodeOptions(g, RandomDotTexture(seed), rounding)).data
        assert walk_constraints(out, shift_map(d, g, rounding)) == 0
        assert constraint_violations(out, d, g, rounding) == 0

    def test_numba_and_numpy_paths_agree(self):
        rng = np.random.default_rng(4)
        shifts = rng.integers(3, 9, size=(20, 70))
        tex = rng.random((7, 9))
        ref = _propagate_rows_np(shifts, tex)
        assert np.array_equal(propagate_rows(shifts, tex), ref)

    def test_env_flag_disables_numba(self, monkeypatch):
        monkeypatch.setenv("AUTOSTEREO_DISABLE_NUMBA", "1")
        assert not _accel.use_numba()
        d = np.random.default_rng(1).random((6, 40))
        a = encode_random_dot(d, StereoGeometry(0.5, 8), 0).data
        monkeypatch.delenv("AUTOSTEREO_DISABLE_NUMBA")
        assert np.array_equal(a, encode_random_dot(d, StereoGeometry(0.5, 8), 0).data)


class TestWatermark:
    def test_endpoints(self):
        rng = np.random.default_rng(0)
        s, c = rng.random((8, 8)), rng.random((8, 8))
        assert np.array_equal(watermark_embed(s, c, 0.0).data, c)
        assert np.array_equal(watermark_embed(s, c, 1.0).data, s)
        assert np.allclose(watermark_embed(s, c, 0.2).data, 0.2 * s + 0.8 * c)

    def test_errors(self):
        with pytest.raises(AlphaOutOfRange):
            watermark_embed(np.zeros((4, 4)), np.zeros((4, 4)), 1.5)
        with pytest.raises(DimensionMismatch):
            watermark_embed(np.zeros((4, 4)), np.zeros((4, 5)), 0.5)
