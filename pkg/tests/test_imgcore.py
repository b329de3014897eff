import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import bilinear_oracle, median_oracle
from sweepkit.errors import InvalidArgument
from sweepkit.imgcore import (
    apply_lut,
    as_image,
    center_crop,
    identity_lut,
    median_filter,
    pad_zero,
    remap,
    resize,
)


def random_image(seed, h, w, c=3):
    return np.random.default_rng(seed).integers(0, 256, (h, w, c), dtype=np.uint8)


def images(max_side=12):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side), st.sampled_from([1, 3])).flatmap(
        lambda s: arrays(np.uint8, s)
    )


class TestResize:
    def test_constant_stays_constant(self):
        img = np.full((8, 8, 3), 77, np.uint8)
        assert np.array_equal(resize(img, 5, 5), np.full((5, 5, 3), 77, np.uint8))

    @pytest.mark.parametrize("mode", ["bilinear", "nearest"])
    def test_same_size_is_identity(self, mode):
        img = random_image(1, 7, 9)
        assert np.array_equal(resize(img, 7, 9, mode), img)

    def test_ramp_matches_scalar_oracle(self):
        ramp = (np.arange(16, dtype=np.uint8) * 16).reshape(4, 4, 1)
        out = resize(ramp, 2, 2)
        assert np.array_equal(out, bilinear_oracle(ramp, 2, 2))
        # each output pixel averages a 2x2 block of the ramp
        assert out[:, :, 0].tolist() == [[40, 72], [168, 200]]

    @pytest.mark.parametrize("shape,target", [((5, 7, 3), (11, 3)), ((16, 16, 1), (9, 13)), ((3, 3, 3), (8, 8))])
    def test_random_matches_scalar_oracle(self, shape, target):
        img = random_image(sum(shape), *shape)
        assert np.array_equal(resize(img, *target), bilinear_oracle(img, *target))

    def test_zero_target_rejected(self):
        with pytest.raises(InvalidArgument):
            resize(random_image(0, 4, 4), 0, 3)

    @settings(max_examples=40, deadline=None)
    @given(images(), st.integers(1, 20), st.integers(1, 20))
    def test_output_shape_and_range(self, img, nh, nw):
        out = resize(img, nh, nw)
        assert out.shape == (nh, nw, img.shape[2]) and out.dtype == np.uint8


class TestPad:
    def test_zero_margins_identity(self):
        img = random_image(2, 3, 4)
        assert np.array_equal(pad_zero(img, 0, 0, 0, 0), img)

    def test_white_border(self):
        out = pad_zero(np.full((2, 2, 3), 255, np.uint8), 1, 1, 1, 1)
        assert out.shape == (4, 4, 3)
        assert (out[1:3, 1:3] == 255).all()
        border = out.copy()
        border[1:3, 1:3] = 0
        assert not border.any()

    def test_asymmetric_placement(self):
        img = random_image(3, 3, 5)
        out = pad_zero(img, 2, 0, 1, 3)
        assert out.shape == (7, 7, 3)
        assert np.array_equal(out[1:4, 2:7], img)
        out[1:4, 2:7] = 0
        assert not out.any()

    def test_negative_margin_rejected(self):
        with pytest.raises(InvalidArgument):
            pad_zero(random_image(0, 2, 2), -1, 0, 0, 0)

    @settings(max_examples=40, deadline=None)
    @given(images(), st.integers(0, 5), st.integers(0, 5))
    def test_symmetric_pad_then_crop_roundtrips(self, img, mx, my):
        h, w, _ = img.shape
        assert np.array_equal(center_crop(pad_zero(img, mx, mx, my, my), h, w), img)


class TestRemap:
    def test_identity(self):
        img = random_image(4, 6, 5)
        ys, xs = np.mgrid[0:6, 0:5].astype(float)
        assert np.array_equal(remap(img, xs, ys), img)

    def test_constant_map(self):
        img = random_image(5, 4, 4)
        out = remap(img, np.zeros((4, 4)), np.zeros((4, 4)))
        assert (out == img[0, 0]).all()

    def test_out_of_bounds_is_zero(self):
        img = random_image(6, 4, 4)
        assert not remap(img, np.full((4, 4), 4.0), np.zeros((4, 4))).any()
        assert not remap(img, np.zeros((4, 4)), np.full((4, 4), -0.5)).any()

    def test_floor_rule(self):
        img = random_image(7, 3, 3)
        out = remap(img, np.full((3, 3), 1.99), np.full((3, 3), 0.01))
        assert (out == img[0, 1]).all()

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            remap(random_image(0, 4, 4), np.zeros((4, 3)), np.zeros((4, 4)))

    @settings(max_examples=40, deadline=None)
    @given(images())
    def test_identity_property(self, img):
        h, w, _ = img.shape
        ys, xs = np.mgrid[0:h, 0:w].astype(float)
        assert np.array_equal(remap(img, xs, ys), img)


class TestLut:
    def test_identity(self):
        img = random_image(8, 5, 5)
        assert np.array_equal(apply_lut(img, identity_lut()), img)

    def test_zero_lut(self):
        assert not apply_lut(random_image(9, 5, 5), np.zeros(256, np.uint8)).any()

    def test_inversion_involution(self):
        img = random_image(10, 5, 5)
        inv = (255 - np.arange(256)).astype(np.uint8)
        assert np.array_equal(apply_lut(apply_lut(img, inv), inv), img)

    def test_bad_lut(self):
        with pytest.raises(InvalidArgument):
            apply_lut(random_image(0, 2, 2), np.zeros(255, np.uint8))


class TestMedian:
    @pytest.mark.parametrize("k", [1, 3, 5, 7])
    def test_constant(self, k):
        img = np.full((9, 9, 3), 123, np.uint8)
        assert np.array_equal(median_filter(img, k), img)

    def test_kernel_one_identity(self):
        img = random_image(11, 8, 8)
        assert np.array_equal(median_filter(img, 1), img)

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidArgument):
            median_filter(random_image(0, 5, 5), 4)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_sort_oracle(self, seed):
        img = random_image(seed, 16, 16, 1)
        assert np.array_equal(median_filter(img, 5), median_oracle(img, 5))

    def test_tiny_image_borders(self):
        for shape in [(1, 1, 1), (2, 3, 3), (3, 2, 1)]:
            img = random_image(12, *shape)
            assert np.array_equal(median_filter(img, 5), median_oracle(img, 5))

    @settings(max_examples=30, deadline=None)
    @given(images(10), st.sampled_from([3, 5]))
    def test_commutes_with_channel_permutation(self, img, k):
        perm = np.random.default_rng(img.size).permutation(img.shape[2])
        assert np.array_equal(median_filter(img[:, :, perm], k), median_filter(img, k)[:, :, perm])


def test_as_image_validation():
    assert as_image(np.zeros((3, 4), np.uint8)).shape == (3, 4, 1)
    with pytest.raises(InvalidArgument):
        as_image(np.zeros((3, 4, 2), np.uint8))
    with pytest.raises(InvalidArgument):
        as_image(np.full((2, 2, 3), 300))
    with pytest.raises(InvalidArgument):
        as_image(np.zeros((0, 2, 3), np.uint8))
