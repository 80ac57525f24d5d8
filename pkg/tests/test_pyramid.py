from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyramidseg.pyramid import build_pyramid, level_dims
from pyramidseg.raster import GrayImage


def footprint_mean_oracle(values: np.ndarray, level: int) -> list[list[Fraction]]:
    """Mean of the input pixels covered by each level pixel, in Fractions."""
    h, w = values.shape
    side = 2**level
    rows = []
    for y0 in range(0, h, side):
        row = []
        for x0 in range(0, w, side):
            block = values[y0 : y0 + side, x0 : x0 + side]
            row.append(sum((Fraction(float(v)) for v in block.ravel()), Fraction(0)) / block.size)
        rows.append(row)
    return rows


def as_fractions(img: GrayImage) -> list[list[Fraction]]:
    return [[Fraction(int(n), img.scale) for n in row] for row in img.numer]


def test_512_square_levels():
    dims = level_dims(512, 512, 100)
    assert dims == [(512, 512), (256, 256), (128, 128), (64, 64), (32, 32), (16, 16), (8, 8)]
    pyr = build_pyramid(GrayImage(np.zeros((512, 512), dtype=np.int64)))
    assert len(pyr) == 7
    assert (pyr.top.width, pyr.top.height) == (8, 8)


def test_2x2_to_single_mean():
    pyr = build_pyramid(GrayImage.from_array([[10, 20], [30, 40]]), top_target=1)
    assert len(pyr) == 2
    assert pyr.top.value(0, 0) == 25


def test_partial_blocks_average_the_footprint():
    # level 1 averages existing pixels only; level 2 is the mean of all three inputs
    pyr = build_pyramid(GrayImage.from_array([[0, 90, 255]]), top_target=1)
    assert [pyr[1].value(x, 0) for x in range(2)] == [45, 255]
    assert pyr[2].value(0, 0) == Fraction(345, 3) == 115


@pytest.mark.parametrize("shape", [(1, 1), (5, 3), (13, 17), (64, 64), (33, 2)])
def test_uniform_image_is_a_fixpoint(shape):
    pyr = build_pyramid(GrayImage.from_array(np.full(shape, 77.25)), top_target=1)
    for lv in pyr.levels:
        assert np.all(lv.pixels == 77.25)


def test_small_input_gives_single_level():
    img = GrayImage.from_array(np.arange(100).reshape(10, 10))
    pyr = build_pyramid(img)
    assert len(pyr) == 1 and pyr.top is img


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 23), st.integers(1, 23), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_levels_match_footprint_oracle(w, h, target, seed):
    values = np.random.default_rng(seed).integers(0, 1021, size=(h, w)) / 4
    pyr = build_pyramid(GrayImage.from_array(values), top_target=target)
    for level, img in enumerate(pyr.levels):
        assert as_fractions(img) == footprint_mean_oracle(values, level)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 200))
def test_stop_rule_and_recurrence(w, h, target):
    dims = level_dims(w, h, target)
    for (w0, h0), (w1, h1) in zip(dims, dims[1:]):
        assert (w1, h1) == ((w0 + 1) // 2, (h0 + 1) // 2)
        assert w1 * h1 < w0 * h0
    assert dims[-1][0] * dims[-1][1] <= target
    assert all(a * b > target for a, b in dims[:-1])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_value_range_is_preserved(w, h, seed):
    values = np.random.default_rng(seed).integers(0, 256, size=(h, w)).astype(float)
    pyr = build_pyramid(GrayImage.from_array(values), top_target=1)
    for img in pyr.levels:
        assert values.min() <= img.pixels.min() and img.pixels.max() <= values.max()


def test_even_dims_keep_plain_mean():
    values = np.random.default_rng(5).integers(0, 256, size=(64, 32))
    pyr = build_pyramid(GrayImage(values), top_target=1)
    base = Fraction(int(values.sum()), values.size)
    for img in pyr.levels:
        assert Fraction(int(img.numer.sum()), img.scale * img.numer.size) == base


def test_bad_target():
    with pytest.raises(ValueError):
        build_pyramid(GrayImage(np.zeros((2, 2))), top_target=0)
