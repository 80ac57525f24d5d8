import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pyramidseg.raster import (
    GrayImage,
    MalformedHeaderError,
    UnreadableFileError,
    UnsupportedDepthError,
    UnwritablePathError,
    encode_labels,
    load_image,
    load_labels,
    parse_pgm,
    save_image,
    save_labels,
    splitmix64,
    synth_scene,
)


def write(path, payload: bytes):
    path.write_bytes(payload)
    return path


def test_load_2x2_zero(tmp_path):
    f = write(tmp_path / "z.pgm", b"P5\n2 2\n255\n\x00\x00\x00\x00")
    img = load_image(f)
    assert (img.width, img.height) == (2, 2)
    assert img.intensities.tolist() == [0, 0, 0, 0]


def test_canonical_roundtrip_is_byte_identical(tmp_path):
    rng = np.random.default_rng(3)
    payload = b"P5\n7 5\n255\n" + rng.integers(0, 256, 35, dtype=np.uint8).tobytes()
    f = write(tmp_path / "a.pgm", payload)
    save_image(load_image(f), tmp_path / "b.pgm")
    assert (tmp_path / "b.pgm").read_bytes() == payload


def test_512_square_size(tmp_path):
    f = write(tmp_path / "big.pgm", b"P5\n512 512\n255\n" + bytes(512 * 512))
    assert load_image(f).intensities.size == 262144


def test_header_comments_and_whitespace():
    img = parse_pgm(b"P5 # magic\n# a comment\n3\t1\n# another\n255\n\x01\x02\x03")
    assert img.intensities.tolist() == [1, 2, 3]


def test_writer_emits_exact_header():
    img = GrayImage(np.array([[1, 2, 3]]), 1)
    from pyramidseg.raster import encode_pgm

    assert encode_pgm(img) == b"P5\n3 1\n255\n\x01\x02\x03"


@pytest.mark.parametrize(
    "payload, error",
    [
        (b"P2\n1 1\n255\n0", MalformedHeaderError),
        (b"P5\n1\n", MalformedHeaderError),
        (b"P5\nx 1\n255\n\x00", MalformedHeaderError),
        (b"P5\n2 2\n255\n\x00", MalformedHeaderError),
        (b"P5\n1 1\n65535\n\x00\x00", UnsupportedDepthError),
        (b"P5\n1 1\n15\n\x00", UnsupportedDepthError),
    ],
)
def test_bad_files_raise_distinct_errors(tmp_path, payload, error):
    f = write(tmp_path / "bad.pgm", payload)
    with pytest.raises(error, match="bad.pgm"):
        load_image(f)


def test_missing_file(tmp_path):
    with pytest.raises(UnreadableFileError, match="nope.pgm"):
        load_image(tmp_path / "nope.pgm")


def test_unwritable(tmp_path):
    with pytest.raises(UnwritablePathError):
        save_image(GrayImage(np.zeros((1, 1)), 1), tmp_path / "no" / "such" / "dir.pgm")


@pytest.mark.parametrize("value, stored", [(127.5, 128), (126.5, 126), (0.5, 0), (1.5, 2), (254.5, 254), (3.25, 3)])
def test_output_rounds_half_to_even(tmp_path, value, stored):
    save_image(GrayImage.from_array([[value]]), tmp_path / "r.pgm")
    assert (tmp_path / "r.pgm").read_bytes()[-1] == stored


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.integers(0, 1020).map(lambda k: k / 4)))
def test_roundtrip_up_to_rounding(tmp_path_factory, values):
    img = GrayImage.from_array(values)
    path = tmp_path_factory.mktemp("rt") / "x.pgm"
    save_image(img, path)
    back = load_image(path)
    assert np.array_equal(back.pixels, np.round(values))  # numpy rounds half to even


def test_from_array_is_exact_on_dyadic_grid():
    img = GrayImage.from_array([[0.125, 255.0], [17.5, 3.0]])
    assert img.scale == 8
    assert img.numer.tolist() == [[1, 2040], [140, 24]]


@pytest.mark.parametrize("bad", [[[-1.0]], [[256.0]], [[np.nan]]])
def test_from_array_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        GrayImage.from_array(bad)


def test_label_sidecar_roundtrip(tmp_path):
    labels = np.array([[0, 1, 12], [3, 3, 4]])
    assert encode_labels(labels) == "LABELS 3 2\n0 1 12\n3 3 4\n"
    save_labels(labels, tmp_path / "l.labels")
    assert np.array_equal(load_labels(tmp_path / "l.labels"), labels)


def test_label_sidecar_rejects_ragged(tmp_path):
    (tmp_path / "l.labels").write_text("LABELS 2 2\n0 1\n0\n")
    with pytest.raises(MalformedHeaderError):
        load_labels(tmp_path / "l.labels")


def test_splitmix64_reference_values():
    # published SplitMix64 outputs for seed 0
    assert splitmix64(0, 3).tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_synth_uniform():
    img, truth = synth_scene(8, 6, [], background=100)
    assert np.all(img.pixels == 100)
    assert np.all(truth == 0)


def test_synth_one_rectangle_two_regions():
    img, truth = synth_scene(32, 32, [((5, 7, 10, 10), 200)], background=50)
    assert truth.max() == 1
    assert np.all(img.pixels[7:17, 5:15] == 200)
    assert (img.pixels == 200).sum() == 100
    assert np.all(truth[7:17, 5:15] == 1)


def test_synth_later_rectangles_overwrite():
    img, truth = synth_scene(10, 10, [((0, 0, 6, 6), 100), ((3, 3, 6, 6), 200)], background=0)
    assert img.pixels[4, 4] == 200 and img.pixels[1, 1] == 100
    assert truth.max() == 2


def test_synth_is_deterministic_and_bounded():
    a, _ = synth_scene(40, 30, [((2, 2, 10, 10), 253)], background=2, noise_amplitude=5, rng_seed=11)
    b, _ = synth_scene(40, 30, [((2, 2, 10, 10), 253)], background=2, noise_amplitude=5, rng_seed=11)
    c, _ = synth_scene(40, 30, [((2, 2, 10, 10), 253)], background=2, noise_amplitude=5, rng_seed=12)
    assert a == b
    assert not a == c
    px = a.pixels
    assert px.min() >= 0 and px.max() <= 255
    assert np.all(np.abs(px[15:, 15:] - 2) <= 5)


def test_synth_rejects_out_of_bounds():
    with pytest.raises(ValueError, match="out of bounds"):
        synth_scene(10, 10, [((5, 5, 6, 2), 10)])
