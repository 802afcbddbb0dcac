import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advfilter.core import (
    FormatError,
    Image,
    LabeledDataset,
    ParameterError,
    ShapeError,
    decode_netpbm,
    encode_netpbm,
    generate_shape_dataset,
    load_idx_dataset,
    load_image,
    parse_data_source,
    quantize,
    save_image,
    write_idx_dataset,
)


# --- Image ---------------------------------------------------------------


def test_image_accepts_2d_and_copies():
    a = np.zeros((2, 3))
    img = Image(a)
    a[0, 0] = 1.0
    assert img.shape == (2, 3, 1)
    assert img.data[0, 0, 0] == 0.0
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 0.5


@pytest.mark.parametrize(
    "bad, err",
    [
        (np.zeros((2, 2, 2)), ShapeError),
        (np.zeros((0, 2, 1)), ShapeError),
        (np.full((2, 2), 1.5), ParameterError),
        (np.full((2, 2), -0.1), ParameterError),
        (np.full((2, 2), np.nan), ParameterError),
    ],
)
def test_image_rejects_invalid(bad, err):
    with pytest.raises(err):
        Image(bad)


def test_image_equality():
    assert Image(np.full((2, 2), 0.5)) == Image(np.full((2, 2, 1), 0.5))
    assert Image(np.full((2, 2), 0.5)) != Image(np.full((2, 2), 0.25))


# --- netpbm ----------------------------------------------------------------


def test_p5_single_white_pixel():
    img = decode_netpbm(b"P5\n1 1\n255\n\xff")
    assert img.shape == (1, 1, 1)
    assert img.data[0, 0, 0] == 1.0


def test_p6_single_pixel_scaling():
    img = decode_netpbm(b"P6\n1 1\n255\n" + bytes([0, 128, 255]))
    assert img.shape == (1, 1, 3)
    np.testing.assert_array_equal(img.data[0, 0], [0.0, 128 / 255, 1.0])


def test_header_comments_and_whitespace():
    img = decode_netpbm(b"P5 # a comment\n 2\t1 # more\n255\n" + bytes([10, 20]))
    np.testing.assert_array_equal(img.data[0, :, 0], [10 / 255, 20 / 255])


def test_half_rounds_up():
    assert encode_netpbm(Image(np.full((1, 1), 0.5))).endswith(bytes([128]))
    assert encode_netpbm(Image(np.zeros((1, 1, 3)))).endswith(bytes([0, 0, 0]))


def test_quantize_round_half_up():
    np.testing.assert_array_equal(
        quantize(np.array([0.0, 0.5 / 255, 1.5 / 255, 127.5 / 255, 1.0])), [0, 1, 2, 128, 255]
    )


@pytest.mark.parametrize(
    "buf, field",
    [
        (b"P3\n1 1\n255\n\x00", "magic"),
        (b"P5\n1 1\n65535\n\x00\x00", "maxval"),
        (b"P5\n2 2\n255\n\x00", "payload"),
        (b"P5\n2", "height"),
        (b"P5\nx 1\n255\n\x00", "integer"),
    ],
)
def test_netpbm_errors_name_the_field(buf, field):
    with pytest.raises(FormatError, match=field):
        decode_netpbm(buf)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8), st.sampled_from([1, 3])),
           elements=st.floats(0, 1)),
)
def test_netpbm_roundtrip_is_byte_exact(a):
    first = encode_netpbm(Image(a))
    again = decode_netpbm(first)
    assert encode_netpbm(again) == first
    # quantized images survive exactly
    np.testing.assert_array_equal(again.data, quantize(a) / 255.0)


def test_save_load_save_files(tmp_path):
    rng = np.random.default_rng(0)
    img = Image(rng.random((8, 8, 3)))
    save_image(img, tmp_path / "a.ppm")
    save_image(load_image(tmp_path / "a.ppm"), tmp_path / "b.ppm")
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


def test_save_to_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_image(Image(np.zeros((1, 1))), tmp_path / "missing" / "x.pgm")


# --- IDX -------------------------------------------------------------------


def _write(path, data):
    path.write_bytes(data)
    return path


def test_idx_minimal_pair(tmp_path):
    imgs = _write(tmp_path / "i", struct.pack(">4I", 0x803, 1, 2, 2) + bytes([0, 51, 102, 255]))
    lbls = _write(tmp_path / "l", struct.pack(">2I", 0x801, 1) + bytes([7]))
    ds = load_idx_dataset(imgs, lbls)
    assert len(ds) == 1 and ds.image_shape == (2, 2, 1)
    assert ds.labels.tolist() == [7]
    assert ds.num_classes == 8
    np.testing.assert_array_equal(ds.images[0, :, :, 0], [[0, 0.2], [0.4, 1.0]])


def test_idx_count_mismatch(tmp_path):
    imgs = _write(tmp_path / "i", struct.pack(">4I", 0x803, 2, 1, 1) + bytes(2))
    lbls = _write(tmp_path / "l", struct.pack(">2I", 0x801, 3) + bytes(3))
    with pytest.raises(FormatError, match="count mismatch"):
        load_idx_dataset(imgs, lbls)


@pytest.mark.parametrize("which", ["images", "labels"])
def test_idx_bad_magic(tmp_path, which):
    imgs = struct.pack(">4I", 0x803, 1, 1, 1) + bytes(1)
    lbls = struct.pack(">2I", 0x801, 1) + bytes(1)
    if which == "images":
        imgs = struct.pack(">I", 0x802) + imgs[4:]
    else:
        lbls = struct.pack(">I", 0x0801_0000) + lbls[4:]
    with pytest.raises(FormatError, match="magic"):
        load_idx_dataset(_write(tmp_path / "i", imgs), _write(tmp_path / "l", lbls))


def test_idx_truncated(tmp_path):
    imgs = _write(tmp_path / "i", struct.pack(">4I", 0x803, 1, 2, 2) + bytes(3))
    lbls = _write(tmp_path / "l", struct.pack(">2I", 0x801, 1) + bytes(1))
    with pytest.raises(FormatError, match="truncated"):
        load_idx_dataset(imgs, lbls)
    with pytest.raises(FormatError, match="truncated"):
        load_idx_dataset(_write(tmp_path / "j", b"\x00\x00\x08\x03\x00"), lbls)


def test_idx_roundtrip(tmp_path):
    ds = generate_shape_dataset(3, 16, seed=4)
    write_idx_dataset(ds, tmp_path / "i", tmp_path / "l")
    back = load_idx_dataset(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.images, quantize(ds.images) / 255.0)
    assert parse_data_source(f"{tmp_path / 'i'},{tmp_path / 'l'}").labels.tolist() == ds.labels.tolist()


# --- datasets --------------------------------------------------------------


def test_shape_dataset_is_deterministic():
    a, b = generate_shape_dataset(5, seed=3), generate_shape_dataset(5, seed=3)
    assert a.images.tobytes() == b.images.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert generate_shape_dataset(5, seed=4).images.tobytes() != a.images.tobytes()


def test_shape_dataset_counts():
    ds = generate_shape_dataset(5)
    assert len(ds) == 20
    assert np.bincount(ds.labels).tolist() == [5, 5, 5, 5]
    assert ds.image_shape == (32, 32, 1)
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


def test_shape_dataset_rejects_small_side():
    with pytest.raises(ParameterError):
        generate_shape_dataset(1, side=15)


def test_dataset_helpers():
    ds = generate_shape_dataset(2, 16)
    img, label = ds[3]
    assert label == 3 and img.shape == (16, 16, 1)
    again = LabeledDataset.from_items(ds.items, 4)
    assert again.images.tobytes() == ds.images.tobytes()
    assert ds.subset([1, 2]).labels.tolist() == [1, 2]
    with pytest.raises(ShapeError):
        LabeledDataset.from_items([(Image(np.zeros((2, 2))), 0), (Image(np.zeros((3, 3))), 0)], 1)


@pytest.mark.parametrize("src", ["synthetic:1", "synthetic:a:2", "one.idx"])
def test_bad_data_source(src):
    with pytest.raises(ParameterError):
        parse_data_source(src)
