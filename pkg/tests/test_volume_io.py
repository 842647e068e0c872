"""Volume file parsing, round trips, slicing and the gray label encoding."""

import numpy as np
import pytest

from spineseg import phantoms, volume_io
from spineseg.errors import (
    ExcessPayloadError,
    MalformedLineError,
    MissingKeyError,
    TruncatedPayloadError,
    UnknownLevelError,
    UnsupportedValueError,
)
from spineseg.volume_io import (
    AXIAL_OVERRIDE,
    ELEMENT_DTYPES,
    SliceSpec,
    Volume,
    decode_label_raster,
    encode_label_raster,
    extract_slices,
    make_volume,
    parse_header,
    read_raster,
    read_volume,
    write_raster,
    write_volume,
)

GOOD_HEADER = (
    b"NDims = 3\n"
    b"DimSize = 3 2 2\n"
    b"ElementType = MET_UCHAR\n"
    b"ElementSpacing = 0.5 0.5 3.3\n"
    b"BinaryData = True\n"
    b"BinaryDataByteOrderMSB = False\n"
    b"ElementDataFile = LOCAL\n"
)


def test_parse_header_fields():
    header = parse_header(GOOD_HEADER + b"xxxx")
    assert header.ndims == 3
    assert header.dim_size == (3, 2, 2)
    assert header.element_type == "MET_UCHAR"
    assert header.element_spacing == (0.5, 0.5, 3.3)
    assert header.binary_data is True
    assert header.byte_order_msb is False
    assert header.voxel_count == 12
    assert header.header_byte_length == len(GOOD_HEADER)
    assert header.dtype == np.dtype(np.uint8)


def test_parse_header_keeps_unknown_keys_in_order():
    data = GOOD_HEADER.replace(
        b"ElementDataFile = LOCAL\n",
        b"Offset = 0 0 0\nAnatomicalOrientation = RAI\nElementDataFile = LOCAL\n",
    )
    header = parse_header(data)
    assert header.extra_keys == [("Offset", "0 0 0"),
                                 ("AnatomicalOrientation", "RAI")]


def header_variant(old: bytes, new: bytes) -> bytes:
    assert old in GOOD_HEADER
    return GOOD_HEADER.replace(old, new)


@pytest.mark.parametrize("data,err", [
    (b"NDims \xff= 3\n" + GOOD_HEADER, MalformedLineError),
    (b"no equals sign here\n" + GOOD_HEADER, MalformedLineError),
    (GOOD_HEADER.replace(b"ElementDataFile = LOCAL\n", b""), MissingKeyError),
    (header_variant(b"NDims = 3\n", b""), MissingKeyError),
    (header_variant(b"DimSize = 3 2 2\n", b""), MissingKeyError),
    (header_variant(b"ElementType = MET_UCHAR\n", b""), MissingKeyError),
    (header_variant(b"NDims = 3\n", b"NDims = 2\n"), UnsupportedValueError),
    (header_variant(b"NDims = 3\n", b"NDims = many\n"), UnsupportedValueError),
    (header_variant(b"DimSize = 3 2 2\n", b"DimSize = 3 2\n"), UnsupportedValueError),
    (header_variant(b"DimSize = 3 2 2\n", b"DimSize = 3 0 2\n"), UnsupportedValueError),
    (header_variant(b"ElementType = MET_UCHAR\n", b"ElementType = MET_DOUBLE\n"),
     UnsupportedValueError),
    (header_variant(b"ElementSpacing = 0.5 0.5 3.3\n", b"ElementSpacing = 1 2\n"),
     UnsupportedValueError),
    (header_variant(b"ElementSpacing = 0.5 0.5 3.3\n", b"ElementSpacing = 1 2 fat\n"),
     UnsupportedValueError),
    (header_variant(b"ElementSpacing = 0.5 0.5 3.3\n", b"ElementSpacing = 1 -1 1\n"),
     UnsupportedValueError),
    (header_variant(b"BinaryData = True\n", b"BinaryData = False\n"),
     UnsupportedValueError),
    (header_variant(b"BinaryData = True\n", b"BinaryData = perhaps\n"),
     UnsupportedValueError),
    (header_variant(b"ElementDataFile = LOCAL\n", b"ElementDataFile = run42.raw\n"),
     UnsupportedValueError),
])
def test_parse_header_error_taxonomy(data, err):
    with pytest.raises(err):
        parse_header(data)


def test_payload_size_must_match_header():
    with pytest.raises(TruncatedPayloadError):
        read_volume(GOOD_HEADER + b"\x00" * 11)
    with pytest.raises(ExcessPayloadError):
        read_volume(GOOD_HEADER + b"\x00" * 13)


def test_read_volume_orders_axes_x_fastest():
    payload = bytes(range(12))
    vol = read_volume(GOOD_HEADER + payload)
    assert vol.voxels.shape == (2, 2, 3)  # (nz, ny, nx)
    assert vol.voxels[0, 0, 2] == 2   # third byte is x index 2
    assert vol.voxels[0, 1, 0] == 3   # fourth byte wraps to the next row
    assert vol.voxels[1, 0, 0] == 6   # second plane starts after 6 voxels


def test_write_read_round_trip_is_byte_identical():
    rng = np.random.default_rng(701)
    for element_type in ELEMENT_DTYPES:
        for _ in range(20):
            vol = phantoms.make_random_volume(rng, element_type)
            blob = write_volume(vol)
            back = read_volume(blob)
            assert back.header.dim_size == vol.header.dim_size
            assert back.header.element_spacing == vol.header.element_spacing
            assert back.header.element_type == element_type
            assert np.array_equal(back.voxels, vol.voxels)
            assert write_volume(back) == blob


def test_round_trip_preserves_big_endian_payloads():
    vox = np.arange(8, dtype=np.int16).reshape(2, 2, 2) * 257 - 1000
    vol = make_volume(vox, "MET_SHORT")
    vol.header.byte_order_msb = True
    blob = write_volume(vol)
    # wire bytes really are big endian
    offset = blob.index(b"ElementDataFile = LOCAL\n") + len(b"ElementDataFile = LOCAL\n")
    want = vox.astype(">i2").tobytes()
    assert blob[offset:] == want
    back = read_volume(blob)
    assert back.voxels.dtype == np.dtype(np.int16)
    assert np.array_equal(back.voxels, vox)
    assert write_volume(back) == blob


def test_round_trip_keeps_extra_keys():
    data = GOOD_HEADER.replace(
        b"ElementDataFile = LOCAL\n",
        b"CompressedData = False\nElementDataFile = LOCAL\n",
    ) + bytes(12)
    vol = read_volume(data)
    assert vol.header.extra_keys == [("CompressedData", "False")]
    assert b"CompressedData = False" in write_volume(vol)


def test_write_volume_validates_consistency():
    vol = make_volume(np.zeros((2, 2, 2), dtype=np.uint8))
    vol.header.dim_size = (3, 2, 2)
    with pytest.raises(UnsupportedValueError):
        write_volume(vol)
    vol = make_volume(np.zeros((2, 2, 2), dtype=np.uint8))
    vol.voxels = vol.voxels.astype(np.int16)
    with pytest.raises(UnsupportedValueError):
        write_volume(vol)


def test_make_volume_infers_element_type():
    vol = make_volume(np.zeros((1, 2, 3), dtype=np.float32))
    assert vol.header.element_type == "MET_FLOAT"
    assert vol.header.dim_size == (3, 2, 1)  # x first
    with pytest.raises(UnsupportedValueError):
        make_volume(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(UnsupportedValueError):
        make_volume(np.zeros((1, 1, 1), dtype=np.complex64))


def test_save_load_round_trip(tmp_path):
    vol = phantoms.make_random_volume(17, "MET_USHORT")
    path = tmp_path / "case.mha"
    volume_io.save_volume(path, vol)
    back = volume_io.load_volume(path)
    assert np.array_equal(back.voxels, vol.voxels)
    assert back.header.element_spacing == vol.header.element_spacing


# ------------------------------------------------------------- slicing


def test_extract_slices_axis_selection():
    vox = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    vol = make_volume(vox, "MET_SHORT")
    default = extract_slices(vol, SliceSpec(), mode="mask")
    assert len(default) == 2
    assert np.array_equal(default[0], vox[0])
    override = extract_slices(vol, SliceSpec(axis=AXIAL_OVERRIDE), mode="mask")
    assert len(override) == 4
    assert np.array_equal(override[1], vox[:, :, 1])


def test_extract_slices_orientation_order():
    vox = np.arange(6, dtype=np.uint8).reshape(1, 2, 3)
    vol = make_volume(vox)
    spec = SliceSpec(rotate_quarter_turns=1, flip_horizontal=True)
    got = extract_slices(vol, spec, mode="mask")[0]
    want = np.fliplr(np.rot90(vox[0], 1))  # rotate first, then mirror
    assert np.array_equal(got, want)
    spec = SliceSpec(rotate_quarter_turns=2, flip_vertical=True)
    got = extract_slices(vol, spec, mode="mask")[0]
    assert np.array_equal(got, np.flipud(np.rot90(vox[0], 2)))


def test_image_mode_scales_minmax_to_gray8():
    vox = np.array([[[0, 1], [2, 3]]], dtype=np.int16)
    got = extract_slices(make_volume(vox, "MET_SHORT"), mode="image")[0]
    assert got.dtype == np.uint8
    assert got.tolist() == [[0, 85], [170, 255]]
    flat = np.full((1, 2, 2), 7, dtype=np.int16)
    got = extract_slices(make_volume(flat, "MET_SHORT"), mode="image")[0]
    assert got.tolist() == [[0, 0], [0, 0]]


def test_mask_mode_rejects_bad_values():
    vol = make_volume(np.full((1, 2, 2), 300, dtype=np.int16), "MET_SHORT")
    with pytest.raises(UnsupportedValueError):
        extract_slices(vol, mode="mask")
    vol = make_volume(np.zeros((1, 2, 2), dtype=np.float32), "MET_FLOAT")
    with pytest.raises(UnsupportedValueError):
        extract_slices(vol, mode="mask")


def test_extract_slices_validates_spec():
    vol = make_volume(np.zeros((1, 2, 2), dtype=np.uint8))
    with pytest.raises(UnsupportedValueError):
        extract_slices(vol, SliceSpec(axis="coronal"))
    with pytest.raises(UnsupportedValueError):
        extract_slices(vol, mode="contour")


# -------------------------------------------------------- label rasters


def test_label_gray_round_trip():
    labels = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    gray = encode_label_raster(labels)
    assert gray.tolist() == [[0, 85], [170, 255]]
    assert np.array_equal(decode_label_raster(gray), labels)


def test_label_encoding_rejects_out_of_range():
    with pytest.raises(UnknownLevelError):
        encode_label_raster(np.array([[4]]))
    with pytest.raises(UnknownLevelError):
        encode_label_raster(np.array([[-1]]))
    with pytest.raises(UnsupportedValueError):
        encode_label_raster(np.array([[0.5]]))
    with pytest.raises(UnsupportedValueError):
        encode_label_raster(np.zeros(3, dtype=np.uint8))


def test_label_decoding_rejects_unknown_levels():
    with pytest.raises(UnknownLevelError) as err:
        decode_label_raster(np.array([[0, 85], [170, 86]], dtype=np.uint8))
    assert "86" in str(err.value)


def test_png_round_trips(tmp_path):
    rng = np.random.default_rng(702)
    gray = rng.integers(0, 256, size=(9, 7)).astype(np.uint8)
    color = rng.integers(0, 256, size=(5, 6, 3)).astype(np.uint8)
    write_raster(tmp_path / "g.png", gray)
    write_raster(tmp_path / "c.png", color)
    assert np.array_equal(read_raster(tmp_path / "g.png"), gray)
    assert np.array_equal(read_raster(tmp_path / "c.png"), color)
    with pytest.raises(UnsupportedValueError):
        write_raster(tmp_path / "bad.png", np.zeros((2, 2, 4), dtype=np.uint8))


def test_case_volume_pair_is_consistent():
    image, mask = phantoms.make_case_volumes(seed=31, slices=3)
    assert image.header.dim_size == mask.header.dim_size
    assert image.header.element_type == "MET_SHORT"
    assert mask.header.element_type == "MET_UCHAR"
    assert mask.voxels.max() < len(phantoms.EXPORT_PALETTE)
    slices = extract_slices(mask, mode="mask")
    assert len(slices) == 3
    assert all(s.shape == slices[0].shape for s in slices)
