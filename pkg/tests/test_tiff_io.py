"""Minimal TIFF subset: golden bytes, round trips, foreign-file handling."""

import struct

import numpy as np
import pytest
from PIL import Image

from fmlc import (
    GeoTag,
    LabelMap,
    MalformedTiffError,
    MultiBandRaster,
    UnsupportedTiffError,
    read_geo_tags,
    read_label_tiff,
    read_tag_set,
    read_tiff,
    write_label_tiff,
)

LEGEND4 = ("water", "vegetation", "built_area", "bare_ground")


def entry(endian, tag, field_type, count, value4):
    return struct.pack(f"{endian}HHI", tag, field_type, count) + value4


def short_val(endian, v):
    return struct.pack(f"{endian}H", v) + b"\x00\x00"


def long_val(endian, v):
    return struct.pack(f"{endian}I", v)


def build_little_endian_2x2(compression=1):
    """Hand-assembled from the format definition: the golden fixture."""
    payload = bytes([0, 1, 2, 3])
    ifd_offset = 8 + len(payload)
    fields = [
        (256, 4, 1, long_val("<", 2)),
        (257, 4, 1, long_val("<", 2)),
        (258, 3, 1, short_val("<", 8)),
        (259, 3, 1, short_val("<", compression)),
        (262, 3, 1, short_val("<", 1)),
        (273, 4, 1, long_val("<", 8)),
        (277, 3, 1, short_val("<", 1)),
        (278, 4, 1, long_val("<", 64)),
        (279, 4, 1, long_val("<", 4)),
    ]
    ifd = struct.pack("<H", len(fields))
    for tag, ft, cnt, val in fields:
        ifd += entry("<", tag, ft, cnt, val)
    ifd += struct.pack("<I", 0)
    return b"II" + struct.pack("<HI", 42, ifd_offset) + payload + ifd


def build_big_endian_2x2():
    """MM byte-order fixture with pixel values 10..13."""
    fields = [
        (256, 3, 1, short_val(">", 2)),
        (257, 3, 1, short_val(">", 2)),
        (258, 3, 1, short_val(">", 8)),
        (259, 3, 1, short_val(">", 1)),
        (262, 3, 1, short_val(">", 1)),
        (273, 4, 1, None),  # patched below
        (277, 3, 1, short_val(">", 1)),
        (278, 4, 1, long_val(">", 2)),
        (279, 4, 1, long_val(">", 4)),
    ]
    ifd_size = 2 + 12 * len(fields) + 4
    data_offset = 8 + ifd_size
    ifd = struct.pack(">H", len(fields))
    for tag, ft, cnt, val in fields:
        if tag == 273:
            val = long_val(">", data_offset)
        ifd += entry(">", tag, ft, cnt, val)
    ifd += struct.pack(">I", 0)
    return b"MM" + struct.pack(">HI", 42, 8) + ifd + bytes([10, 11, 12, 13])


class TestGoldenBytes:
    def test_2x2_matches_hand_assembled_bytes(self, tmp_path):
        m = LabelMap(np.array([[0, 1], [2, 3]], dtype=np.uint8), LEGEND4)
        path = tmp_path / "g.tif"
        write_label_tiff(m, path)
        assert path.read_bytes() == build_little_endian_2x2()

    def test_2x2_strip_bytes_are_pixel_order(self, tmp_path):
        m = LabelMap(np.array([[0, 1], [2, 3]], dtype=np.uint8), LEGEND4)
        path = tmp_path / "s.tif"
        write_label_tiff(m, path)
        tags = read_tag_set(path)
        blob = path.read_bytes()
        strip = blob[tags.strip_offsets[0] : tags.strip_offsets[0] + tags.strip_byte_counts[0]]
        assert strip == bytes([0, 1, 2, 3])


class TestRoundTrip:
    def test_multi_strip_random_labels(self, tmp_path):
        rng = np.random.default_rng(21)
        data = rng.integers(0, 4, size=(257, 131), dtype=np.uint8)
        m = LabelMap(data, LEGEND4)
        path = tmp_path / "big.tif"
        write_label_tiff(m, path)
        back = read_label_tiff(path)
        assert np.array_equal(back.data, m.data)
        tags = read_tag_set(path)
        assert len(tags.strip_offsets) == 5  # ceil(257 / 64)
        assert sum(tags.strip_byte_counts) == 257 * 131

    def test_single_row(self, tmp_path):
        m = LabelMap(np.array([[0, 1, 0]], dtype=np.uint8), ("a", "b"))
        path = tmp_path / "row.tif"
        write_label_tiff(m, path)
        assert np.array_equal(read_label_tiff(path).data, m.data)

    def test_256_class_legend_roundtrips(self, tmp_path):
        data = np.arange(256, dtype=np.uint8).reshape(16, 16)
        m = LabelMap(data, tuple(f"c{i}" for i in range(256)))
        path = tmp_path / "full.tif"
        write_label_tiff(m, path)
        assert np.array_equal(read_label_tiff(path).data, data)

    def test_emitted_byte_count_invariant(self, tmp_path):
        rng = np.random.default_rng(3)
        for shape in ((1, 1), (64, 64), (65, 3), (130, 7)):
            m = LabelMap(rng.integers(0, 3, size=shape, dtype=np.uint8), ("x", "y", "z"))
            path = tmp_path / f"{shape[0]}x{shape[1]}.tif"
            write_label_tiff(m, path)
            tags = read_tag_set(path)
            assert sum(tags.strip_byte_counts) == tags.payload_bytes()
            assert tags.compression == 1


class TestForeignFiles:
    def test_big_endian_decodes_correctly(self, tmp_path):
        path = tmp_path / "mm.tif"
        path.write_bytes(build_big_endian_2x2())
        back = read_label_tiff(path)
        assert np.array_equal(back.data, [[10, 11], [12, 13]])

    def test_pillow_reads_our_output(self, tmp_path):
        rng = np.random.default_rng(8)
        data = rng.integers(0, 4, size=(70, 41), dtype=np.uint8)
        path = tmp_path / "ours.tif"
        write_label_tiff(LabelMap(data, LEGEND4), path)
        with Image.open(path) as img:
            assert np.array_equal(np.asarray(img), data)

    def test_we_read_pillow_output(self, tmp_path):
        rng = np.random.default_rng(13)
        data = rng.integers(0, 5, size=(33, 57), dtype=np.uint8)
        path = tmp_path / "pil.tif"
        Image.fromarray(data).save(path, format="TIFF")
        back = read_label_tiff(path)
        assert np.array_equal(back.data, data)

    def test_float32_tiff_reads_as_raster(self, tmp_path):
        rng = np.random.default_rng(14)
        data = rng.normal(size=(9, 5)).astype(np.float32)
        path = tmp_path / "f32.tif"
        Image.fromarray(data, mode="F").save(path, format="TIFF")
        back = read_tiff(path)
        assert isinstance(back, MultiBandRaster)
        assert np.array_equal(back.data[:, :, 0], data)


class TestErrors:
    def test_zero_length_file(self, tmp_path):
        path = tmp_path / "empty.tif"
        path.write_bytes(b"")
        with pytest.raises(MalformedTiffError):
            read_label_tiff(path)

    def test_not_a_tiff(self, tmp_path):
        path = tmp_path / "x.tif"
        path.write_bytes(b"PNG whatever this is")
        with pytest.raises(MalformedTiffError):
            read_label_tiff(path)

    def test_compression_5_rejected_with_tag_name(self, tmp_path):
        path = tmp_path / "lzw.tif"
        path.write_bytes(build_little_endian_2x2(compression=5))
        with pytest.raises(UnsupportedTiffError, match="259"):
            read_label_tiff(path)

    def test_tiled_layout_rejected(self, tmp_path):
        m = LabelMap(np.zeros((4, 4), dtype=np.uint8), ("only",))
        path = tmp_path / "base.tif"
        write_label_tiff(m, path)
        blob = bytearray(path.read_bytes())
        # rewrite the SamplesPerPixel entry (tag 277) as TileWidth (322)
        idx = blob.index(struct.pack("<HHI", 277, 3, 1))
        blob[idx : idx + 2] = struct.pack("<H", 322)
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedTiffError, match="tiled"):
            read_label_tiff(path)

    def test_truncated_strip_rejected(self, tmp_path):
        m = LabelMap(np.zeros((64, 64), dtype=np.uint8), ("only",))
        path = tmp_path / "trunc.tif"
        write_label_tiff(m, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: 8 + 100])  # cut inside the pixel strip
        with pytest.raises(MalformedTiffError):
            read_label_tiff(path)

    def test_bigtiff_rejected(self, tmp_path):
        path = tmp_path / "big.tif"
        path.write_bytes(b"II" + struct.pack("<HI", 43, 16) + b"\x00" * 16)
        with pytest.raises(UnsupportedTiffError, match="BigTIFF"):
            read_label_tiff(path)


class TestGeoPassthrough:
    GEO = (
        GeoTag(33550, 12, 3, struct.pack("<3d", 3.0, 3.0, 0.0)),
        GeoTag(33922, 12, 6, struct.pack("<6d", 0, 0, 0, 55.27, 25.2, 0)),
        GeoTag(34735, 3, 8, struct.pack("<8H", 1, 1, 0, 1, 1024, 0, 1, 2)),
        GeoTag(34737, 2, 7, b"WGS 84|"),
    )

    def test_written_geo_tags_read_back(self, tmp_path):
        m = LabelMap(np.zeros((5, 5), dtype=np.uint8), ("only",))
        path = tmp_path / "geo.tif"
        write_label_tiff(m, path, geo=self.GEO)
        assert read_geo_tags(path) == self.GEO
        assert np.array_equal(read_label_tiff(path).data, m.data)

    def test_geo_reemission_is_stable(self, tmp_path):
        m = LabelMap(np.zeros((5, 5), dtype=np.uint8), ("only",))
        first = tmp_path / "a.tif"
        second = tmp_path / "b.tif"
        write_label_tiff(m, first, geo=self.GEO)
        write_label_tiff(m, second, geo=read_geo_tags(first))
        assert first.read_bytes() == second.read_bytes()

    def test_pillow_tolerates_geo_tags(self, tmp_path):
        m = LabelMap(np.arange(4, dtype=np.uint8).reshape(2, 2), LEGEND4)
        path = tmp_path / "geo2.tif"
        write_label_tiff(m, path, geo=self.GEO)
        with Image.open(path) as img:
            assert np.array_equal(np.asarray(img), m.data)

    def test_no_geo_yields_empty(self, tmp_path):
        m = LabelMap(np.zeros((2, 2), dtype=np.uint8), ("only",))
        path = tmp_path / "plain.tif"
        write_label_tiff(m, path)
        assert read_geo_tags(path) == ()
