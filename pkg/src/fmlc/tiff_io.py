"""Classic TIFF 6.0 baseline subset: uncompressed strip rasters.

Writer emits single-band uint8 label maps (little-endian, rows_per_strip=64,
fixed tag layout so output bytes are stable). Reader decodes uncompressed
strip-based files, u8 or f32, single- or multi-sample, either byte order.
Geo-referencing tags are carried as opaque value bytes and re-emitted
verbatim; they are never interpreted.

Out of scope by design: compression codecs, tiled layout, BigTIFF,
overviews, palette color, CRS math.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MalformedTiffError,
    TiffCapacityError,
    UnsupportedTiffError,
)
from .raster import LabelMap, MultiBandRaster, default_legend

ROWS_PER_STRIP = 64

_TAG_WIDTH = 256
_TAG_LENGTH = 257
_TAG_BITS = 258
_TAG_COMPRESSION = 259
_TAG_PHOTOMETRIC = 262
_TAG_STRIP_OFFSETS = 273
_TAG_SAMPLES = 277
_TAG_ROWS_PER_STRIP = 278
_TAG_STRIP_COUNTS = 279
_TAG_PLANAR = 284
_TAG_TILE_WIDTH = 322
_TAG_TILE_LENGTH = 323
_TAG_SAMPLE_FORMAT = 339

# ModelPixelScale, ModelTiepoint, ModelTransformation, GeoKeyDirectory,
# GeoDoubleParams, GeoAsciiParams, GDAL metadata/nodata
GEO_TAGS = (33550, 33922, 34264, 34735, 34736, 34737, 42112, 42113)

_TYPE_SIZE = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}
# struct codes for endian-sensitive numeric types; byte-like types pass through raw
_TYPE_CODE = {3: "H", 4: "I", 8: "h", 9: "i", 11: "f", 12: "d"}


@dataclass(frozen=True)
class GeoTag:
    """One geo-referencing IFD entry, value bytes in little-endian order."""

    tag: int
    field_type: int
    count: int
    value: bytes


GeoTags = tuple[GeoTag, ...]


@dataclass(frozen=True)
class TiffTagSet:
    """Decoded layout tags of a supported file (used for validation)."""

    width: int
    length: int
    bits_per_sample: int
    compression: int
    photometric: int
    strip_offsets: tuple[int, ...]
    rows_per_strip: int
    strip_byte_counts: tuple[int, ...]
    samples_per_pixel: int
    sample_format: int
    geo: GeoTags

    def payload_bytes(self) -> int:
        return self.width * self.length * self.samples_per_pixel * self.bits_per_sample // 8


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _decode_numbers(field_type: int, count: int, raw: bytes, endian: str) -> tuple[int, ...]:
    code = _TYPE_CODE.get(field_type)
    if code is None:
        raise UnsupportedTiffError(f"cannot decode field type {field_type} as numbers")
    return struct.unpack(f"{endian}{count}{code}", raw)


def _canonical_le(field_type: int, count: int, raw: bytes, endian: str) -> bytes:
    """Re-encode a tag value as little-endian bytes for opaque passthrough."""
    if endian == "<" or field_type not in (3, 4, 5, 8, 9, 10, 11, 12):
        return raw
    if field_type in (5, 10):  # rationals: pairs of (S)LONG
        code = "I" if field_type == 5 else "i"
        vals = struct.unpack(f">{count * 2}{code}", raw)
        return struct.pack(f"<{count * 2}{code}", *vals)
    code = _TYPE_CODE[field_type]
    vals = struct.unpack(f">{count}{code}", raw)
    return struct.pack(f"<{count}{code}", *vals)


def _parse_ifd(blob: bytes, path) -> tuple[dict[int, tuple[int, int, bytes]], str]:
    if len(blob) < 8:
        raise MalformedTiffError(f"{path}: file too short for a TIFF header")
    order = blob[:2]
    if order == b"II":
        endian = "<"
    elif order == b"MM":
        endian = ">"
    else:
        raise MalformedTiffError(f"{path}: unknown byte-order mark {order!r}")
    (magic,) = struct.unpack_from(f"{endian}H", blob, 2)
    if magic == 43:
        raise UnsupportedTiffError(f"{path}: BigTIFF (magic 43) is not supported")
    if magic != 42:
        raise MalformedTiffError(f"{path}: bad magic number {magic}")
    (ifd_off,) = struct.unpack_from(f"{endian}I", blob, 4)
    if ifd_off + 2 > len(blob):
        raise MalformedTiffError(f"{path}: IFD offset {ifd_off} past end of file")
    (n_entries,) = struct.unpack_from(f"{endian}H", blob, ifd_off)
    entries: dict[int, tuple[int, int, bytes]] = {}
    for i in range(n_entries):
        base = ifd_off + 2 + 12 * i
        if base + 12 > len(blob):
            raise MalformedTiffError(f"{path}: IFD entry {i} truncated")
        tag, field_type, count = struct.unpack_from(f"{endian}HHI", blob, base)
        size = _TYPE_SIZE.get(field_type, 0) * count
        if size == 0:
            continue  # unknown field type: skip, per TIFF reader guidance
        if size <= 4:
            raw = blob[base + 8 : base + 8 + size]
        else:
            (off,) = struct.unpack_from(f"{endian}I", blob, base + 8)
            if off + size > len(blob):
                raise MalformedTiffError(f"{path}: value of tag {tag} extends past end of file")
            raw = blob[off : off + size]
        entries[tag] = (field_type, count, raw)
    return entries, endian


def _scalar(entries, tag: int, endian: str, default: int | None = None) -> int | None:
    if tag not in entries:
        return default
    field_type, count, raw = entries[tag]
    return int(_decode_numbers(field_type, count, raw, endian)[0])


def _vector(entries, tag: int, endian: str) -> tuple[int, ...]:
    field_type, count, raw = entries[tag]
    return _decode_numbers(field_type, count, raw, endian)


def read_tag_set(path: str | Path) -> TiffTagSet:
    """Parse and validate the layout tags of a supported TIFF file."""
    return _load(path)[2]


def _load(path: str | Path) -> tuple[bytes, str, TiffTagSet]:
    blob = Path(path).read_bytes()
    entries, endian = _parse_ifd(blob, path)

    if _TAG_TILE_WIDTH in entries or _TAG_TILE_LENGTH in entries:
        raise UnsupportedTiffError(f"{path}: tiled layout (tag 322/323) is not supported")
    compression = _scalar(entries, _TAG_COMPRESSION, endian, default=1)
    if compression != 1:
        raise UnsupportedTiffError(
            f"{path}: compression {compression} (tag 259) is not supported; only 1 (none)"
        )
    for tag, name in ((_TAG_WIDTH, "ImageWidth"), (_TAG_LENGTH, "ImageLength"),
                      (_TAG_STRIP_OFFSETS, "StripOffsets"), (_TAG_STRIP_COUNTS, "StripByteCounts")):
        if tag not in entries:
            raise MalformedTiffError(f"{path}: required tag {tag} ({name}) missing")

    width = _scalar(entries, _TAG_WIDTH, endian)
    length = _scalar(entries, _TAG_LENGTH, endian)
    samples = _scalar(entries, _TAG_SAMPLES, endian, default=1)
    planar = _scalar(entries, _TAG_PLANAR, endian, default=1)
    if samples > 1 and planar != 1:
        raise UnsupportedTiffError(f"{path}: planar configuration {planar} (tag 284) unsupported")

    if _TAG_BITS in entries:
        bits_all = _vector(entries, _TAG_BITS, endian)
    else:
        bits_all = (1,)
    if len(set(bits_all)) != 1:
        raise UnsupportedTiffError(f"{path}: mixed bits per sample {bits_all} unsupported")
    bits = int(bits_all[0])
    sample_format = _scalar(entries, _TAG_SAMPLE_FORMAT, endian, default=1)
    if not ((bits == 8 and sample_format == 1) or (bits == 32 and sample_format == 3)):
        raise UnsupportedTiffError(
            f"{path}: {bits}-bit sample format {sample_format} (tags 258/339) unsupported; "
            "expected uint8 or float32"
        )

    offsets = _vector(entries, _TAG_STRIP_OFFSETS, endian)
    counts = _vector(entries, _TAG_STRIP_COUNTS, endian)
    if len(offsets) != len(counts):
        raise MalformedTiffError(f"{path}: {len(offsets)} strip offsets vs {len(counts)} counts")
    rows_per_strip = _scalar(entries, _TAG_ROWS_PER_STRIP, endian, default=length)
    rows_per_strip = min(int(rows_per_strip), length)
    expected_strips = -(-length // rows_per_strip) if rows_per_strip else 0
    if expected_strips != len(offsets):
        raise MalformedTiffError(
            f"{path}: rows_per_strip {rows_per_strip} implies {expected_strips} strips, "
            f"found {len(offsets)}"
        )

    tag_set = TiffTagSet(
        width=width,
        length=length,
        bits_per_sample=bits,
        compression=compression,
        photometric=_scalar(entries, _TAG_PHOTOMETRIC, endian, default=1),
        strip_offsets=tuple(offsets),
        rows_per_strip=rows_per_strip,
        strip_byte_counts=tuple(counts),
        samples_per_pixel=samples,
        sample_format=sample_format,
        geo=tuple(
            GeoTag(tag, entries[tag][0], entries[tag][1],
                   _canonical_le(entries[tag][0], entries[tag][1], entries[tag][2], endian))
            for tag in GEO_TAGS
            if tag in entries
        ),
    )
    if sum(tag_set.strip_byte_counts) != tag_set.payload_bytes():
        raise MalformedTiffError(
            f"{path}: strip byte counts sum to {sum(tag_set.strip_byte_counts)}, "
            f"geometry requires {tag_set.payload_bytes()}"
        )
    return blob, endian, tag_set


def _decode_pixels(path: str | Path, blob: bytes, tags: TiffTagSet, endian: str) -> np.ndarray:
    payload = bytearray()
    for off, cnt in zip(tags.strip_offsets, tags.strip_byte_counts):
        if off + cnt > len(blob):
            raise MalformedTiffError(f"{path}: strip at {off} (+{cnt}) extends past end of file")
        payload += blob[off : off + cnt]
    if tags.bits_per_sample == 8:
        arr = np.frombuffer(bytes(payload), dtype=np.uint8)
    else:
        arr = np.frombuffer(bytes(payload), dtype=f"{endian}f4").astype(np.float32)
    return arr.reshape(tags.length, tags.width, tags.samples_per_pixel)


def read_tiff(path: str | Path) -> LabelMap | MultiBandRaster:
    """Decode a supported TIFF: u8 single-sample -> LabelMap, otherwise raster."""
    blob, endian, tags = _load(path)
    pixels = _decode_pixels(path, blob, tags, endian)
    if tags.bits_per_sample == 8 and tags.samples_per_pixel == 1:
        data = pixels[:, :, 0]
        return LabelMap(data, default_legend(int(data.max()) + 1))
    return MultiBandRaster(pixels.astype(np.float32))


def read_label_tiff(path: str | Path) -> LabelMap:
    """Decode a uint8 single-band TIFF as a label map."""
    decoded = read_tiff(path)
    if not isinstance(decoded, LabelMap):
        raise UnsupportedTiffError(f"{path}: not a single-band uint8 label raster")
    return decoded


def read_geo_tags(path: str | Path) -> GeoTags:
    """Extract geo-referencing tags as opaque little-endian byte values."""
    return read_tag_set(path).geo


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _pack_entry(tag: int, field_type: int, count: int, inline: bytes) -> bytes:
    return struct.pack("<HHI", tag, field_type, count) + inline.ljust(4, b"\x00")


def write_label_tiff(
    m: LabelMap,
    path: str | Path,
    geo: GeoTags | None = None,
    validate: bool = True,
) -> None:
    """Write a label map as an uncompressed little-endian classic TIFF.

    Layout is fixed: pixel strips directly after the 8-byte header, then the
    IFD, then out-of-line values, everything word-aligned. Identical inputs
    produce identical bytes.
    """
    if len(m.legend) > 256:
        raise TiffCapacityError(f"{len(m.legend)} classes cannot be stored as uint8")
    height, width = m.height, m.width
    n_strips = -(-height // ROWS_PER_STRIP)
    counts = [
        (min((i + 1) * ROWS_PER_STRIP, height) - i * ROWS_PER_STRIP) * width
        for i in range(n_strips)
    ]
    payload = m.data.tobytes()
    strip_offsets = []
    pos = 8
    for c in counts:
        strip_offsets.append(pos)
        pos += c
    pad_payload = b"\x00" * (pos % 2)
    ifd_offset = pos + len(pad_payload)

    geo = geo or ()
    fields: list[tuple[int, int, int, bytes]] = [
        (_TAG_WIDTH, 4, 1, struct.pack("<I", width)),
        (_TAG_LENGTH, 4, 1, struct.pack("<I", height)),
        (_TAG_BITS, 3, 1, struct.pack("<H", 8)),
        (_TAG_COMPRESSION, 3, 1, struct.pack("<H", 1)),
        (_TAG_PHOTOMETRIC, 3, 1, struct.pack("<H", 1)),
        (_TAG_STRIP_OFFSETS, 4, n_strips, struct.pack(f"<{n_strips}I", *strip_offsets)),
        (_TAG_SAMPLES, 3, 1, struct.pack("<H", 1)),
        (_TAG_ROWS_PER_STRIP, 4, 1, struct.pack("<I", ROWS_PER_STRIP)),
        (_TAG_STRIP_COUNTS, 4, n_strips, struct.pack(f"<{n_strips}I", *counts)),
    ]
    fields += [(g.tag, g.field_type, g.count, g.value) for g in geo]
    fields.sort(key=lambda f: f[0])

    ifd_size = 2 + 12 * len(fields) + 4
    overflow_cursor = ifd_offset + ifd_size
    entry_bytes = []
    overflow = b""
    for tag, field_type, count, value in fields:
        if len(value) <= 4:
            entry_bytes.append(_pack_entry(tag, field_type, count, value))
        else:
            if overflow_cursor % 2:
                overflow += b"\x00"
                overflow_cursor += 1
            entry_bytes.append(_pack_entry(tag, field_type, count, struct.pack("<I", overflow_cursor)))
            overflow += value
            overflow_cursor += len(value)

    with open(path, "wb") as f:
        f.write(b"II" + struct.pack("<HI", 42, ifd_offset))
        f.write(payload)
        f.write(pad_payload)
        f.write(struct.pack("<H", len(fields)))
        f.write(b"".join(entry_bytes))
        f.write(struct.pack("<I", 0))
        f.write(overflow)

    if validate:
        back = read_label_tiff(path)
        if not np.array_equal(back.data, m.data):
            raise MalformedTiffError(f"{path}: post-write validation failed, pixels differ")
