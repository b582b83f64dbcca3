"""Raw-tensor file format (.fmt) for float32 rasters and uint8 label maps.

Layout, all little-endian:

    bytes 0..7    magic "FMLCRAS1"
    bytes 8..11   uint32 header length N
    bytes 12..    UTF-8 JSON header of N bytes with required keys
                  dtype ("f32"|"u8"), shape ([H, W, C]), order ("bsq")
                  and optional keys bands, legend, nodata
    then          raw payload, band-sequential row-major (all of channel 0
                  row by row, then channel 1, ...)
    last 4 bytes  uint32 CRC32 of the payload

The float payload round-trips bit-exactly; write followed by read is the
identity on every type this module accepts.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    MalformedHeaderError,
    TensorFormatError,
    TruncatedPayloadError,
)
from .raster import (
    BinaryProbMap,
    LabelMap,
    LogitMap,
    MultiBandRaster,
    ProbabilityMap,
    default_legend,
)

MAGIC = b"FMLCRAS1"

Writable = MultiBandRaster | ProbabilityMap | LogitMap | BinaryProbMap | LabelMap


def _header_and_payload(obj: Writable) -> tuple[dict, bytes]:
    if isinstance(obj, LabelMap):
        header = {
            "dtype": "u8",
            "shape": [obj.height, obj.width, 1],
            "order": "bsq",
            "legend": {str(i): name for i, name in enumerate(obj.legend)},
        }
        return header, obj.data.tobytes()

    if isinstance(obj, MultiBandRaster):
        arr = obj.data
        header = {
            "dtype": "f32",
            "shape": [obj.height, obj.width, obj.bands],
            "order": "bsq",
            "bands": list(obj.band_names),
        }
        if obj.nodata is not None:
            header["nodata"] = obj.nodata
    elif isinstance(obj, (ProbabilityMap, LogitMap)):
        arr = obj.data
        header = {
            "dtype": "f32",
            "shape": [obj.height, obj.width, obj.classes],
            "order": "bsq",
        }
    elif isinstance(obj, BinaryProbMap):
        arr = obj.data[:, :, np.newaxis]
        header = {"dtype": "f32", "shape": [obj.height, obj.width, 1], "order": "bsq"}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} as a tensor")

    # channel-last in memory -> band-sequential on disk
    bsq = np.ascontiguousarray(arr.transpose(2, 0, 1)).astype("<f4", copy=False)
    return header, bsq.tobytes()


def write_tensor(obj: Writable, path: str | Path) -> None:
    """Serialize a grid to the .fmt raw-tensor format."""
    header, payload = _header_and_payload(obj)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(struct.pack("<I", crc))


def _parse_header(raw: bytes) -> dict:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError("header JSON must be an object")
    for key in ("dtype", "shape", "order"):
        if key not in header:
            raise MalformedHeaderError(f"header missing required key {key!r}")
    if header["dtype"] not in ("f32", "u8"):
        raise MalformedHeaderError(f"unknown dtype {header['dtype']!r}")
    if header["order"] != "bsq":
        raise MalformedHeaderError(f"unknown order {header['order']!r}; only 'bsq' is defined")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise MalformedHeaderError(f"shape must be three positive integers, got {shape!r}")
    return header


def read_tensor(path: str | Path) -> MultiBandRaster | LabelMap:
    """Parse a .fmt file; returns a raster for f32 data, a label map for u8."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4:
        raise MalformedHeaderError(f"{path}: file too short to hold a header")
    if blob[:8] != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {blob[:8]!r}")
    (header_len,) = struct.unpack_from("<I", blob, 8)
    if len(blob) < 12 + header_len:
        raise MalformedHeaderError(f"{path}: declared header length {header_len} exceeds file")
    header = _parse_header(blob[12 : 12 + header_len])

    h, w, c = header["shape"]
    itemsize = 4 if header["dtype"] == "f32" else 1
    expected = h * w * c * itemsize
    body = blob[12 + header_len :]
    if len(body) < expected + 4:
        raise TruncatedPayloadError(
            f"{path}: payload holds {max(len(body) - 4, 0)} bytes, header requires {expected}"
        )
    if len(body) > expected + 4:
        raise TensorFormatError(f"{path}: {len(body) - expected - 4} trailing bytes after checksum")
    payload, crc_bytes = body[:expected], body[expected:]
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumMismatchError(
            f"{path}: payload CRC32 {actual_crc:#010x} does not match stored {stored_crc:#010x}"
        )

    if header["dtype"] == "u8":
        if c != 1:
            raise TensorFormatError(f"{path}: u8 tensors must be single-channel, got {c}")
        data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
        legend = header.get("legend")
        names = legend if legend is not None else default_legend(int(data.max()) + 1)
        return LabelMap(data, names)

    bsq = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
    data = np.ascontiguousarray(bsq.transpose(1, 2, 0))
    bands = header.get("bands")
    if bands is not None and (not isinstance(bands, list) or len(bands) != c):
        raise MalformedHeaderError(f"{path}: bands key must list {c} names")
    return MultiBandRaster(data, band_names=bands, nodata=header.get("nodata"))
