"""Patch extraction, stitching, and per-band standardization.

Tiling walks a stride grid over the raster; under the default pad-replicate
edge policy the raster is padded by edge replication so every tile is full
size, under clip-partial edge tiles are cropped to the raster extent.
Stitching averages overlapping contributions channel-wise and is the exact
inverse of tiling for float maps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CoverageError, ShapeMismatchError, ValidationError
from .raster import BinaryProbMap, LogitMap, MultiBandRaster, ProbabilityMap

PAD_REPLICATE = "pad-replicate"
CLIP_PARTIAL = "clip-partial"

FloatGrid = MultiBandRaster | ProbabilityMap | LogitMap | BinaryProbMap


@dataclass(frozen=True)
class TileSpec:
    """Tile geometry: square tile edge, stride, and edge policy."""

    tile_size: int
    stride: int
    edge_policy: str = PAD_REPLICATE

    def __post_init__(self):
        if self.tile_size < 1:
            raise ValidationError(f"tile_size must be >= 1, got {self.tile_size}")
        if not (0 < self.stride <= self.tile_size):
            raise ValidationError(
                f"stride must satisfy 0 < stride <= tile_size, got {self.stride}/{self.tile_size}"
            )
        if self.edge_policy not in (PAD_REPLICATE, CLIP_PARTIAL):
            raise ValidationError(f"unknown edge policy {self.edge_policy!r}")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-band mean and population standard deviation."""

    mean: tuple[float, ...]
    stddev: tuple[float, ...]

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        stddev = tuple(float(v) for v in self.stddev)
        if len(mean) != len(stddev):
            raise ValidationError(f"{len(mean)} means vs {len(stddev)} stddevs")
        if not all(math.isfinite(v) for v in mean + stddev):
            raise ValidationError("stats must be finite")
        if any(v < 0 for v in stddev):
            raise ValidationError("stddev must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", stddev)

    @property
    def bands(self) -> int:
        return len(self.mean)


def save_stats(stats: NormalizationStats, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({"mean": list(stats.mean), "stddev": list(stats.stddev)}, indent=2) + "\n"
    )


def load_stats(path: str | Path) -> NormalizationStats:
    doc = json.loads(Path(path).read_text())
    return NormalizationStats(tuple(doc["mean"]), tuple(doc["stddev"]))


def _valid_mask(band: np.ndarray, nodata: float | None) -> np.ndarray:
    if nodata is None:
        return np.ones(band.shape, dtype=bool)
    if math.isnan(nodata):
        return ~np.isnan(band)
    return band != nodata


def compute_stats(x: MultiBandRaster) -> NormalizationStats:
    """Per-band population mean/stddev, excluding nodata pixels."""
    means, stds = [], []
    for b in range(x.bands):
        band = x.data[:, :, b].astype(np.float64)
        valid = band[_valid_mask(band, x.nodata)]
        if valid.size < 2:
            raise ValidationError(
                f"band {b} ({x.band_names[b]}): needs >= 2 valid pixels, found {valid.size}"
            )
        mu = float(valid.mean())
        means.append(mu)
        stds.append(float(np.sqrt(np.mean((valid - mu) ** 2))))
    return NormalizationStats(tuple(means), tuple(stds))


def _check_stats(x: MultiBandRaster, s: NormalizationStats) -> None:
    if s.bands != x.bands:
        raise ShapeMismatchError(f"stats cover {s.bands} bands, raster has {x.bands}")
    if any(v == 0 for v in s.stddev):
        zero = [i for i, v in enumerate(s.stddev) if v == 0]
        raise ValidationError(f"stddev is zero for bands {zero}; cannot standardize")


def standardize(x: MultiBandRaster, s: NormalizationStats) -> MultiBandRaster:
    """(value - mean) / stddev per band; nodata pixels pass through unchanged."""
    _check_stats(x, s)
    mean = np.asarray(s.mean, dtype=np.float64)
    std = np.asarray(s.stddev, dtype=np.float64)
    out = (x.data.astype(np.float64) - mean) / std
    if x.nodata is not None:
        for b in range(x.bands):
            invalid = ~_valid_mask(x.data[:, :, b], x.nodata)
            out[:, :, b][invalid] = x.nodata
    return MultiBandRaster(out.astype(np.float32), band_names=x.band_names, nodata=x.nodata)


def destandardize(x: MultiBandRaster, s: NormalizationStats) -> MultiBandRaster:
    """Inverse of standardize: value * stddev + mean per band."""
    _check_stats(x, s)
    mean = np.asarray(s.mean, dtype=np.float64)
    std = np.asarray(s.stddev, dtype=np.float64)
    out = x.data.astype(np.float64) * std + mean
    if x.nodata is not None:
        for b in range(x.bands):
            invalid = ~_valid_mask(x.data[:, :, b], x.nodata)
            out[:, :, b][invalid] = x.nodata
    return MultiBandRaster(out.astype(np.float32), band_names=x.band_names, nodata=x.nodata)


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------


def _array3(m: FloatGrid) -> np.ndarray:
    return m.data if m.data.ndim == 3 else m.data[:, :, np.newaxis]


def _rebuild(template: FloatGrid, arr: np.ndarray) -> FloatGrid:
    if isinstance(template, MultiBandRaster):
        return MultiBandRaster(arr, band_names=template.band_names, nodata=template.nodata)
    if isinstance(template, ProbabilityMap):
        return ProbabilityMap(arr)
    if isinstance(template, LogitMap):
        return LogitMap(arr)
    if isinstance(template, BinaryProbMap):
        return BinaryProbMap(arr[:, :, 0])
    raise TypeError(f"cannot tile/stitch {type(template).__name__}")


def axis_tile_count(extent: int, tile_size: int, stride: int) -> int:
    """Number of stride steps needed to cover one axis (after padding)."""
    extent = max(extent, tile_size)
    return -(-(extent - tile_size) // stride) + 1


def tile_origins(height: int, width: int, spec: TileSpec) -> list[tuple[int, int]]:
    """Row-major list of tile origins for the given extent."""
    if spec.edge_policy == CLIP_PARTIAL and (spec.tile_size > height or spec.tile_size > width):
        raise ValidationError(
            f"tile {spec.tile_size} exceeds extent {height}x{width} under {CLIP_PARTIAL}"
        )
    n_rows = axis_tile_count(height, spec.tile_size, spec.stride)
    n_cols = axis_tile_count(width, spec.tile_size, spec.stride)
    return [(r * spec.stride, c * spec.stride) for r in range(n_rows) for c in range(n_cols)]


def tile(x: FloatGrid, spec: TileSpec) -> list[tuple[FloatGrid, tuple[int, int]]]:
    """Cut a grid into (tile, origin) pairs walking the stride lattice."""
    arr = _array3(x)
    height, width = arr.shape[:2]
    origins = tile_origins(height, width, spec)
    t = spec.tile_size
    if spec.edge_policy == PAD_REPLICATE:
        last_r, last_c = origins[-1]
        pad_b = max(0, last_r + t - height)
        pad_r = max(0, last_c + t - width)
        if pad_b or pad_r:
            arr = np.pad(arr, ((0, pad_b), (0, pad_r), (0, 0)), mode="edge")
        return [(_rebuild(x, arr[r : r + t, c : c + t]), (r, c)) for r, c in origins]
    return [
        (_rebuild(x, arr[r : min(r + t, height), c : min(c + t, width)]), (r, c))
        for r, c in origins
    ]


def stitch(
    tiles: Sequence[tuple[FloatGrid, tuple[int, int]]],
    out_shape: tuple[int, int],
) -> FloatGrid:
    """Reassemble tiles onto an output extent, averaging where tiles overlap.

    Tile regions beyond the extent (replicate padding) are cropped. Raises
    CoverageError if any output pixel is covered by no tile.
    """
    if not tiles:
        raise ValidationError("no tiles to stitch")
    height, width = out_shape
    template = tiles[0][0]
    channels = _array3(template).shape[2]
    acc = np.zeros((height, width, channels), dtype=np.float64)
    cover = np.zeros((height, width), dtype=np.uint32)
    for grid, (r, c) in tiles:
        arr = _array3(grid)
        if arr.shape[2] != channels:
            raise ShapeMismatchError(
                f"tile at {(r, c)} has {arr.shape[2]} channels, expected {channels}"
            )
        if r < 0 or c < 0:
            raise ValidationError(f"negative tile origin {(r, c)}")
        rows = min(arr.shape[0], height - r)
        cols = min(arr.shape[1], width - c)
        if rows <= 0 or cols <= 0:
            continue
        acc[r : r + rows, c : c + cols] += arr[:rows, :cols]
        cover[r : r + rows, c : c + cols] += 1
    if (cover == 0).any():
        missing = int((cover == 0).sum())
        raise CoverageError(f"{missing} output pixels not covered by any tile")
    out = acc / cover[:, :, np.newaxis]
    return _rebuild(template, out.astype(np.float32))
