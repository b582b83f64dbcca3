"""Core grid types and score-space conversions.

All types are frozen after construction: the wrapped numpy array is copied
and marked read-only, so instances can be shared freely across threads.
Channel-last memory layout (height, width, channels) is used throughout;
the band-sequential layout required by the on-disk tensor format is produced
at the I/O boundary (see tensor_io).
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, ValidationError

PROB_SUM_TOL = 1e-5
DEFAULT_LOGIT_EPS = 1e-6
MAX_CLASSES = 256


def _own(data, dtype: type, ndim: int, what: str) -> np.ndarray:
    """Copy input into a C-ordered read-only array of the requested rank."""
    arr = np.array(data, dtype=dtype, order="C", copy=True)
    if arr.ndim != ndim:
        raise ValidationError(f"{what}: expected a {ndim}-d grid, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{what}: grid has zero pixels (shape {arr.shape})")
    arr.setflags(write=False)
    return arr


def normalize_legend(legend: Mapping[int, str] | Sequence[str], what: str = "legend") -> tuple[str, ...]:
    """Coerce a legend to a tuple of names indexed by class id.

    Accepts either a sequence of names (ids implied 0..K-1) or a mapping
    id -> name whose keys must be contiguous from 0.
    """
    if isinstance(legend, Mapping):
        keys = sorted(int(k) for k in legend.keys())
        if keys != list(range(len(keys))):
            raise ValidationError(f"{what}: class ids must be contiguous from 0, got {keys}")
        names = tuple(str(legend[k] if k in legend else legend[str(k)]) for k in keys)
    else:
        names = tuple(str(n) for n in legend)
    if not names:
        raise ValidationError(f"{what}: legend is empty")
    if len(names) > MAX_CLASSES:
        raise ValidationError(f"{what}: {len(names)} classes exceed the uint8 limit of {MAX_CLASSES}")
    return names


def default_legend(classes: int) -> tuple[str, ...]:
    return tuple(f"class_{i}" for i in range(classes))


@dataclass(frozen=True, eq=False)
class MultiBandRaster:
    """Float32 grid of shape (height, width, bands) with band metadata."""

    data: np.ndarray
    band_names: tuple[str, ...] | None = None
    nodata: float | None = None

    def __post_init__(self):
        arr = _own(self.data, np.float32, 3, "MultiBandRaster")
        object.__setattr__(self, "data", arr)
        if self.band_names is None:
            names = tuple(f"band_{i}" for i in range(arr.shape[2]))
        else:
            names = tuple(str(n) for n in self.band_names)
            if len(names) != arr.shape[2]:
                raise ValidationError(
                    f"MultiBandRaster: {len(names)} band names for {arr.shape[2]} bands"
                )
        object.__setattr__(self, "band_names", names)
        if self.nodata is not None:
            object.__setattr__(self, "nodata", float(self.nodata))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    def __repr__(self):
        return f"MultiBandRaster(height={self.height}, width={self.width}, bands={self.bands})"


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-pixel class probabilities of shape (height, width, classes).

    Every value lies in [0, 1] and each pixel's channel vector sums to 1
    within PROB_SUM_TOL.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _own(self.data, np.float32, 3, "ProbabilityMap")
        if arr.shape[2] < 2:
            raise ValidationError(f"ProbabilityMap: needs >= 2 classes, got {arr.shape[2]}")
        if not np.isfinite(arr).all():
            raise ValidationError("ProbabilityMap: contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("ProbabilityMap: values outside [0, 1]")
        sums = arr.sum(axis=2, dtype=np.float64)
        worst = float(np.abs(sums - 1.0).max())
        if worst > PROB_SUM_TOL:
            raise ValidationError(
                f"ProbabilityMap: per-pixel sums deviate from 1 by up to {worst:g}"
            )
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return self.data.shape[2]

    def __repr__(self):
        return f"ProbabilityMap(height={self.height}, width={self.width}, classes={self.classes})"


@dataclass(frozen=True, eq=False)
class LogitMap:
    """Unconstrained per-pixel class scores of shape (height, width, classes)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _own(self.data, np.float32, 3, "LogitMap")
        if not np.isfinite(arr).all():
            raise ValidationError("LogitMap: contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return self.data.shape[2]

    def __repr__(self):
        return f"LogitMap(height={self.height}, width={self.width}, classes={self.classes})"


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Hard class assignments of shape (height, width) plus a class legend.

    The legend is stored as a tuple of names indexed by class id; ids are
    contiguous from 0 and every id present in the data must be in range.
    """

    data: np.ndarray
    legend: tuple[str, ...]

    def __post_init__(self):
        arr = _own(self.data, np.uint8, 2, "LabelMap")
        names = normalize_legend(self.legend, "LabelMap.legend")
        if int(arr.max()) >= len(names):
            raise ValidationError(
                f"LabelMap: label id {int(arr.max())} not covered by a {len(names)}-entry legend"
            )
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "legend", names)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return len(self.legend)

    def legend_mapping(self) -> dict[int, str]:
        return {i: n for i, n in enumerate(self.legend)}

    def __repr__(self):
        return f"LabelMap(height={self.height}, width={self.width}, classes={self.classes})"


@dataclass(frozen=True, eq=False)
class BinaryProbMap:
    """Single-channel probabilities of shape (height, width), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _own(self.data, np.float32, 2, "BinaryProbMap")
        if not np.isfinite(arr).all():
            raise ValidationError("BinaryProbMap: contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("BinaryProbMap: values outside [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __repr__(self):
        return f"BinaryProbMap(height={self.height}, width={self.width})"


# ---------------------------------------------------------------------------
# Conversions between raster containers and typed score maps
# ---------------------------------------------------------------------------


def as_probability_map(raster: MultiBandRaster) -> ProbabilityMap:
    """Reinterpret raster bands as class probabilities (validates the simplex)."""
    return ProbabilityMap(raster.data)


def as_logit_map(raster: MultiBandRaster) -> LogitMap:
    return LogitMap(raster.data)


def as_binary_prob_map(raster: MultiBandRaster) -> BinaryProbMap:
    if raster.bands != 1:
        raise ValidationError(f"expected a single-band raster, got {raster.bands} bands")
    return BinaryProbMap(raster.data[:, :, 0])


def as_raster(
    m: ProbabilityMap | LogitMap | BinaryProbMap,
    band_names: Sequence[str] | None = None,
) -> MultiBandRaster:
    arr = m.data if m.data.ndim == 3 else m.data[:, :, np.newaxis]
    return MultiBandRaster(arr, band_names=tuple(band_names) if band_names else None)


# ---------------------------------------------------------------------------
# Score-space operations
# ---------------------------------------------------------------------------


def probs_to_logits(p: ProbabilityMap, eps: float = DEFAULT_LOGIT_EPS) -> LogitMap:
    """Per-channel log-odds transform log(p / (1 - p)).

    Probabilities are clamped to [eps, 1 - eps] first so that hard 0/1
    values map to finite logits. The clamp never changes which channel is
    maximal for a valid probability map.
    """
    if not (0.0 < eps < 0.5):
        raise ValidationError(f"eps must lie in (0, 0.5), got {eps}")
    q = np.clip(p.data.astype(np.float64), eps, 1.0 - eps)
    logits = np.log(q / (1.0 - q))
    return LogitMap(logits.astype(np.float32))


def sigmoid(l: LogitMap) -> np.ndarray:
    """Inverse of probs_to_logits per channel; returns a float64 array."""
    return 1.0 / (1.0 + np.exp(-l.data.astype(np.float64)))


def softmax(l: LogitMap) -> ProbabilityMap:
    """Per-pixel softmax over channels, stabilized by the per-pixel max."""
    x = l.data.astype(np.float64)
    x = x - x.max(axis=2, keepdims=True)
    e = np.exp(x)
    p = e / e.sum(axis=2, keepdims=True)
    return ProbabilityMap(p.astype(np.float32))


def argmax_labels(
    scores: ProbabilityMap | LogitMap,
    legend: Mapping[int, str] | Sequence[str] | None = None,
) -> LabelMap:
    """Per-pixel id of the maximal channel; ties go to the lowest class id."""
    classes = scores.classes
    if classes > MAX_CLASSES:
        raise ValidationError(f"{classes} classes exceed the uint8 limit of {MAX_CLASSES}")
    names = normalize_legend(legend, "legend") if legend is not None else default_legend(classes)
    if len(names) != classes:
        raise ValidationError(f"legend has {len(names)} entries for {classes} channels")
    ids = np.argmax(scores.data, axis=2).astype(np.uint8)
    return LabelMap(ids, names)


def require_same_extent(a, b, what: str = "grids") -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(
            f"{what}: extents differ, {(a.height, a.width)} vs {(b.height, b.width)}"
        )
