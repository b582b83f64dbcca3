"""Seeded synthetic scenes and naive reference implementations.

Scenes are piecewise-constant label fields (nearest-center regions from
seeded random blob centers) with a controllable amount of confusion between
one class pair, a near-perfect binary expert for that pair, and optional
impulse noise that flips per-pixel scores. Construction uses guaranteed
score margins, so the intended behavior (which pixels the coarse argmax
gets wrong, which the expert can fix) holds by design, not just with high
probability.

Randomness comes from numpy's default_rng (PCG64) seeded with the scene
seed; the draw order is fixed: blob centers, blob classes, base scores,
confusion mask, noise mask, noise targets, expert jitter. Identical seeds
therefore reproduce identical scenes on any platform.

The naive smoothing references here transcribe the per-pixel definition
directly (clamp-indexed padding, full window materialization, sort, top-k)
and exist as the independent oracle for the optimized implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import BinaryProbMap, LabelMap, LogitMap, ProbabilityMap
from .smoothing import SmoothingParams, VARIANT_STANDARD

FOUR_CLASS_LEGEND = ("water", "vegetation", "built_area", "bare_ground")

_BASE_BOOST = 2.0
_FLIP_BOOST = 4.0
_SCORE_NOISE_CLIP = 0.9


def scene_legend(classes: int) -> tuple[str, ...]:
    if classes == 4:
        return FOUR_CLASS_LEGEND
    return tuple(f"class_{i}" for i in range(classes))


@dataclass(frozen=True)
class SceneSpec:
    """Geometry, confusion pair, and noise rates of a synthetic scene."""

    height: int = 96
    width: int = 96
    classes: int = 4
    blobs: int = 12
    confusion_pair: tuple[int, int] = (1, 0)
    confusion_strength: float = 0.0
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError(f"degenerate extent {self.height}x{self.width}")
        if not (2 <= self.classes <= 256):
            raise ValidationError(f"classes must lie in [2, 256], got {self.classes}")
        if self.blobs < 1:
            raise ValidationError(f"blobs must be >= 1, got {self.blobs}")
        k, kp = self.confusion_pair
        if k == kp or not (0 <= k < self.classes) or not (0 <= kp < self.classes):
            raise ValidationError(f"confusion pair {self.confusion_pair} invalid for "
                                  f"{self.classes} classes")
        object.__setattr__(self, "confusion_pair", (int(k), int(kp)))
        for name, rate in (("confusion_strength", self.confusion_strength),
                           ("noise_rate", self.noise_rate)):
            if not (0.0 <= rate <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {rate}")


def generate_scene(spec: SceneSpec) -> tuple[LabelMap, ProbabilityMap, BinaryProbMap]:
    """Deterministic (truth, coarse probabilities, expert probabilities) triple.

    Coarse probabilities put their argmax on the true class everywhere
    except: confusion-pair pixels flip to the partner class at the
    confusion rate, and noise pixels promote a random class. The expert map
    separates the flagged class from everything else with a wide margin.
    """
    rng = np.random.default_rng(spec.seed)
    h, w, c = spec.height, spec.width, spec.classes
    flagged, partner = spec.confusion_pair

    centers = rng.random((spec.blobs, 2)) * np.array([h, w])
    blob_classes = rng.integers(0, c, size=spec.blobs)
    # guarantee every class owns at least one blob when there is room
    head = min(spec.blobs, c)
    blob_classes[:head] = np.arange(head)

    rows = np.arange(h)[:, np.newaxis]
    cols = np.arange(w)[np.newaxis, :]
    dist = (
        (rows[:, :, np.newaxis] - centers[:, 0]) ** 2
        + (cols[:, :, np.newaxis] - centers[:, 1]) ** 2
    )
    truth_ids = blob_classes[np.argmin(dist, axis=2)].astype(np.uint8)

    jitter = np.clip(rng.normal(0.0, 0.3, size=(h, w, c)), -_SCORE_NOISE_CLIP, _SCORE_NOISE_CLIP)
    one_hot = np.arange(c) == truth_ids[:, :, np.newaxis]
    boost = np.where(one_hot, _BASE_BOOST, 0.0)

    # confusion: on pair pixels, promote the partner of the true class;
    # the partner class flips at half the rate so the flagged class ends
    # up with the clearly worse F1
    flip_draw = rng.random((h, w))
    flip_rate = np.where(
        truth_ids == flagged,
        spec.confusion_strength,
        np.where(truth_ids == partner, 0.5 * spec.confusion_strength, 0.0),
    )
    flip = flip_draw < flip_rate
    other = np.where(truth_ids == flagged, partner, flagged)
    flip_channel = np.arange(c) == other[:, :, np.newaxis]
    boost += np.where(flip_channel & flip[:, :, np.newaxis], _FLIP_BOOST, 0.0)

    # impulse noise: replace the pixel's vote with a moderately confident
    # vote for a random class (salt-and-pepper a smoother can remove, not
    # an outlier so extreme that neighborhood evidence cannot outweigh it)
    noise_draw = rng.random((h, w))
    noise_target = rng.integers(0, c, size=(h, w))
    noisy = noise_draw < spec.noise_rate
    target_channel = np.arange(c) == noise_target[:, :, np.newaxis]
    boost = np.where(
        noisy[:, :, np.newaxis], np.where(target_channel, _BASE_BOOST, 0.0), boost
    )

    scores = jitter + boost
    shifted = scores - scores.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    probs = (e / e.sum(axis=2, keepdims=True)).astype(np.float32)

    expert_jitter = rng.random((h, w))
    expert = np.where(truth_ids == flagged, 0.9 + 0.08 * expert_jitter, 0.02 + 0.08 * expert_jitter)

    legend = scene_legend(c)
    return (
        LabelMap(truth_ids, legend),
        ProbabilityMap(probs),
        BinaryProbMap(expert.astype(np.float32)),
    )


def count_single_pixel_islands(labels: LabelMap) -> int:
    """Pixels whose every existing 4-neighbor carries a different label."""
    a = labels.data.astype(np.int16)
    p = np.pad(a, 1, constant_values=-1)
    up, down = p[:-2, 1:-1], p[2:, 1:-1]
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    island = (up != a) & (down != a) & (left != a) & (right != a)
    return int(island.sum())


# ---------------------------------------------------------------------------
# Naive smoothing references (the oracle side of the dual-route check)
# ---------------------------------------------------------------------------


def naive_window_stats(l: LogitMap, params: SmoothingParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel transcription of the top-k window statistics definition.

    Replicate padding is realized by clamping indices; every window is
    materialized and sorted in full. Bit-identical to the optimized
    smoothing.window_stats on all inputs.
    """
    arr = l.data.astype(np.float64)
    height, width, channels = arr.shape
    w = params.window
    r = w // 2
    k = params.top_k
    mean = np.empty((height, width, channels))
    var = np.empty((height, width, channels))
    for i in range(height):
        for j in range(width):
            for ch in range(channels):
                vals = [
                    float(arr[min(max(i + di, 0), height - 1),
                              min(max(j + dj, 0), width - 1), ch])
                    for di in range(-r, r + 1)
                    for dj in range(-r, r + 1)
                ]
                vals.sort()
                sel = np.array(vals[len(vals) - k :], dtype=np.float64)
                m = np.sum(sel) / k
                d = sel - m
                v = np.sum(d * d) / k
                mean[i, j, ch] = m
                var[i, j, ch] = v
    return mean, var


def naive_smooth_reference(l: LogitMap, params: SmoothingParams) -> LogitMap:
    """Naive stats followed by the scalar blend formula, pixel by pixel."""
    mean, var = naive_window_stats(l, params)
    arr = l.data.astype(np.float64)
    sigma2 = params.obs_variance
    out = np.empty_like(arr)
    height, width, channels = arr.shape
    for i in range(height):
        for j in range(width):
            for ch in range(channels):
                m = mean[i, j, ch]
                v = var[i, j, ch]
                x = arr[i, j, ch]
                denom = sigma2 + v
                if params.variant == VARIANT_STANDARD:
                    out[i, j, ch] = (sigma2 / denom) * m + (v / denom) * x
                else:
                    out[i, j, ch] = (v / denom) * m + (sigma2 / denom) * x
    return LogitMap(out.astype(np.float32))
