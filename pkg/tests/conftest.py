"""Shared fixtures: the published four-class confusion counts used by the
metric reproduction tests, and helpers to realize them as label rasters."""

import numpy as np
import pytest

from fmlc import ConfusionMatrix, LabelMap

CLASS_NAMES = ("water", "vegetation", "built_area", "bare_ground")

# rows = classified, columns = reference
TABLE_COUNTS = (
    (2_532_004, 2_158, 28_044, 20_066),
    (121, 691_170, 11_840, 4_077),
    (33_406, 34_986, 7_705_119, 262_471),
    (7_840, 16_966, 187_956, 4_059_344),
)


@pytest.fixture(scope="session")
def table_confusion() -> ConfusionMatrix:
    return ConfusionMatrix(np.array(TABLE_COUNTS, dtype=np.uint64), CLASS_NAMES)


def label_maps_from_counts(counts) -> tuple[LabelMap, LabelMap]:
    """Build (pred, truth) label maps whose confusion tally equals counts."""
    counts = np.asarray(counts, dtype=np.int64)
    classes = counts.shape[0]
    pairs = [(r, c) for r in range(classes) for c in range(classes)]
    pred = np.repeat([r for r, _ in pairs], counts.ravel()).astype(np.uint8)
    truth = np.repeat([c for _, c in pairs], counts.ravel()).astype(np.uint8)
    total = pred.size
    width = 4096
    while total % width:
        width //= 2
    shape = (total // width, width)
    names = CLASS_NAMES[:classes] if classes <= 4 else tuple(f"c{i}" for i in range(classes))
    return (
        LabelMap(pred.reshape(shape), names),
        LabelMap(truth.reshape(shape), names),
    )


@pytest.fixture(scope="session")
def table_label_maps() -> tuple[LabelMap, LabelMap]:
    return label_maps_from_counts(TABLE_COUNTS)
