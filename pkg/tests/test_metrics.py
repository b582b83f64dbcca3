"""Losses, confusion tallying, and the metric suite."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CLASS_NAMES, TABLE_COUNTS
from fmlc import (
    BinaryProbMap,
    ConfusionMatrix,
    LabelMap,
    ProbabilityMap,
    ShapeMismatchError,
    ValidationError,
    binary_ce_loss,
    confusion,
    metrics,
    multiclass_ce_loss,
    render_confusion_table,
    render_report,
)

LN2 = 0.6931471805599453


def prob_map(per_pixel, h=1, w=1):
    arr = np.tile(np.asarray(per_pixel, dtype=np.float32), (h, w, 1))
    return ProbabilityMap(arr)


class TestMulticlassCE:
    def test_half_half_single_pixel(self):
        p = prob_map((0.5, 0.5))
        y = LabelMap(np.array([[1]], dtype=np.uint8), ("a", "b"))
        assert multiclass_ce_loss(p, y) == pytest.approx(LN2, abs=1e-6)

    def test_perfect_prediction_zero(self):
        arr = np.zeros((2, 2, 2), dtype=np.float32)
        arr[:, :, 1] = 1.0
        y = LabelMap(np.ones((2, 2), dtype=np.uint8), ("a", "b"))
        loss = multiclass_ce_loss(ProbabilityMap(arr), y)
        assert loss == pytest.approx(0.0, abs=1e-6)

    def test_penalty_term(self):
        arr = np.zeros((1, 1, 2), dtype=np.float32)
        arr[0, 0, 0] = 1.0
        y = LabelMap(np.zeros((1, 1), dtype=np.uint8), ("a", "b"))
        loss = multiclass_ce_loss(ProbabilityMap(arr), y, weight_decay=0.1, param_sq_norm=4.0)
        assert loss == pytest.approx(0.4, abs=1e-6)

    def test_label_out_of_range(self):
        p = prob_map((0.5, 0.5))
        y = LabelMap(np.array([[2]], dtype=np.uint8), ("a", "b", "c"))
        with pytest.raises(ValidationError):
            multiclass_ce_loss(p, y)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(10)
        raw = rng.random((8, 8, 3)) + 0.05
        arr = (raw / raw.sum(axis=2, keepdims=True)).astype(np.float32)
        p = ProbabilityMap(arr)
        labels = rng.integers(0, 3, size=(8, 8)).astype(np.uint8)
        y = LabelMap(labels, ("a", "b", "c"))
        expected = 0.0
        for i in range(8):
            for j in range(8):
                expected += -math.log(max(float(arr[i, j, labels[i, j]]), 1e-9))
        assert multiclass_ce_loss(p, y) == pytest.approx(expected, rel=1e-9)

    def test_non_negative(self):
        rng = np.random.default_rng(11)
        raw = rng.random((5, 5, 4)) + 0.05
        p = ProbabilityMap((raw / raw.sum(axis=2, keepdims=True)).astype(np.float32))
        y = LabelMap(rng.integers(0, 4, size=(5, 5)).astype(np.uint8), CLASS_NAMES)
        assert multiclass_ce_loss(p, y) >= 0.0


class TestBinaryCE:
    def test_perfect_prediction_near_zero(self):
        y = np.zeros((4, 4), dtype=bool)
        y[:2] = True
        g = BinaryProbMap(y.astype(np.float32))
        domain = np.ones((4, 4), dtype=bool)
        assert binary_ce_loss(g, y, domain) == pytest.approx(0.0, abs=1e-6)

    def test_half_confidence_single_pixel(self):
        g = BinaryProbMap(np.array([[0.5]], dtype=np.float32))
        loss = binary_ce_loss(g, np.array([[True]]), np.array([[True]]))
        assert loss == pytest.approx(LN2, abs=1e-6)

    def test_domain_restriction(self):
        g = BinaryProbMap(np.array([[0.5, 0.9]], dtype=np.float32))
        y = np.array([[True, True]])
        only_first = np.array([[True, False]])
        assert binary_ce_loss(g, y, only_first) == pytest.approx(LN2, abs=1e-6)

    def test_empty_domain_warns_and_returns_zero(self):
        g = BinaryProbMap(np.full((2, 2), 0.5, dtype=np.float32))
        with pytest.warns(UserWarning):
            loss = binary_ce_loss(g, np.zeros((2, 2), bool), np.zeros((2, 2), bool))
        assert loss == 0.0

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(12)
        vals = rng.uniform(0.05, 0.95, size=(8, 8)).astype(np.float32)
        g = BinaryProbMap(vals)
        y = rng.random((8, 8)) < 0.5
        domain = rng.random((8, 8)) < 0.7
        expected = 0.0
        for i in range(8):
            for j in range(8):
                if not domain[i, j]:
                    continue
                e = float(vals[i, j])
                expected += -math.log(e) if y[i, j] else -math.log(1.0 - e)
        assert binary_ce_loss(g, y, domain) == pytest.approx(expected, rel=1e-6)

    def test_shape_mismatch(self):
        g = BinaryProbMap(np.full((2, 2), 0.5, dtype=np.float32))
        with pytest.raises(ShapeMismatchError):
            binary_ce_loss(g, np.zeros((3, 3), bool), np.ones((3, 3), bool))


class TestConfusion:
    def test_all_correct(self):
        m = LabelMap(np.zeros((2, 5), dtype=np.uint8), ("a", "b"))
        cm = confusion(m, m)
        assert cm.counts[0, 0] == 10
        assert cm.counts.sum() == 10

    def test_all_wrong(self):
        pred = LabelMap(np.ones((1, 5), dtype=np.uint8), ("a", "b"))
        truth = LabelMap(np.zeros((1, 5), dtype=np.uint8), ("a", "b"))
        cm = confusion(pred, truth)
        assert cm.counts[1, 0] == 5
        assert cm.counts[0, 0] == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(13)
        a = rng.integers(0, 4, size=(32, 32)).astype(np.uint8)
        b = rng.integers(0, 4, size=(32, 32)).astype(np.uint8)
        cm = confusion(LabelMap(a, CLASS_NAMES), LabelMap(b, CLASS_NAMES))
        tally = np.zeros((4, 4), dtype=np.int64)
        for i in range(32):
            for j in range(32):
                tally[a[i, j], b[i, j]] += 1
        assert np.array_equal(cm.counts.astype(np.int64), tally)

    def test_ignore_id_excludes_reference_pixels(self):
        pred = LabelMap(np.array([[0, 1, 1]], dtype=np.uint8), ("a", "b"))
        truth = LabelMap(np.array([[0, 0, 1]], dtype=np.uint8), ("a", "b"))
        cm = confusion(pred, truth, ignore=0)
        assert cm.total == 1
        assert cm.counts[1, 1] == 1

    def test_shape_mismatch(self):
        a = LabelMap(np.zeros((2, 2), dtype=np.uint8), ("a",))
        b = LabelMap(np.zeros((3, 3), dtype=np.uint8), ("a",))
        with pytest.raises(ShapeMismatchError):
            confusion(a, b)


def spreadsheet_report(counts):
    """Independent exact-arithmetic oracle for every reported rate."""
    counts = [[int(v) for v in row] for row in counts]
    c = len(counts)
    row = [sum(counts[i]) for i in range(c)]
    col = [sum(counts[i][j] for i in range(c)) for j in range(c)]
    total = sum(row)
    diag = [counts[i][i] for i in range(c)]
    precision = [Fraction(diag[i], row[i]) if row[i] else None for i in range(c)]
    recall = [Fraction(diag[i], col[i]) if col[i] else None for i in range(c)]
    po = Fraction(sum(diag), total)
    pe = sum(Fraction(row[i] * col[i], total * total) for i in range(c))
    kappa = (po - pe) / (1 - pe)
    return precision, recall, po, pe, kappa


class TestMetrics:
    def test_published_counts_reproduce_targets(self, table_confusion):
        report = metrics(table_confusion)
        # published aggregate values
        assert report.overall_acc * 100 == pytest.approx(96.09, abs=0.01)
        assert report.kappa == pytest.approx(0.939, abs=0.002)

    def test_published_counts_match_exact_oracle(self, table_confusion):
        precision, recall, po, pe, kappa = spreadsheet_report(TABLE_COUNTS)
        report = metrics(table_confusion)
        assert report.overall_acc == pytest.approx(float(po), abs=1e-12)
        assert report.kappa == pytest.approx(float(kappa), abs=1e-12)
        for i in range(4):
            assert report.precision[i] == pytest.approx(float(precision[i]), abs=1e-12)
            assert report.recall[i] == pytest.approx(float(recall[i]), abs=1e-12)
            assert report.user_acc[i] == report.precision[i]
            assert report.producer_acc[i] == report.recall[i]

    def test_identity_matrix(self):
        cm = ConfusionMatrix(np.eye(4, dtype=np.uint64) * 7, CLASS_NAMES)
        report = metrics(cm)
        assert report.overall_acc == 1.0
        assert report.kappa == 1.0
        assert all(v == 1.0 for v in report.f1)

    def test_chance_agreement(self):
        cm = ConfusionMatrix(np.full((2, 2), 50, dtype=np.uint64), ("a", "b"))
        report = metrics(cm)
        assert report.overall_acc == 0.5
        assert report.kappa == pytest.approx(0.0, abs=1e-12)

    def test_kappa_zero_for_rank_one_counts(self):
        # rows proportional to column marginals: counts[r][c] = a_r * b_c
        a = np.array([3, 7, 2], dtype=np.uint64)
        b = np.array([5, 1, 4], dtype=np.uint64)
        cm = ConfusionMatrix(np.outer(a, b), ("x", "y", "z"))
        assert metrics(cm).kappa == pytest.approx(0.0, abs=1e-12)

    def test_kappa_one_only_when_diagonal(self):
        diag = ConfusionMatrix(np.diag([5, 9, 2]).astype(np.uint64), ("x", "y", "z"))
        assert metrics(diag).kappa == 1.0
        off = np.diag([5, 9, 2]).astype(np.uint64)
        off[0, 1] = 1
        assert metrics(ConfusionMatrix(off, ("x", "y", "z"))).kappa < 1.0

    def test_dice_equals_f1(self, table_confusion):
        report = metrics(table_confusion)
        assert report.dice == report.f1

    def test_zero_denominator_is_nan_not_zero(self):
        counts = np.array([[5, 3], [0, 0]], dtype=np.uint64)  # class 1 never predicted
        report = metrics(ConfusionMatrix(counts, ("a", "b")))
        assert math.isnan(report.precision[1])
        assert not math.isnan(report.recall[1])

    def test_weights_sum_to_one_and_decompose_overall(self, table_confusion):
        report = metrics(table_confusion)
        assert sum(report.class_weights) == pytest.approx(1.0, abs=1e-12)
        decomposed = sum(w * r for w, r in zip(report.class_weights, report.recall))
        assert decomposed == pytest.approx(report.overall_acc, abs=1e-12)

    @given(seed=st.integers(0, 2**32 - 1), scale=st.integers(2, 1000))
    @settings(max_examples=40, deadline=None)
    def test_scaling_counts_changes_nothing(self, seed, scale):
        rng = np.random.default_rng(seed)
        counts = rng.integers(1, 50, size=(3, 3)).astype(np.uint64)
        base = metrics(ConfusionMatrix(counts, ("x", "y", "z")))
        scaled = metrics(ConfusionMatrix(counts * scale, ("x", "y", "z")))
        assert scaled.overall_acc == pytest.approx(base.overall_acc, rel=1e-12)
        assert scaled.kappa == pytest.approx(base.kappa, rel=1e-9)
        for i in range(3):
            assert scaled.f1[i] == pytest.approx(base.f1[i], rel=1e-12)

    def test_empty_matrix_rejected(self):
        cm = ConfusionMatrix(np.zeros((2, 2), dtype=np.uint64), ("a", "b"))
        with pytest.raises(ValidationError):
            metrics(cm)


class TestRendering:
    def test_table_contains_counts_and_aggregates(self, table_confusion):
        text = render_confusion_table(table_confusion)
        assert "2,532,004" in text
        assert "15,597,568" in text
        assert "96.09" in text

    def test_report_json_roundtrip_nan_as_null(self, tmp_path):
        counts = np.array([[5, 3], [0, 0]], dtype=np.uint64)
        report = metrics(ConfusionMatrix(counts, ("a", "b")))
        path = tmp_path / "report.json"
        report.to_json(path)
        import json

        doc = json.loads(path.read_text())
        assert doc["per_class"]["b"]["precision"] is None
        assert doc["overall_acc"] == pytest.approx(report.overall_acc)

    def test_report_render_lists_classes(self, table_confusion):
        text = render_report(metrics(table_confusion))
        for name in CLASS_NAMES:
            assert name in text
