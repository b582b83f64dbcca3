"""Loss evaluators and the classification accuracy suite.

Conventions: confusion matrix rows index the classified (predicted) class,
columns the reference (truth) class. Producer accuracy is per-class recall
against the reference, user accuracy is per-class precision of the output.
Rates with a zero denominator are reported as NaN, never silently as 0.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatchError, ValidationError
from .raster import BinaryProbMap, LabelMap, ProbabilityMap, require_same_extent

LOG_CLAMP_EPS = 1e-9


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def multiclass_ce_loss(
    p: ProbabilityMap,
    y: LabelMap,
    weight_decay: float = 0.0,
    param_sq_norm: float = 0.0,
) -> float:
    """Cross-entropy summed over pixels plus an L2 penalty term.

    The penalty is weight_decay * param_sq_norm with the squared parameter
    norm supplied by the caller; this evaluator never sees model weights.
    """
    require_same_extent(p, y, "probabilities vs labels")
    if weight_decay < 0 or param_sq_norm < 0:
        raise ValidationError("weight_decay and param_sq_norm must be >= 0")
    if int(y.data.max()) >= p.classes:
        raise ValidationError(
            f"label id {int(y.data.max())} out of range for {p.classes} probability channels"
        )
    probs = p.data.astype(np.float64)
    idx = y.data.astype(np.int64)[:, :, np.newaxis]
    true_p = np.take_along_axis(probs, idx, axis=2)[:, :, 0]
    data_term = float(-np.log(np.clip(true_p, LOG_CLAMP_EPS, None)).sum())
    return data_term + weight_decay * param_sq_norm


def binary_ce_loss(g: BinaryProbMap, y: np.ndarray, domain: np.ndarray) -> float:
    """Binary cross-entropy summed over the pixels selected by `domain`.

    `y` is a boolean target mask and `domain` a boolean pixel-set mask, both
    of the map's extent. An empty domain yields 0.0 with a warning.
    """
    y = np.asarray(y, dtype=bool)
    domain = np.asarray(domain, dtype=bool)
    if y.shape != g.data.shape or domain.shape != g.data.shape:
        raise ShapeMismatchError(
            f"mask shapes {y.shape}/{domain.shape} do not match map {g.data.shape}"
        )
    if not domain.any():
        warnings.warn("binary_ce_loss: empty domain, loss defined as 0", stacklevel=2)
        return 0.0
    probs = np.clip(g.data.astype(np.float64)[domain], LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS)
    target = y[domain]
    terms = np.where(target, -np.log(probs), -np.log(1.0 - probs))
    return float(terms.sum())


# ---------------------------------------------------------------------------
# Confusion matrix and derived metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """C x C count table; counts[r][c] = pixels classified r with reference c."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.uint64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"counts must be square, got shape {arr.shape}")
        names = tuple(str(n) for n in self.class_names)
        if len(names) != arr.shape[0]:
            raise ValidationError(f"{len(names)} names for {arr.shape[0]} classes")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)
        object.__setattr__(self, "class_names", names)

    @property
    def classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __repr__(self):
        return f"ConfusionMatrix(classes={self.classes}, total={self.total})"


def confusion(pred: LabelMap, truth: LabelMap, ignore: int | None = None) -> ConfusionMatrix:
    """Tally predicted-vs-reference counts; pixels whose truth equals
    `ignore` are excluded."""
    require_same_extent(pred, truth, "prediction vs truth")
    classes = max(pred.classes, truth.classes)
    names = truth.legend if truth.classes >= pred.classes else pred.legend
    p = pred.data.astype(np.int64).ravel()
    t = truth.data.astype(np.int64).ravel()
    if ignore is not None:
        keep = t != int(ignore)
        p, t = p[keep], t[keep]
    counts = np.bincount(p * classes + t, minlength=classes * classes)
    return ConfusionMatrix(counts.reshape(classes, classes).astype(np.uint64), names)


@dataclass(frozen=True)
class MetricReport:
    """Per-class and aggregate rates derived from one confusion matrix."""

    class_names: tuple[str, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    dice: tuple[float, ...]
    producer_acc: tuple[float, ...]
    user_acc: tuple[float, ...]
    class_weights: tuple[float, ...]
    overall_acc: float
    kappa: float

    def to_dict(self) -> dict:
        def clean(v):
            return None if (isinstance(v, float) and math.isnan(v)) else v

        return {
            "class_names": list(self.class_names),
            "per_class": {
                name: {
                    "precision": clean(self.precision[i]),
                    "recall": clean(self.recall[i]),
                    "f1": clean(self.f1[i]),
                    "dice": clean(self.dice[i]),
                    "producer_acc": clean(self.producer_acc[i]),
                    "user_acc": clean(self.user_acc[i]),
                    "weight": clean(self.class_weights[i]),
                }
                for i, name in enumerate(self.class_names)
            },
            "overall_acc": clean(self.overall_acc),
            "kappa": clean(self.kappa),
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den > 0 else float("nan")


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Overall accuracy, Cohen's kappa, and the per-class rate suite."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValidationError("confusion matrix is empty; metrics undefined")
    diag = np.diag(counts)
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)

    precision = tuple(_ratio(diag[i], row[i]) for i in range(cm.classes))
    recall = tuple(_ratio(diag[i], col[i]) for i in range(cm.classes))
    f1 = tuple(
        _ratio(2 * precision[i] * recall[i], precision[i] + recall[i])
        if not (math.isnan(precision[i]) or math.isnan(recall[i]))
        else float("nan")
        for i in range(cm.classes)
    )
    overall = float(diag.sum() / total)
    expected = float((row * col).sum() / (total * total))
    kappa = (overall - expected) / (1.0 - expected) if expected < 1.0 else float("nan")
    weights = tuple(float(c / total) for c in col)
    return MetricReport(
        class_names=cm.class_names,
        precision=precision,
        recall=recall,
        f1=f1,
        dice=f1,  # identical when both derive from the same count table
        producer_acc=recall,
        user_acc=precision,
        class_weights=weights,
        overall_acc=overall,
        kappa=float(kappa),
    )


# ---------------------------------------------------------------------------
# Tabular rendering
# ---------------------------------------------------------------------------


def _fmt_pct(v: float) -> str:
    return "--" if math.isnan(v) else f"{100 * v:.2f}"


def render_confusion_table(cm: ConfusionMatrix, report: MetricReport | None = None) -> str:
    """Human-readable table: reference columns, classified rows, marginal
    totals, and producer/user accuracy lines."""
    if report is None:
        report = metrics(cm)
    names = list(cm.class_names)
    row_tot = cm.row_totals()
    col_tot = cm.col_totals()
    header = ["classified \\ reference"] + names + ["row total", "producer acc (%)"]
    rows = [header]
    for i, name in enumerate(names):
        cells = [name]
        cells += [f"{int(v):,}" for v in cm.counts[i]]
        cells += [f"{int(row_tot[i]):,}", _fmt_pct(report.producer_acc[i])]
        rows.append(cells)
    rows.append(
        ["column total"] + [f"{int(v):,}" for v in col_tot] + [f"{cm.total:,}", ""]
    )
    rows.append(["user acc (%)"] + [_fmt_pct(v) for v in report.user_acc] + ["", ""])

    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.rjust(w) if j else cell.ljust(w)
                               for j, (cell, w) in enumerate(zip(r, widths))))
    lines.append(f"overall accuracy (%): {_fmt_pct(report.overall_acc)}")
    lines.append(f"kappa statistic:      {report.kappa:.4f}")
    return "\n".join(lines)


def render_report(report: MetricReport) -> str:
    """Per-class rate table plus the aggregate lines."""
    header = ["class", "precision", "recall", "f1", "dice", "producer", "user", "weight"]
    rows = [header]
    for i, name in enumerate(report.class_names):
        rows.append([
            name,
            *(f"{v:.4f}" if not math.isnan(v) else "nan"
              for v in (report.precision[i], report.recall[i], report.f1[i], report.dice[i],
                        report.producer_acc[i], report.user_acc[i], report.class_weights[i])),
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) if j else cell.ljust(w)
                       for j, (cell, w) in enumerate(zip(r, widths))) for r in rows]
    lines.append(f"overall accuracy: {report.overall_acc:.6f}")
    lines.append(f"kappa:            {report.kappa:.6f}")
    return "\n".join(lines)
