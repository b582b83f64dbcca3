"""Confused-pair detection and expert binary override of a coarse label map.

The override rule has three branches for a rule (flagged k, partner k',
threshold tau): pixels whose current label is outside {k, k'} are never
touched; on the remaining pixels the expert decides, assigning k where its
probability is >= tau and k' otherwise. Rules apply sequentially, each one
seeing the labels produced by the previous.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .metrics import ConfusionMatrix, metrics
from .raster import (
    DEFAULT_LOGIT_EPS,
    BinaryProbMap,
    LabelMap,
    LogitMap,
    ProbabilityMap,
    argmax_labels,
    default_legend,
    normalize_legend,
    probs_to_logits,
    require_same_extent,
    softmax,
)
from .smoothing import SmoothingParams, smooth_logits


@dataclass(frozen=True)
class FusionRule:
    """One expert override: flagged class, its confusion partner, threshold."""

    flagged_class: int
    partner_class: int
    threshold: float = 0.5

    def __post_init__(self):
        if self.flagged_class == self.partner_class:
            raise ValidationError("flagged and partner class must differ")
        if self.flagged_class < 0 or self.partner_class < 0:
            raise ValidationError("class ids must be >= 0")
        if not (0.0 < self.threshold < 1.0):
            raise ValidationError(f"threshold must lie in (0, 1), got {self.threshold}")

    def to_dict(self) -> dict:
        return {"k": self.flagged_class, "k_prime": self.partner_class, "tau": self.threshold}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FusionRule":
        return cls(
            flagged_class=int(doc["k"]),
            partner_class=int(doc["k_prime"]),
            threshold=float(doc.get("tau", 0.5)),
        )


def rules_to_json(rules: Sequence[FusionRule]) -> str:
    return json.dumps([r.to_dict() for r in rules], indent=2) + "\n"


def rules_from_json(text: str) -> list[FusionRule]:
    doc = json.loads(text)
    if not isinstance(doc, list):
        raise ValidationError("rules JSON must be a list")
    return [FusionRule.from_dict(d) for d in doc]


def detect_confusion(
    cm: ConfusionMatrix, top_n: int = 1, threshold: float = 0.5
) -> list[FusionRule]:
    """Rank class pairs by symmetric off-diagonal confusion mass.

    The mass counts[a][b] + counts[b][a] is normalized by the smaller of
    the two reference totals; within a pair the class with the lower F1 is
    flagged. Pairs with no confusion are dropped, so a diagonal matrix
    yields an empty list. Equal scores order by the pair's class ids.
    """
    if top_n < 0:
        raise ValidationError(f"top_n must be >= 0, got {top_n}")
    report = metrics(cm)
    col = cm.col_totals().astype(np.int64)
    counts = cm.counts.astype(np.int64)

    def f1_rank(c: int) -> float:
        v = report.f1[c]
        return -1.0 if math.isnan(v) else v

    candidates = []
    for a in range(cm.classes):
        for b in range(a + 1, cm.classes):
            mass = int(counts[a, b] + counts[b, a])
            if mass == 0:
                continue
            positive_refs = [int(t) for t in (col[a], col[b]) if t > 0]
            score = mass / min(positive_refs)
            if f1_rank(a) < f1_rank(b) or (f1_rank(a) == f1_rank(b) and a < b):
                flagged, partner = a, b
            else:
                flagged, partner = b, a
            candidates.append((-score, a, b, flagged, partner))
    candidates.sort()
    return [
        FusionRule(flagged, partner, threshold)
        for _, _, _, flagged, partner in candidates[:top_n]
    ]


def expert_override(coarse: LabelMap, expert: BinaryProbMap, rule: FusionRule) -> LabelMap:
    """Re-decide the flagged/partner pixels using the expert probability map."""
    require_same_extent(coarse, expert, "coarse labels vs expert map")
    if rule.flagged_class >= coarse.classes or rule.partner_class >= coarse.classes:
        raise ValidationError(
            f"rule classes {rule.flagged_class}/{rule.partner_class} not in a "
            f"{coarse.classes}-class legend"
        )
    pair = (coarse.data == rule.flagged_class) | (coarse.data == rule.partner_class)
    chooses_flagged = expert.data.astype(np.float64) >= rule.threshold
    out = coarse.data.copy()
    out[pair] = np.where(
        chooses_flagged[pair], np.uint8(rule.flagged_class), np.uint8(rule.partner_class)
    )
    return LabelMap(out, coarse.legend)


def expert_logit_update(
    logits: np.ndarray,
    pair_mask: np.ndarray,
    expert: BinaryProbMap,
    rule: FusionRule,
    eps: float = DEFAULT_LOGIT_EPS,
) -> None:
    """Replace the flagged/partner logit channels with the expert's log-odds.

    In-place on a float32 (H, W, C) array, restricted to pair_mask pixels:
    the flagged channel receives log(e / (1 - e)) and the partner channel
    its negation, so expert confidence survives into smoothing.
    """
    e = np.clip(expert.data.astype(np.float64), eps, 1.0 - eps)
    expert_logit = np.log(e / (1.0 - e)).astype(np.float32)
    logits[pair_mask, rule.flagged_class] = expert_logit[pair_mask]
    logits[pair_mask, rule.partner_class] = -expert_logit[pair_mask]


@dataclass(frozen=True, eq=False)
class PipelineResult:
    """Outputs of every pipeline stage plus per-stage change counts."""

    coarse: LabelMap
    fused: LabelMap
    labels: LabelMap
    rule_changes: tuple[int, ...]
    smoothing_changes: int


def run_pipeline_detailed(
    p: ProbabilityMap,
    experts: Mapping[int, BinaryProbMap],
    rules: Sequence[FusionRule],
    smoothing: SmoothingParams | None,
    legend: Sequence[str] | None = None,
    threads: int = 1,
    logit_eps: float = DEFAULT_LOGIT_EPS,
) -> PipelineResult:
    """Coarse argmax, sequential expert overrides, optional logit smoothing.

    When smoothing is enabled the logits fed to it are the coarse log-odds
    with the flagged/partner channels replaced by each rule's expert
    log-odds on the pixels that rule governed.
    """
    names = normalize_legend(legend) if legend is not None else default_legend(p.classes)
    coarse = argmax_labels(p, names)
    labels = coarse
    logits = np.array(probs_to_logits(p, logit_eps).data)  # mutable working copy
    changes = []
    for rule in rules:
        expert = experts.get(rule.flagged_class)
        if expert is None:
            raise ValidationError(f"no expert map supplied for flagged class {rule.flagged_class}")
        require_same_extent(p, expert, "probabilities vs expert map")
        pair = (labels.data == rule.flagged_class) | (labels.data == rule.partner_class)
        updated = expert_override(labels, expert, rule)
        changes.append(int((updated.data != labels.data).sum()))
        expert_logit_update(logits, pair, expert, rule, logit_eps)
        labels = updated
    fused = labels
    if smoothing is None:
        return PipelineResult(coarse, fused, fused, tuple(changes), 0)
    smoothed_probs = softmax(smooth_logits(LogitMap(logits), smoothing, threads))
    final = argmax_labels(smoothed_probs, names)
    return PipelineResult(
        coarse, fused, final, tuple(changes), int((final.data != fused.data).sum())
    )


def run_pipeline(
    p: ProbabilityMap,
    experts: Mapping[int, BinaryProbMap],
    rules: Sequence[FusionRule],
    smoothing: SmoothingParams | None,
    legend: Sequence[str] | None = None,
    threads: int = 1,
    logit_eps: float = DEFAULT_LOGIT_EPS,
) -> LabelMap:
    """Final label map of the three-stage pipeline; see run_pipeline_detailed."""
    return run_pipeline_detailed(p, experts, rules, smoothing, legend, threads, logit_eps).labels
