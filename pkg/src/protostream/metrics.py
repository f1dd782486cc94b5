"""Macro-F1, forgetting and intransigence over a learning trajectory."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractViolation


def confusion_counts(predictions: np.ndarray, labels: np.ndarray,
                     class_ids: list[int]) -> dict[int, tuple[int, int, int]]:
    """Per-class (true positives, false positives, false negatives)."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    out = {}
    for c in class_ids:
        tp = int(((predictions == c) & (labels == c)).sum())
        fp = int(((predictions == c) & (labels != c)).sum())
        fn = int(((predictions != c) & (labels == c)).sum())
        out[c] = (tp, fp, fn)
    return out


def per_class_f1(predictions: np.ndarray, labels: np.ndarray,
                 class_ids: list[int]) -> dict[int, float]:
    """F1 per class; a class with precision + recall == 0 scores 0."""
    scores = {}
    for c, (tp, fp, fn) in confusion_counts(predictions, labels, class_ids).items():
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        scores[c] = 2.0 * prec * rec / (prec + rec) if prec + rec else 0.0
    return scores


def macro_f1(predictions: np.ndarray, labels: np.ndarray, class_ids) -> float:
    """Unweighted mean of per-class F1 over ``class_ids``."""
    class_ids = sorted(int(c) for c in class_ids)
    if not class_ids:
        raise ContractViolation("macro F1 needs a non-empty class set")
    scores = per_class_f1(predictions, labels, class_ids)
    return sum(scores.values()) / len(class_ids)


def forgetting_score(current: float, history: list[float]) -> float:
    """1 - current/best-so-far, clamped to [0, 1]; 0 when never measured > 0."""
    peak = max(history) if history else 0.0
    if peak <= 0.0:
        return 0.0
    return min(max(1.0 - current / peak, 0.0), 1.0)


@dataclass
class EvalRecord:
    """One held-out evaluation of a model state."""

    step: int
    seen_classes: list[int]
    base_f1: float
    new_f1: float | None
    overall_f1: float
    per_class: dict[int, float]
    loss_total: float | None = None
    loss_ce: float | None = None
    loss_contrastive: float | None = None
    forgetting: float | None = None
    intransigence: float | None = None


class MetricsLedger:
    """Per-step held-out performance history with derived measures.

    ``reference_scores`` holds the per-class score of the all-data
    offline model; intransigence is only defined once it is present.
    """

    def __init__(self, base_classes: list[int], new_classes: list[int],
                 reference_scores: dict[int, float] | None = None):
        self.base_classes = sorted(int(c) for c in base_classes)
        self.new_classes = sorted(int(c) for c in new_classes)
        self.reference_scores = reference_scores
        self.records: list[EvalRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: EvalRecord) -> EvalRecord:
        """Append a record, deriving forgetting/intransigence in place."""
        t = len(self.records)
        if t >= 1:
            record.forgetting = self.forgetting_at(t, record=record)
        if self.reference_scores is not None:
            new_seen = [c for c in record.seen_classes if c in self.new_classes]
            if new_seen:
                record.intransigence = self.intransigence_at(record, new_seen)
        self.records.append(record)
        return record

    def forgetting_at(self, t: int, record: EvalRecord | None = None) -> float:
        """Mean over base classes of 1 - current/historical-max score."""
        if t < 1 or t > len(self.records):
            raise ContractViolation("forgetting needs at least one earlier evaluation")
        record = record if record is not None else self.records[t]
        scores = []
        for c in self.base_classes:
            history = [r.per_class[c] for r in self.records[:t] if c in r.per_class]
            scores.append(forgetting_score(record.per_class.get(c, 0.0), history))
        return float(np.mean(scores))

    def intransigence_at(self, record: EvalRecord, new_seen: list[int]) -> float:
        """Mean reference-minus-current score over the new classes seen."""
        if self.reference_scores is None:
            raise ContractViolation("intransigence requires reference scores")
        gaps = []
        for c in new_seen:
            if c not in self.reference_scores:
                raise ContractViolation(f"missing reference score for class {c}")
            gaps.append(self.reference_scores[c] - record.per_class.get(c, 0.0))
        return float(np.mean(gaps))

    # -- summaries -----------------------------------------------------------

    def final(self) -> EvalRecord:
        if not self.records:
            raise ContractViolation("empty ledger")
        return self.records[-1]

    def trajectory_mean(self, attr: str) -> float | None:
        values = [getattr(r, attr) for r in self.records if getattr(r, attr) is not None]
        return float(np.mean(values)) if values else None

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps({
                    "step": r.step,
                    "seen_classes": r.seen_classes,
                    "base_f1": r.base_f1,
                    "new_f1": r.new_f1,
                    "overall_f1": r.overall_f1,
                    "loss_total": r.loss_total,
                    "loss_ce": r.loss_ce,
                    "loss_contrastive": r.loss_contrastive,
                    "forgetting": r.forgetting,
                    "intransigence": r.intransigence,
                    "per_class_f1": {str(k): v for k, v in sorted(r.per_class.items())},
                }, sort_keys=True) + "\n")
