"""Per-class F1, macro F1 and accuracy from a confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .data import LABELS

Label = Union[int, str]


def _index(label: Label) -> int:
    if isinstance(label, str):
        return LABELS.index(label)
    i = int(label)
    if not 0 <= i < len(LABELS):
        raise ValueError(f"label index {i} out of range")
    return i


@dataclass
class Metrics:
    f1: dict[str, float]
    macro_f1: float
    accuracy: float
    confusion: list[list[int]]  # rows: true class, columns: predicted class
    support: int

    def record(self) -> dict:
        return {
            "f1_negative": self.f1["negative"],
            "f1_neutral": self.f1["neutral"],
            "f1_positive": self.f1["positive"],
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "confusion": self.confusion,
        }


def confusion_matrix(preds: Sequence[Label], labels: Sequence[Label]) -> np.ndarray:
    if len(preds) != len(labels):
        raise ValueError(f"{len(preds)} predictions for {len(labels)} labels")
    cm = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    for p, y in zip(preds, labels):
        cm[_index(y), _index(p)] += 1
    return cm


def compute_metrics(preds: Sequence[Label], labels: Sequence[Label]) -> Metrics:
    """Macro F1 averages only classes present in the labels or predictions."""
    cm = confusion_matrix(preds, labels)
    total = int(cm.sum())
    f1 = {}
    present = []
    for c, name in enumerate(LABELS):
        tp = cm[c, c]
        pred_pos = cm[:, c].sum()
        true_pos = cm[c, :].sum()
        precision = tp / pred_pos if pred_pos else 0.0
        recall = tp / true_pos if true_pos else 0.0
        f1[name] = float(2 * precision * recall / (precision + recall)) if precision + recall else 0.0
        if pred_pos or true_pos:
            present.append(f1[name])
    return Metrics(
        f1=f1,
        macro_f1=float(np.mean(present)) if present else 0.0,
        accuracy=float(np.trace(cm) / total) if total else 0.0,
        confusion=cm.tolist(),
        support=total,
    )
