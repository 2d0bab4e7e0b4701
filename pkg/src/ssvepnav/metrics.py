"""Accuracy, confusion matrices and information transfer rate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .signal import ALL_CLASSES, StimulusClass

N_SELECTIONS = 3


def bits_per_trial(n: int, p: float) -> float:
    """Bits conveyed by one selection among n options at accuracy p.

    B = log2(n) + p*log2(p) + (1-p)*log2((1-p)/(n-1)), with 0*log2(0) := 0
    at both endpoints.
    """
    if n < 2:
        raise ParameterError(f"need at least 2 selections, got {n}")
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"accuracy must be in [0,1], got {p}")
    b = math.log2(n)
    if p > 0.0:
        b += p * math.log2(p)
    if p < 1.0:
        b += (1.0 - p) * math.log2((1.0 - p) / (n - 1))
    # B is non-negative for p >= 1/n; clamp the rounding residue at chance
    # (and the sub-chance regime, where the rate is conventionally zero)
    return max(b, 0.0)


def itr_bpm(bits: float, t_minutes: float) -> float:
    """Information transfer rate in bits per minute."""
    if t_minutes <= 0:
        raise ParameterError(f"trial time must be positive, got {t_minutes} min")
    return bits / t_minutes


@dataclass
class ConfusionMatrix:
    """3x3 counts; rows are true classes, columns predicted."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), dtype=np.int64))

    def add(self, true_cls: StimulusClass, pred_cls: StimulusClass) -> None:
        self.counts[true_cls.class_index, pred_cls.class_index] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            return 0.0
        return float(np.trace(self.counts)) / self.total

    def recall(self, cls: StimulusClass) -> float:
        row = self.counts[cls.class_index]
        return float(row[cls.class_index]) / row.sum() if row.sum() else 0.0

    def to_lists(self) -> list:
        return self.counts.tolist()


def confusion(pairs) -> ConfusionMatrix:
    """Tally (true, predicted) pairs into a confusion matrix."""
    pairs = list(pairs)
    if not pairs:
        raise ParameterError("cannot build a confusion matrix from zero pairs")
    cm = ConfusionMatrix()
    for true_cls, pred_cls in pairs:
        cm.add(true_cls, pred_cls)
    return cm


def metrics_report(fold_accuracies, t_seconds: float,
                   cm: ConfusionMatrix | None = None) -> dict:
    """Machine-readable metrics summary (also renderable as text)."""
    accs = [float(a) for a in fold_accuracies]
    mean = float(np.mean(accs))
    std = float(np.std(accs))
    b = bits_per_trial(N_SELECTIONS, mean)
    report = {
        "per_fold_accuracies": accs,
        "mean": mean,
        "std": std,
        "B": b,
        "T_seconds": t_seconds,
        "itr_bpm": itr_bpm(b, t_seconds / 60.0),
        "confusion": cm.to_lists() if cm is not None else None,
    }
    return report


def format_report(report: dict) -> str:
    lines = [
        "accuracy  mean={mean:.4f}  std={std:.4f}".format(**report),
        "bits/trial  B={B:.5f}".format(**report),
        "trial time  T={T_seconds:.3f} s".format(**report),
        "ITR  {itr_bpm:.2f} bpm".format(**report),
    ]
    if report.get("per_fold_accuracies"):
        folds = " ".join(f"{a:.3f}" for a in report["per_fold_accuracies"])
        lines.append(f"folds  {folds}")
    if report.get("confusion") is not None:
        lines.append("confusion (rows=true F10/F12/F15):")
        for row in report["confusion"]:
            lines.append("  " + " ".join(f"{c:4d}" for c in row))
    return "\n".join(lines)


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2)
