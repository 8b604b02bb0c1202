"""Confusion matrix, imbalance-aware scores, and phase timing.

Churn is the positive class. A score whose denominator is zero is reported
as ``None`` rather than 0 or NaN.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

PHASES = ("sampling", "training", "total")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricSet:
    precision: Optional[float]
    recall: Optional[float]
    tpr: Optional[float]
    tnr: Optional[float]
    f_measure: Optional[float]
    g_mean: Optional[float]


def confusion(predicted, actual) -> ConfusionMatrix:
    p = np.asarray(predicted).astype(bool).ravel()
    a = np.asarray(actual).astype(bool).ravel()
    if len(p) != len(a):
        raise MetricsError(f"length mismatch: {len(p)} predictions, {len(a)} labels")
    if len(p) == 0:
        raise MetricsError("empty input")
    return ConfusionMatrix(
        tp=int((p & a).sum()),
        fp=int((p & ~a).sum()),
        fn=int((~p & a).sum()),
        tn=int((~p & ~a).sum()),
    )


def _ratio(num, den):
    return num / den if den else None


def f_measure(precision, recall):
    """2PR / (P + R); undefined if either input is, or if both are 0."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * recall * precision / (recall + precision)


def g_mean(recall, tnr):
    if recall is None or tnr is None:
        return None
    return math.sqrt(recall * tnr)


def evaluate(cm: ConfusionMatrix) -> MetricSet:
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    tnr = _ratio(cm.tn, cm.tn + cm.fp)
    return MetricSet(
        precision=precision,
        recall=recall,
        tpr=recall,
        tnr=tnr,
        f_measure=f_measure(precision, recall),
        g_mean=g_mean(recall, tnr),
    )


@dataclass
class PhaseTimings:
    sampling_seconds: Optional[float] = None
    training_seconds: Optional[float] = None
    total_seconds: Optional[float] = None

    def record(self, label: str, seconds: float) -> None:
        if label not in PHASES:
            raise MetricsError(f"unknown phase {label!r}")
        setattr(self, f"{label}_seconds", seconds)


def time_phase(label: str, body: Callable, timings: PhaseTimings | None = None):
    """Run ``body()`` and return ``(result, wall-clock seconds)``, recording it under ``label``."""
    if label not in PHASES:
        raise MetricsError(f"unknown phase {label!r}")
    start = time.perf_counter()
    result = body()
    seconds = max(0.0, time.perf_counter() - start)
    if timings is not None:
        timings.record(label, seconds)
    return result, seconds


def format_rate(value) -> str:
    """Percentage with two decimals, the way rates appear in result tables."""
    return "n/a" if value is None else f"{100 * value:.2f}%"


def format_score(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def format_seconds(value) -> str:
    return "-" if value is None else f"{value:.0f}" if value >= 10 else f"{value:.2f}"
