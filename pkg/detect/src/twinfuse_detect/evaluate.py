"""Confusion-matrix metrics for the two-class crack task."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import LABELS, PatchDataset


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    crack: ClassMetrics
    no_crack: ClassMetrics
    accuracy: float
    confusion: list  # [[tn, fp], [fn, tp]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _prf(tp, fp, fn) -> ClassMetrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return ClassMetrics(precision, recall, f1)


def report_from_predictions(labels, predictions) -> EvalReport:
    labels = np.asarray(labels, dtype=int)
    predictions = np.asarray(predictions, dtype=int)
    tp = int(((labels == 1) & (predictions == 1)).sum())
    tn = int(((labels == 0) & (predictions == 0)).sum())
    fp = int(((labels == 0) & (predictions == 1)).sum())
    fn = int(((labels == 1) & (predictions == 0)).sum())
    total = max(len(labels), 1)
    return EvalReport(
        crack=_prf(tp, fp, fn),
        no_crack=_prf(tn, fn, fp),
        accuracy=(tp + tn) / total,
        confusion=[[tn, fp], [fn, tp]],
    )


def evaluate(classifier, test_split: PatchDataset,
             threshold: float = 0.5) -> EvalReport:
    probs = classifier.predict_proba(test_split.patches)
    return report_from_predictions(test_split.labels,
                                   (probs > threshold).astype(int))
