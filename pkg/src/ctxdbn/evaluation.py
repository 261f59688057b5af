"""Scoring of next-event and symptom predictors."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Sequence

import numpy as np

from .dbn import DbnModel, next_event_table, predict_symptom
from .errors import ConfigError
from .eventlog import EncodedLog

NEXT_EVENT = "next-event"
SYMPTOM = "symptom"
TARGETS = (NEXT_EVENT, SYMPTOM)
FIRST_POSITION = 3
NO_PREDICTION = -1
NO_PREDICTION_LABEL = "<NONE>"


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }


@dataclass
class EvaluationReport:
    target: str
    total: int
    correct: int
    accuracy: float
    macro_f1: float
    per_class: list[ClassMetrics]
    confusion: dict[str, dict[str, int]] = field(default_factory=dict)
    no_prediction: int = 0

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "no_prediction": self.no_prediction,
            "per_class": [c.to_dict() for c in self.per_class],
            "confusion": self.confusion,
        }


def classification_report(
    y_true: Sequence[int],
    y_pred: Sequence[int],
    labels: Sequence | None = None,
    target: str = NEXT_EVENT,
) -> EvaluationReport:
    """Accuracy, macro-F1 over classes present in ``y_true``, per-class metrics and confusion counts.

    A class whose precision and recall are both 0 gets F1 = 0.  Predictions
    equal to ``NO_PREDICTION`` count as wrong.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ConfigError("truth and prediction lengths differ")
    total = int(y_true.size)
    if total == 0:
        raise ConfigError("no predictions to evaluate")

    def name(i: int) -> str:
        if i == NO_PREDICTION:
            return NO_PREDICTION_LABEL
        return str(labels[i]) if labels is not None else str(i)

    correct = int(np.sum(y_true == y_pred))
    classes = sorted(set(y_true.tolist()) | (set(y_pred.tolist()) - {NO_PREDICTION}))
    per_class = []
    f1_present = []
    for c in classes:
        tp = int(np.sum((y_true == c) & (y_pred == c)))
        fp = int(np.sum((y_true != c) & (y_pred == c)))
        fn = int(np.sum((y_true == c) & (y_pred != c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        support = tp + fn
        per_class.append(ClassMetrics(name(c), precision, recall, f1, support))
        if support > 0:
            f1_present.append(f1)

    confusion: dict[str, dict[str, int]] = {}
    for (t, p), n in sorted(Counter(zip(y_true.tolist(), y_pred.tolist())).items()):
        confusion.setdefault(name(t), {})[name(p)] = n

    return EvaluationReport(
        target=target,
        total=total,
        correct=correct,
        accuracy=correct / total,
        macro_f1=float(np.mean(f1_present)),
        per_class=per_class,
        confusion=confusion,
        no_prediction=int(np.sum(y_pred == NO_PREDICTION)),
    )


@singledispatch
def prediction_points(predictor, log: EncodedLog, target: str, **options) -> tuple[np.ndarray, np.ndarray]:
    """``(y_true, y_pred)`` over every trace position ``p >= 3`` of ``log``.

    The prefix ``1..p-1`` is used for every query; background structures also
    see the background value of slice ``p``, and symptom targets see the
    event of slice ``p``.
    """
    raise TypeError(f"no prediction rule registered for {type(predictor).__name__}")


@prediction_points.register
def _(predictor: DbnModel, log: EncodedLog, target: str, symptom_marginal: bool = False, **_):
    traces = [t for t in log.traces if len(t) >= FIRST_POSITION]
    if not traces:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if target == NEXT_EVENT:
        probs, mask = next_event_table(predictor, traces)
        probs, mask = probs[:, FIRST_POSITION - 2:], mask[:, FIRST_POSITION - 2:]
        truth = np.stack([_pad(t.events[FIRST_POSITION - 1:], mask.shape[1]) for t in traces])
        dead = np.isnan(probs).any(axis=2)
        pred = np.where(dead, NO_PREDICTION, np.argmax(np.nan_to_num(probs, nan=-1.0), axis=2))
        return truth[mask], pred[mask]
    if target == SYMPTOM:
        if not predictor.structure.has_symptom:
            raise ConfigError("symptom target needs a structure with a symptom node")
        truth, pred = [], []
        table = predictor.cpds.symptom_emit
        for t in traces:
            if t.symptom is None:
                raise ConfigError("log has no symptom values")
            for p in range(FIRST_POSITION, len(t) + 1):
                truth.append(int(t.symptom[p - 1]))
                if symptom_marginal:
                    pred.append(predict_symptom(predictor, t.prefix(p), marginal=True).argmax)
                else:
                    pred.append(int(np.argmax(table[t.events[p - 1]])))
        return np.array(truth, dtype=np.int64), np.array(pred, dtype=np.int64)
    raise ConfigError(f"unknown target {target!r}")


def _pad(arr: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros(width, dtype=np.int64)
    out[: len(arr)] = arr
    return out


def evaluate_model(predictor, test: EncodedLog, target: str = NEXT_EVENT, **options) -> EvaluationReport:
    """Score ``predictor`` at every position ``p >= 3`` of every test trace."""
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}")
    y_true, y_pred = prediction_points(predictor, test, target, **options)
    if y_true.size == 0:
        raise ConfigError("test log has no evaluable positions (traces need >= 3 events)")
    vocab = test.vocabulary.activity if target == NEXT_EVENT else test.vocabulary.symptom
    labels = vocab.labels() if vocab is not None else None
    return classification_report(y_true, y_pred, labels, target)
