"""Frequency baseline: n-gram next-activity prediction with backoff.

The context-free probabilistic automaton baseline is the PFA structure of
:mod:`ctxdbn.dbn`; only the n-gram model lives here.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dbn import PredictionDistribution
from .errors import ConfigError
from .eventlog import EncodedLog
from .evaluation import FIRST_POSITION, NEXT_EVENT, evaluate_model, prediction_points

DEFAULT_NS = tuple(range(3, 8))


@dataclass
class NgramModel:
    n: int
    n_symbols: int
    contexts: dict[tuple[int, ...], Counter] = field(default_factory=dict)
    unigram: Counter = field(default_factory=Counter)

    def lookup(self, prefix: Sequence[int]) -> tuple[tuple[int, ...], Counter]:
        """Longest stored context (at most n-1 symbols) that ends the prefix."""
        prefix = tuple(int(x) for x in prefix)
        for length in range(min(self.n - 1, len(prefix)), 0, -1):
            ctx = prefix[-length:]
            if ctx in self.contexts:
                return ctx, self.contexts[ctx]
        return (), self.unigram


def fit_ngram(train: EncodedLog, n: int) -> NgramModel:
    if n < 2:
        raise ConfigError("n must be >= 2")
    if len(train) == 0:
        raise ConfigError("training log is empty")
    model = NgramModel(n, train.vocabulary.activity.size)
    for trace in train.traces:
        seq = [int(x) for x in trace.events]
        model.unigram.update(seq)
        for j in range(1, len(seq)):
            for length in range(1, min(n - 1, j) + 1):
                model.contexts.setdefault(tuple(seq[j - length:j]), Counter())[seq[j]] += 1
    return model


def ngram_predict(model: NgramModel, prefix: Sequence[int]) -> PredictionDistribution:
    if len(prefix) < 1:
        raise ConfigError("prefix must be non-empty")
    _, counts = model.lookup(prefix)
    probs = np.zeros(model.n_symbols)
    for sym, k in counts.items():
        probs[sym] = k
    return PredictionDistribution(NEXT_EVENT, probs / probs.sum())


@prediction_points.register
def _(predictor: NgramModel, log: EncodedLog, target: str, **_):
    if target != NEXT_EVENT:
        raise ConfigError("n-gram models only predict the next event")
    truth, pred = [], []
    for t in log.traces:
        seq = [int(x) for x in t.events]
        for p in range(FIRST_POSITION, len(seq) + 1):
            truth.append(seq[p - 1])
            pred.append(ngram_predict(predictor, seq[: p - 1]).argmax)
    return np.array(truth, dtype=np.int64), np.array(pred, dtype=np.int64)


@dataclass
class SweepRow:
    n: int
    accuracy: float
    macro_f1: float

    def to_dict(self) -> dict:
        return {"n": self.n, "accuracy": self.accuracy, "macro_f1": self.macro_f1}


@dataclass
class SweepResult:
    rows: list[SweepRow]
    best_accuracy_n: int
    best_f1_n: int

    def row(self, n: int) -> SweepRow:
        return next(r for r in self.rows if r.n == n)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "best_accuracy_n": self.best_accuracy_n,
            "best_f1_n": self.best_f1_n,
        }


def ngram_sweep(train: EncodedLog, test: EncodedLog, ns: Iterable[int] = DEFAULT_NS) -> SweepResult:
    """Fit and score each n; the best n by accuracy and by F1 are flagged separately (ties: smaller n)."""
    if len(test) == 0:
        raise ConfigError("test log is empty")
    rows = []
    for n in sorted(set(ns)):
        report = evaluate_model(fit_ngram(train, n), test)
        rows.append(SweepRow(n, report.accuracy, report.macro_f1))
    if not rows:
        raise ConfigError("no n values to sweep")
    best_acc = max(rows, key=lambda r: (r.accuracy, -r.n)).n
    best_f1 = max(rows, key=lambda r: (r.macro_f1, -r.n)).n
    return SweepResult(rows, best_acc, best_f1)
