"""Evidence sensitivity: how much the context observations move the probability of the true next event.

The normalized likelihood at a prediction point is

    NL = P(e_true | control flow and context) / P(e_true | control flow only)

where the denominator sums the withheld background and symptom values out
through their CPDs rather than plugging in MISSING.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dbn import UNOBSERVED, DbnModel, forward_pass, predict_next_event, _event_distribution
from .errors import ConfigError, ImpossibleEvidence
from .eventlog import EncodedLog, EncodedTrace
from .evaluation import FIRST_POSITION

logger = logging.getLogger(__name__)

EQUAL_TOL = 1e-6
QUARTILE_METHOD = "linear"


def _withheld(trace: EncodedTrace) -> EncodedTrace:
    hide = lambda arr: None if arr is None else np.full_like(arr, UNOBSERVED)
    return EncodedTrace(trace.case_id, trace.events, hide(trace.background), hide(trace.symptom))


def context_free_distribution(model: DbnModel, prefix: EncodedTrace) -> np.ndarray:
    """Next-event distribution with every background and symptom value of the prefix and of the next slice marginalized."""
    state = forward_pass(model, _withheld(prefix))
    return _event_distribution(model.cpds, state.next_prior, UNOBSERVED)


def _check_model(model: DbnModel) -> None:
    if not (model.structure.has_background or model.structure.has_symptom):
        raise ConfigError("evidence sensitivity needs a structure with a context node")


def nl_at_point(model: DbnModel, trace: EncodedTrace, p: int) -> float:
    """Normalized likelihood of the observed event at 1-based position ``p`` (3 <= p <= T).

    Returns ``inf`` when the true event has zero probability without context.
    """
    _check_model(model)
    if not FIRST_POSITION <= p <= len(trace):
        raise ConfigError(f"position must lie in [{FIRST_POSITION}, {len(trace)}], got {p}")
    prefix = trace.prefix(p - 1)
    true_event = int(trace.events[p - 1])
    nb = int(trace.background[p - 1]) if model.structure.has_background else None
    num = predict_next_event(model, prefix, nb).probs[true_event]
    den = context_free_distribution(model, prefix)[true_event]
    if not den > 0:
        return float("inf")
    return float(num / den)


@dataclass
class NlPoint:
    case_id: str
    position: int
    nl: float

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.nl))


@dataclass
class EsaReport:
    points: list[NlPoint]
    summary: dict[str, float]
    greater: int
    equal: int
    less: int
    infinite: int
    impossible: list[str] = field(default_factory=list)

    def finite_values(self) -> np.ndarray:
        return np.array([pt.nl for pt in self.points if pt.finite], dtype=float)

    def to_dict(self) -> dict:
        return {
            "quartile_method": QUARTILE_METHOD,
            "summary": self.summary,
            "counts": {
                "greater_than_1": self.greater,
                "equal_to_1": self.equal,
                "less_than_1": self.less,
                "infinite": self.infinite,
                "points": len(self.points),
            },
            "impossible_cases": self.impossible,
        }

    def csv_rows(self) -> list[list[str]]:
        rows = [["case_id", "position", "nl", "finite"]]
        for pt in self.points:
            rows.append([pt.case_id, str(pt.position), repr(pt.nl), str(int(pt.finite))])
        return rows


def summarize(values: np.ndarray) -> dict[str, float]:
    """min, quartiles and max with linear interpolation between order statistics."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ConfigError("no finite NL values to summarize")
    q1, med, q3 = np.percentile(values, [25, 50, 75], method=QUARTILE_METHOD)
    return {
        "min": float(values[0]),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(values[-1]),
    }


def esa_report(model: DbnModel, test: EncodedLog) -> EsaReport:
    """NL at every position p >= 3 of every test trace, plus a quartile summary.

    Traces whose evidence is impossible under the model are listed and skipped;
    infinite ratios are kept as points but left out of the summary.
    """
    _check_model(model)
    points = []
    impossible = []
    for trace in test.traces:
        try:
            for p in range(FIRST_POSITION, len(trace) + 1):
                points.append(NlPoint(trace.case_id, p, nl_at_point(model, trace, p)))
        except ImpossibleEvidence as exc:
            logger.warning("skipping %s: %s", trace.case_id, exc)
            impossible.append(trace.case_id)
            points = [pt for pt in points if pt.case_id != trace.case_id]
    if not points:
        raise ConfigError("no evaluable prediction points (traces need >= 3 events)")
    finite = np.array([pt.nl for pt in points if pt.finite])
    return EsaReport(
        points=points,
        summary=summarize(finite),
        greater=int(np.sum(finite > 1 + EQUAL_TOL)),
        equal=int(np.sum(np.abs(finite - 1) <= EQUAL_TOL)),
        less=int(np.sum(finite < 1 - EQUAL_TOL)),
        infinite=len(points) - finite.size,
        impossible=impossible,
    )
