"""Synthetic two-variant processes with a known best achievable accuracy.

Every trace runs A, B and then either C, D (variant 1) or D, C (variant 2),
each with probability 1/2.  A single attribute ``ctx`` with values w, x, y, z
is attached depending on the kind:

* ``background-causal``: trace-constant; w or x for variant 1, y or z for variant 2.
* ``background-random``: trace-constant, uniform, independent of the variant.
* ``symptom-causal``: per event, A->w, B->x, C->y, D->z.
* ``symptom-random``: per event, uniform and independent of everything.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .errors import ConfigError
from .eventlog import CATEGORICAL, Event, EventLog, Trace

KINDS = ("background-causal", "background-random", "symptom-causal", "symptom-random")
ATTRIBUTE = "ctx"
VALUES = ("w", "x", "y", "z")
VARIANTS = (("A", "B", "C", "D"), ("A", "B", "D", "C"))
SYMPTOM_OF = dict(zip("ABCD", VALUES))

# best achievable accuracies over positions 3..4
OPTIMAL_ACCURACY = {
    "background-causal": 1.0,
    "background-random": 0.75,
    "symptom-causal": 1.0,
    "symptom-random": 0.25,
}

_START = datetime(2020, 1, 1)


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    num_traces: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r}; expected one of {KINDS}")
        if self.num_traces < 1:
            raise ConfigError("num_traces must be >= 1")

    @property
    def role(self) -> str:
        return self.kind.split("-")[0]


def generate(spec: SyntheticSpec) -> EventLog:
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.num_traces - 1))
    traces = []
    for i in range(spec.num_traces):
        variant = int(rng.integers(2))
        acts = VARIANTS[variant]
        if spec.kind == "background-causal":
            group = VALUES[:2] if variant == 0 else VALUES[2:]
            ctx = [group[int(rng.integers(2))]] * len(acts)
        elif spec.kind == "background-random":
            ctx = [VALUES[int(rng.integers(4))]] * len(acts)
        elif spec.kind == "symptom-causal":
            ctx = [SYMPTOM_OF[a] for a in acts]
        else:
            ctx = [VALUES[int(j)] for j in rng.integers(4, size=len(acts))]
        start = _START + timedelta(hours=i)
        events = tuple(
            Event(a, start + timedelta(minutes=j), {ATTRIBUTE: v})
            for j, (a, v) in enumerate(zip(acts, ctx))
        )
        traces.append(Trace(f"case_{i:0{width}d}", events))
    return EventLog(tuple(traces), {ATTRIBUTE: CATEGORICAL})
