"""Event log ingestion, filtering, discretization, encoding and splitting.

Raw logs are read from CSV into immutable :class:`EventLog` objects.  The
model side only ever sees :class:`EncodedLog`, where activities and the (at
most two) context attributes are mapped to dense integer indices.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import ConfigError, DataError, RowError

logger = logging.getLogger(__name__)

CATEGORICAL = "categorical"
NUMERIC = "numeric"
ATTRIBUTE_KINDS = (CATEGORICAL, NUMERIC)

MISSING_LABEL = "<MISSING>"
OTHER_LABEL = "<OTHER>"


@dataclass(frozen=True)
class Event:
    activity: str
    timestamp: datetime
    # absent attribute values are simply not present as keys
    attributes: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.activity:
            raise DataError("activity label must be non-empty")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __len__(self):
        return len(self.events)

    @property
    def activities(self) -> list[str]:
        return [e.activity for e in self.events]


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    schema: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [t.case_id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise DataError("case ids must be unique within a log")
        for name, kind in self.schema.items():
            if kind not in ATTRIBUTE_KINDS:
                raise ConfigError(f"unknown attribute kind {kind!r} for {name!r}")
        for t in self.traces:
            for e in t.events:
                unknown = set(e.attributes) - set(self.schema)
                if unknown:
                    raise DataError(f"case {t.case_id}: attributes {sorted(unknown)} not in schema")

    def __len__(self):
        return len(self.traces)

    @property
    def case_ids(self) -> list[str]:
        return [t.case_id for t in self.traces]

    def with_traces(self, traces: Iterable[Trace]) -> "EventLog":
        return replace(self, traces=tuple(traces))


# ---------------------------------------------------------------------------
# CSV input / output


def _parse_timestamp(text: str, fmt: str | None) -> datetime:
    if fmt:
        return datetime.strptime(text, fmt)
    # fromisoformat on 3.10 rejects a trailing Z
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def _open_text(source) -> tuple[IO[str], str]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8-sig", newline=""), "close"
    if isinstance(source, io.TextIOBase):
        return source, "keep"
    # wrapping a caller's binary stream: detach afterwards so it stays open
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline=""), "detach"


def parse_csv(
    source,
    case_col: str = "case",
    activity_col: str = "activity",
    timestamp_col: str = "timestamp",
    attributes: Mapping[str, str] | None = None,
    timestamp_format: str | None = None,
) -> EventLog:
    """Read a CSV event log.

    ``source`` is a path, a binary stream or a text stream.  ``attributes``
    maps each attribute column to keep onto its kind (``"categorical"`` or
    ``"numeric"``); all other columns are ignored.  Empty cells become absent
    values.  Events inside a case are sorted by timestamp, ties kept in row
    order; cases appear in order of first occurrence.
    """
    attributes = dict(attributes or {})
    for name, kind in attributes.items():
        if kind not in ATTRIBUTE_KINDS:
            raise ConfigError(f"unknown attribute kind {kind!r} for {name!r}")

    stream, cleanup = _open_text(source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty CSV input: header row required") from None
        required = [case_col, activity_col, timestamp_col, *attributes]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"missing mapped columns: {missing}")
        pos = {name: header.index(name) for name in required}

        cases: dict[str, list[tuple[datetime, int, Event]]] = {}
        for row_no, row in enumerate(reader):
            line = reader.line_num
            if not row:
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            case_id = row[pos[case_col]]
            activity = row[pos[activity_col]]
            if not case_id:
                raise RowError(line, "empty case id")
            if not activity:
                raise RowError(line, "empty activity label")
            try:
                ts = _parse_timestamp(row[pos[timestamp_col]], timestamp_format)
            except ValueError:
                raise RowError(line, f"unparseable timestamp {row[pos[timestamp_col]]!r}") from None
            attrs: dict[str, object] = {}
            for name, kind in attributes.items():
                cell = row[pos[name]]
                if cell == "":
                    continue
                if kind == NUMERIC:
                    try:
                        attrs[name] = float(cell)
                    except ValueError:
                        raise RowError(line, f"non-numeric value {cell!r} in {name!r}") from None
                else:
                    attrs[name] = cell
            cases.setdefault(case_id, []).append((ts, row_no, Event(activity, ts, attrs)))
    finally:
        if cleanup == "close":
            stream.close()
        elif cleanup == "detach":
            stream.detach()

    traces = []
    for case_id, rows in cases.items():
        try:
            rows.sort(key=lambda r: (r[0], r[1]))
        except TypeError:
            raise DataError(f"case {case_id}: mixed naive and timezone-aware timestamps") from None
        traces.append(Trace(case_id, tuple(r[2] for r in rows)))
    return EventLog(tuple(traces), attributes)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(
    log: EventLog,
    dest,
    case_col: str = "case",
    activity_col: str = "activity",
    timestamp_col: str = "timestamp",
) -> None:
    """Write ``log`` in the format :func:`parse_csv` reads (ISO-8601 timestamps)."""
    names = list(log.schema)
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            _write_rows(log, fh, names, case_col, activity_col, timestamp_col)
    else:
        _write_rows(log, dest, names, case_col, activity_col, timestamp_col)


def _write_rows(log, fh, names, case_col, activity_col, timestamp_col):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([case_col, activity_col, timestamp_col, *names])
    for trace in log.traces:
        for ev in trace.events:
            writer.writerow(
                [trace.case_id, ev.activity, ev.timestamp.isoformat()]
                + [_format_value(ev.attributes.get(n)) for n in names]
            )


# ---------------------------------------------------------------------------
# Filtering and discretization


def filter_short_traces(log: EventLog, min_len: int = 3) -> EventLog:
    if min_len < 1:
        raise ConfigError("min_len must be positive")
    kept = [t for t in log.traces if len(t) >= min_len]
    removed = len(log) - len(kept)
    if removed:
        logger.warning(
            "removed %d of %d traces shorter than %d events (%.1f%%)",
            removed, len(log), min_len, 100.0 * removed / len(log),
        )
    return log.with_traces(kept)


@dataclass(frozen=True)
class DiscretizationSpec:
    attribute: str
    lo: float
    hi: float
    bin_count: int = 40

    def __post_init__(self):
        if self.bin_count < 1:
            raise ConfigError("bin_count must be >= 1")
        if not self.lo <= self.hi:
            raise ConfigError("discretization needs lo <= hi")

    def bin_of(self, value: float) -> int:
        """Equal-width bin index; values outside [lo, hi] clamp to the edge bins."""
        if self.hi == self.lo:
            return 0
        idx = math.floor(self.bin_count * (value - self.lo) / (self.hi - self.lo))
        return min(max(idx, 0), self.bin_count - 1)

    def label_of(self, value: float) -> str:
        return f"bin_{self.bin_of(value)}"

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "lo": self.lo, "hi": self.hi, "bin_count": self.bin_count}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiscretizationSpec":
        return cls(d["attribute"], float(d["lo"]), float(d["hi"]), int(d["bin_count"]))


def discretize_attribute(
    log: EventLog, attribute: str, bin_count: int = 40
) -> tuple[EventLog, DiscretizationSpec]:
    """Bin a numeric attribute into ``bin_count`` equal-width intervals over its observed range."""
    if log.schema.get(attribute) != NUMERIC:
        raise ConfigError(f"attribute {attribute!r} is unknown or not numeric")
    values = [
        e.attributes[attribute] for t in log.traces for e in t.events if attribute in e.attributes
    ]
    if not values:
        raise ConfigError(f"attribute {attribute!r} has no values to discretize")
    spec = DiscretizationSpec(attribute, float(min(values)), float(max(values)), bin_count)
    return apply_discretization(log, spec), spec


def apply_discretization(log: EventLog, spec: DiscretizationSpec) -> EventLog:
    """Apply a previously fitted binning, e.g. to a test log."""
    if log.schema.get(spec.attribute) != NUMERIC:
        raise ConfigError(f"attribute {spec.attribute!r} is unknown or not numeric")
    traces = []
    for t in log.traces:
        events = []
        for e in t.events:
            if spec.attribute in e.attributes:
                attrs = dict(e.attributes)
                attrs[spec.attribute] = spec.label_of(float(attrs[spec.attribute]))
                e = replace(e, attributes=attrs)
            events.append(e)
        traces.append(Trace(t.case_id, tuple(events)))
    schema = dict(log.schema)
    schema[spec.attribute] = CATEGORICAL
    return EventLog(tuple(traces), schema)


# ---------------------------------------------------------------------------
# Vocabularies and encoding


@dataclass(frozen=True)
class Vocabulary:
    """Value <-> index bijection with two reserved trailing symbols.

    Indices ``0..n-1`` are the observed values in first-appearance order,
    ``n`` is MISSING (absent value) and ``n+1`` is OTHER (unseen value).
    """

    values: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        index = {v: i for i, v in enumerate(self.values)}
        if len(index) != len(self.values):
            raise ConfigError("vocabulary values must be distinct")
        object.__setattr__(self, "_index", index)

    @classmethod
    def build(cls, observed: Iterable) -> "Vocabulary":
        return cls(tuple(dict.fromkeys(v for v in observed if v is not None)))

    @property
    def missing(self) -> int:
        return len(self.values)

    @property
    def other(self) -> int:
        return len(self.values) + 1

    @property
    def size(self) -> int:
        return len(self.values) + 2

    def __len__(self):
        return self.size

    def __contains__(self, value):
        return value in self._index

    def encode(self, value) -> int:
        if value is None:
            return self.missing
        return self._index.get(value, self.other)

    def decode(self, index: int):
        if 0 <= index < len(self.values):
            return self.values[index]
        if index == self.missing:
            return MISSING_LABEL
        if index == self.other:
            return OTHER_LABEL
        raise IndexError(f"index {index} outside vocabulary of size {self.size}")

    def labels(self) -> list:
        return [*self.values, MISSING_LABEL, OTHER_LABEL]


@dataclass(frozen=True)
class Roles:
    background: str | None = None
    symptom: str | None = None

    def __post_init__(self):
        if self.background is not None and self.background == self.symptom:
            raise ConfigError(f"attribute {self.background!r} cannot be both background and symptom")


@dataclass(frozen=True)
class LogVocabulary:
    activity: Vocabulary
    background: Vocabulary | None = None
    symptom: Vocabulary | None = None
    roles: Roles = Roles()

    def to_dict(self) -> dict:
        return {
            "roles": {"background": self.roles.background, "symptom": self.roles.symptom},
            "activity": list(self.activity.values),
            "background": None if self.background is None else list(self.background.values),
            "symptom": None if self.symptom is None else list(self.symptom.values),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LogVocabulary":
        def vocab(x):
            return None if x is None else Vocabulary(tuple(x))

        roles = d.get("roles") or {}
        return cls(
            Vocabulary(tuple(d["activity"])),
            vocab(d.get("background")),
            vocab(d.get("symptom")),
            Roles(roles.get("background"), roles.get("symptom")),
        )


@dataclass(frozen=True, eq=False)
class EncodedTrace:
    case_id: str
    events: np.ndarray
    background: np.ndarray | None = None
    symptom: np.ndarray | None = None

    def __len__(self):
        return len(self.events)

    def prefix(self, t: int) -> "EncodedTrace":
        """The first ``t`` slices."""
        cut = slice(0, t)
        return EncodedTrace(
            self.case_id,
            self.events[cut],
            None if self.background is None else self.background[cut],
            None if self.symptom is None else self.symptom[cut],
        )


@dataclass(frozen=True, eq=False)
class EncodedLog:
    traces: tuple[EncodedTrace, ...]
    vocabulary: LogVocabulary

    def __len__(self):
        return len(self.traces)

    @property
    def case_ids(self) -> list[str]:
        return [t.case_id for t in self.traces]

    def with_traces(self, traces: Iterable[EncodedTrace]) -> "EncodedLog":
        return replace(self, traces=tuple(traces))


def _role_values(log: EventLog, name: str | None):
    if name is None:
        return None
    return [e.attributes.get(name) for t in log.traces for e in t.events]


def encode_log(log: EventLog, roles: Roles, vocabulary: LogVocabulary | None = None) -> EncodedLog:
    """Map activities and role attributes to indices.

    Without ``vocabulary`` the vocabularies are built from ``log`` (training
    side).  With one, unseen values map to OTHER (test side).  Absent values
    always map to MISSING.
    """
    for name in (roles.background, roles.symptom):
        if name is None:
            continue
        kind = log.schema.get(name)
        if kind is None:
            raise ConfigError(f"role attribute {name!r} not in log schema")
        if kind != CATEGORICAL:
            raise ConfigError(f"role attribute {name!r} must be categorical (discretize it first)")

    if vocabulary is None:
        vocabulary = LogVocabulary(
            Vocabulary.build(e.activity for t in log.traces for e in t.events),
            None if roles.background is None else Vocabulary.build(_role_values(log, roles.background)),
            None if roles.symptom is None else Vocabulary.build(_role_values(log, roles.symptom)),
            roles,
        )
    else:
        if roles.background is not None and vocabulary.background is None:
            raise ConfigError("vocabulary has no background variable")
        if roles.symptom is not None and vocabulary.symptom is None:
            raise ConfigError("vocabulary has no symptom variable")
        vocabulary = replace(
            vocabulary,
            background=vocabulary.background if roles.background is not None else None,
            symptom=vocabulary.symptom if roles.symptom is not None else None,
            roles=roles,
        )

    def column(trace: Trace, name: str | None, vocab: Vocabulary | None):
        if name is None:
            return None
        return np.array([vocab.encode(e.attributes.get(name)) for e in trace.events], dtype=np.int64)

    traces = []
    for t in log.traces:
        events = np.array([vocabulary.activity.encode(e.activity) for e in t.events], dtype=np.int64)
        traces.append(
            EncodedTrace(
                t.case_id,
                events,
                column(t, roles.background, vocabulary.background),
                column(t, roles.symptom, vocabulary.symptom),
            )
        )
    return EncodedLog(tuple(traces), vocabulary)


# ---------------------------------------------------------------------------
# Splitting


def split_log(log, train_ratio: float = 0.7, seed: int = 0):
    """Random trace-level partition into ``(train, test)``.

    Works on both :class:`EventLog` and :class:`EncodedLog`.  The train side
    gets ``round(train_ratio * N)`` traces (halves rounded up); both sides
    keep the input order.
    """
    n = len(log.traces)
    if n == 0:
        raise ConfigError("cannot split an empty log")
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError("train_ratio must lie in (0, 1)")
    n_train = int(math.floor(train_ratio * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ConfigError(f"ratio {train_ratio} on {n} traces leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return (
        log.with_traces(log.traces[i] for i in train_idx),
        log.with_traces(log.traces[i] for i in test_idx),
    )
