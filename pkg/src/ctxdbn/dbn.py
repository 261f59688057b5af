"""Context-sensitive DBN: structure variants, CPD tables and exact inference.

One hidden chain ``H`` links the slices.  Per slice the model factorizes as

    P(b|h) * P(e|h,b) * P(s|e)

and the next hidden state is drawn from ``P(h'|h,e,b,s)``.  Events, background
and symptom values are observed, so exact forward-backward over ``H`` costs
O(T K^2) per trace.  Axes of roles a structure does not use have size 1.

Two inference paths exist on purpose:

* a batched, fully observed forward-backward over whole logs (EM and scoring);
* a single-trace recursion over predictive priors that also accepts withheld
  context values (``UNOBSERVED``) and sums them out exactly (online queries,
  evidence sensitivity analysis).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, ImpossibleEvidence
from .eventlog import EncodedLog, EncodedTrace, LogVocabulary

FORMAT_VERSION = 1
UNOBSERVED = -1
NORMALIZATION_TOL = 1e-9


class Structure(str, enum.Enum):
    PFA = "pfa"
    BACKGROUND = "background"
    SYMPTOM = "symptom"
    FULL = "full"

    @property
    def has_background(self) -> bool:
        return self in (Structure.BACKGROUND, Structure.FULL)

    @property
    def has_symptom(self) -> bool:
        return self in (Structure.SYMPTOM, Structure.FULL)


def _normalize_rows(counts: np.ndarray) -> np.ndarray:
    """Normalize along the last axis; all-zero rows become uniform."""
    totals = counts.sum(axis=-1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / counts.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        out = counts / totals
    return np.where(totals > 0, out, uniform)


@dataclass(eq=False)
class CpdSet:
    initial_h: np.ndarray  # (K,)
    background_emit: np.ndarray  # (K, nB)
    event_emit: np.ndarray  # (K, nB, nE)
    symptom_emit: np.ndarray  # (nE, nS)
    transition: np.ndarray  # (K, nE, nB, nS, K)

    @property
    def K(self) -> int:
        return self.initial_h.shape[0]

    @property
    def n_events(self) -> int:
        return self.event_emit.shape[2]

    @property
    def n_background(self) -> int:
        return self.background_emit.shape[1]

    @property
    def n_symptom(self) -> int:
        return self.symptom_emit.shape[1]

    def tables(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "initial_h", self.initial_h
        yield "background_emit", self.background_emit
        yield "event_emit", self.event_emit
        yield "symptom_emit", self.symptom_emit
        yield "transition", self.transition

    def max_row_error(self) -> float:
        """Largest deviation of any conditional row sum from 1."""
        return max(float(np.max(np.abs(t.sum(axis=-1) - 1.0))) for _, t in self.tables())

    def validate(self, tol: float = NORMALIZATION_TOL) -> None:
        K, nB, nE, nS = self.K, self.n_background, self.n_events, self.n_symptom
        expected = {
            "initial_h": (K,),
            "background_emit": (K, nB),
            "event_emit": (K, nB, nE),
            "symptom_emit": (nE, nS),
            "transition": (K, nE, nB, nS, K),
        }
        for name, table in self.tables():
            if table.shape != expected[name]:
                raise ConfigError(f"{name} has shape {table.shape}, expected {expected[name]}")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ConfigError(f"{name} has negative or non-finite entries")
        err = self.max_row_error()
        if err > tol:
            raise ConfigError(f"conditional rows deviate from 1 by {err:.3g}")

    def to_dict(self) -> dict:
        return {name: table.tolist() for name, table in self.tables()}

    @classmethod
    def from_dict(cls, d) -> "CpdSet":
        return cls(**{name: np.asarray(d[name], dtype=float) for name in (
            "initial_h", "background_emit", "event_emit", "symptom_emit", "transition")})


def random_cpds(K: int, n_events: int, n_background: int, n_symptom: int, rng) -> CpdSet:
    """Every row drawn as normalized i.i.d. uniform(0, 1) values."""
    def draw(shape):
        return _normalize_rows(rng.random(shape))

    return CpdSet(
        initial_h=draw((K,)),
        background_emit=draw((K, n_background)),
        event_emit=draw((K, n_background, n_events)),
        symptom_emit=draw((n_events, n_symptom)),
        transition=draw((K, n_events, n_background, n_symptom, K)),
    )


@dataclass(eq=False)
class DbnModel:
    structure: Structure
    cpds: CpdSet
    vocabulary: LogVocabulary | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.structure = Structure(self.structure)
        if not self.structure.has_background and self.cpds.n_background != 1:
            raise ConfigError(f"{self.structure.value} structure needs a size-1 background axis")
        if not self.structure.has_symptom and self.cpds.n_symptom != 1:
            raise ConfigError(f"{self.structure.value} structure needs a size-1 symptom axis")
        if self.vocabulary is not None:
            if self.vocabulary.activity.size != self.cpds.n_events:
                raise ConfigError("activity vocabulary does not match event table")
            if self.structure.has_background and (
                self.vocabulary.background is None
                or self.vocabulary.background.size != self.cpds.n_background
            ):
                raise ConfigError("background vocabulary does not match background table")
            if self.structure.has_symptom and (
                self.vocabulary.symptom is None
                or self.vocabulary.symptom.size != self.cpds.n_symptom
            ):
                raise ConfigError("symptom vocabulary does not match symptom table")

    @property
    def K(self) -> int:
        return self.cpds.K

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "structure": self.structure.value,
            "hidden_states": self.K,
            "vocabulary": None if self.vocabulary is None else self.vocabulary.to_dict(),
            "cpds": self.cpds.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d) -> "DbnModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model format_version {d.get('format_version')!r}")
        vocab = d.get("vocabulary")
        model = cls(
            Structure(d["structure"]),
            CpdSet.from_dict(d["cpds"]),
            None if vocab is None else LogVocabulary.from_dict(vocab),
            dict(d.get("metadata") or {}),
        )
        if model.K != d["hidden_states"]:
            raise ConfigError("hidden_states does not match the CPD tables")
        model.cpds.validate()
        return model


def model_to_json(model: DbnModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, indent=1)


def model_from_json(text: str) -> DbnModel:
    return DbnModel.from_dict(json.loads(text))


def init_model(structure: Structure | str, K: int, vocabulary: LogVocabulary, seed: int) -> DbnModel:
    structure = Structure(structure)
    if K < 1:
        raise ConfigError("K must be >= 1")
    if structure.has_background and vocabulary.background is None:
        raise ConfigError(f"{structure.value} structure requires a background vocabulary")
    if structure.has_symptom and vocabulary.symptom is None:
        raise ConfigError(f"{structure.value} structure requires a symptom vocabulary")
    n_b = vocabulary.background.size if structure.has_background else 1
    n_s = vocabulary.symptom.size if structure.has_symptom else 1
    cpds = random_cpds(K, vocabulary.activity.size, n_b, n_s, np.random.default_rng(seed))
    return DbnModel(structure, cpds, vocabulary, {"init_seed": seed})


# ---------------------------------------------------------------------------
# Observation handling


def _columns(model: DbnModel, trace: EncodedTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(events, background, symptom) index arrays as the model consumes them."""
    n = len(trace)
    e = np.asarray(trace.events, dtype=np.int64)
    if model.structure.has_background:
        if trace.background is None:
            raise ConfigError("trace has no background values but the model expects them")
        b = np.asarray(trace.background, dtype=np.int64)
    else:
        b = np.zeros(n, dtype=np.int64)
    if model.structure.has_symptom:
        if trace.symptom is None:
            raise ConfigError("trace has no symptom values but the model expects them")
        s = np.asarray(trace.symptom, dtype=np.int64)
    else:
        s = np.zeros(n, dtype=np.int64)
    c = model.cpds
    for name, arr, size, allow_hidden in (
        ("event", e, c.n_events, False),
        ("background", b, c.n_background, True),
        ("symptom", s, c.n_symptom, True),
    ):
        low = UNOBSERVED if allow_hidden else 0
        if arr.size and (arr.min() < low or arr.max() >= size):
            raise ConfigError(f"{name} index outside [0, {size})")
    return e, b, s


# ---------------------------------------------------------------------------
# Single-trace recursion (supports withheld context)


@dataclass
class ForwardState:
    """Belief after the last slice of a prefix.

    ``alpha`` is P(H_t | evidence 1..t), ``next_prior`` is P(H_{t+1} | evidence
    1..t) and ``log_likelihood`` is log P(evidence 1..t).
    """

    alpha: np.ndarray
    next_prior: np.ndarray
    log_likelihood: float
    length: int


def _slice_step(c: CpdSet, prior: np.ndarray, e: int, b: int, s: int):
    bsel = np.arange(c.n_background) if b == UNOBSERVED else np.array([b])
    ssel = np.arange(c.n_symptom) if s == UNOBSERVED else np.array([s])
    # joint over (h, b) of the slice evidence
    joint = prior[:, None] * c.background_emit[:, bsel] * c.event_emit[:, bsel, e]
    sym = c.symptom_emit[e, ssel]
    mass = joint.sum() * sym.sum()
    if not mass > 0:
        return 0.0, None, None
    alpha = joint.sum(axis=1) * sym.sum() / mass
    trans = c.transition[:, e][:, bsel][:, :, ssel]  # (K, nb, ns, K)
    nxt = np.einsum("hb,s,hbsk->k", joint, sym, trans) / mass
    return float(mass), alpha, nxt


def forward_pass(model: DbnModel, trace: EncodedTrace) -> ForwardState:
    """Filter a prefix.  Background/symptom entries equal to ``UNOBSERVED`` are summed out."""
    if len(trace) < 1:
        raise ConfigError("prefix must contain at least one slice")
    e, b, s = _columns(model, trace)
    c = model.cpds
    prior = c.initial_h
    ll = 0.0
    alpha = prior
    for t in range(len(e)):
        mass, alpha, prior = _slice_step(c, prior, int(e[t]), int(b[t]), int(s[t]))
        if alpha is None:
            raise ImpossibleEvidence(t + 1, trace.case_id)
        ll += math.log(mass)
    return ForwardState(alpha, prior, ll, len(e))


@dataclass
class PredictionDistribution:
    target: str  # "next-event" | "symptom"
    probs: np.ndarray

    @property
    def argmax(self) -> int:
        # np.argmax returns the first maximum: ties go to the lowest index
        return int(np.argmax(self.probs))

    def labelled(self, labels: Sequence) -> dict:
        return {str(lab): float(p) for lab, p in zip(labels, self.probs)}


def _event_distribution(c: CpdSet, prior: np.ndarray, next_background: int) -> np.ndarray:
    if next_background == UNOBSERVED:
        probs = np.einsum("k,kb,kbe->e", prior, c.background_emit, c.event_emit)
    else:
        w = prior * c.background_emit[:, next_background]
        if not w.sum() > 0:
            return None
        probs = (w / w.sum()) @ c.event_emit[:, next_background, :]
    return probs / probs.sum()


def predict_next_event(
    model: DbnModel, prefix: EncodedTrace, next_background: int | None = None
) -> PredictionDistribution:
    """Distribution of the event following ``prefix`` (length >= 2).

    For structures with a background node the slice being predicted may carry
    an observed background index; ``None`` encodes it as MISSING and
    ``UNOBSERVED`` sums it out.
    """
    if len(prefix) < 2:
        raise ConfigError("prediction needs a prefix of at least two events")
    state = forward_pass(model, prefix)
    if not model.structure.has_background:
        nb = 0
    elif next_background is None:
        if model.vocabulary is None or model.vocabulary.background is None:
            raise ConfigError("cannot encode a missing background value without a vocabulary")
        nb = model.vocabulary.background.missing
    else:
        nb = int(next_background)
        if not (nb == UNOBSERVED or 0 <= nb < model.cpds.n_background):
            raise ConfigError("next_background index outside vocabulary")
    probs = _event_distribution(model.cpds, state.next_prior, nb)
    if probs is None:
        raise ImpossibleEvidence(len(prefix) + 1, prefix.case_id)
    return PredictionDistribution("next-event", probs)


def predict_symptom(model: DbnModel, prefix: EncodedTrace, marginal: bool = False) -> PredictionDistribution:
    """Distribution of the symptom value of the last slice of ``prefix``.

    By default the slice's event is taken as observed, which reduces to the
    ``P(s | e)`` row.  With ``marginal=True`` the event is predicted from the
    preceding slices and summed out.
    """
    if not model.structure.has_symptom:
        raise ConfigError(f"{model.structure.value} structure has no symptom node")
    c = model.cpds
    e_t = int(prefix.events[-1])
    if not marginal:
        if not 0 <= e_t < c.n_events:
            raise ConfigError("event index outside vocabulary")
        return PredictionDistribution("symptom", c.symptom_emit[e_t].copy())
    head = prefix.prefix(len(prefix) - 1)
    nb = int(prefix.background[-1]) if model.structure.has_background else None
    ev = predict_next_event(model, head, nb)
    probs = ev.probs @ c.symptom_emit
    return PredictionDistribution("symptom", probs / probs.sum())


# ---------------------------------------------------------------------------
# Batched, fully observed forward-backward


@dataclass
class _Batch:
    events: np.ndarray  # (N, T)
    background: np.ndarray
    symptom: np.ndarray
    lengths: np.ndarray  # (N,)
    mask: np.ndarray  # (N, T) valid slices

    @property
    def T(self) -> int:
        return self.events.shape[1]


def _make_batch(model: DbnModel, traces: Sequence[EncodedTrace]) -> _Batch:
    lengths = np.array([len(t) for t in traces], dtype=np.int64)
    if len(traces) == 0 or lengths.min() < 1:
        raise ConfigError("every trace needs at least one slice")
    T = int(lengths.max())
    N = len(traces)
    E = np.zeros((N, T), dtype=np.int64)
    B = np.zeros((N, T), dtype=np.int64)
    S = np.zeros((N, T), dtype=np.int64)
    for n, tr in enumerate(traces):
        e, b, s = _columns(model, tr)
        if (b == UNOBSERVED).any() or (s == UNOBSERVED).any():
            raise ConfigError("batched inference requires fully observed context")
        L = len(e)
        E[n, :L], B[n, :L], S[n, :L] = e, b, s
    mask = np.arange(T)[None, :] < lengths[:, None]
    return _Batch(E, B, S, lengths, mask)


def _emission_lik(c: CpdSet, bt: _Batch) -> np.ndarray:
    lik = c.background_emit[:, bt.background] * c.event_emit[:, bt.background, bt.events]
    lik = np.moveaxis(lik, 0, -1) * c.symptom_emit[bt.events, bt.symptom][..., None]
    lik[~bt.mask] = 1.0
    return lik


def _trans_at(c: CpdSet, bt: _Batch, t: int) -> np.ndarray:
    """Transition matrices (N, K, K) leaving slice ``t`` (0-based)."""
    m = c.transition[:, bt.events[:, t], bt.background[:, t], bt.symptom[:, t], :]
    return m.transpose(1, 0, 2)


@dataclass
class _ForwardResult:
    alpha: np.ndarray  # (N, T, K)
    scale: np.ndarray  # (N, T) per-slice evidence mass (1 on padding)
    impossible_at: np.ndarray  # (N,) 1-based slice, 0 when possible
    lik: np.ndarray

    def log_likelihoods(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            ll = np.log(self.scale).sum(axis=1)
        ll[self.impossible_at > 0] = -np.inf
        return ll


def _forward_batch(c: CpdSet, bt: _Batch) -> _ForwardResult:
    N, T, K = bt.events.shape[0], bt.T, c.K
    lik = _emission_lik(c, bt)
    alpha = np.empty((N, T, K))
    scale = np.ones((N, T))
    impossible = np.zeros(N, dtype=np.int64)

    pred = np.broadcast_to(c.initial_h, (N, K))
    for t in range(T):
        if t > 0:
            nxt = np.einsum("nh,nhk->nk", alpha[:, t - 1], _trans_at(c, bt, t - 1))
            pred = np.where(bt.mask[:, t, None], nxt, alpha[:, t - 1])
        a = pred * lik[:, t]
        mass = a.sum(axis=1)
        dead = (mass <= 0) | ~np.isfinite(mass)
        newly = dead & (impossible == 0) & bt.mask[:, t]
        impossible[newly] = t + 1
        mass = np.where(dead, 1.0, mass)
        alpha[:, t] = a / mass[:, None]
        alpha[dead, t] = np.nan
        scale[:, t] = np.where(bt.mask[:, t], mass, 1.0)
    return _ForwardResult(alpha, scale, impossible, lik)


def _backward_batch(c: CpdSet, bt: _Batch, fw: _ForwardResult):
    """Scaled backward pass; returns (gamma, xi) with xi[:, t] for the t -> t+1 transition."""
    N, T, K = bt.events.shape[0], bt.T, c.K
    beta = np.ones((N, T, K))
    xi = np.zeros((N, max(T - 1, 0), K, K))
    for t in range(T - 2, -1, -1):
        m = _trans_at(c, bt, t)
        w = fw.lik[:, t + 1] * beta[:, t + 1] / fw.scale[:, t + 1, None]
        valid = bt.mask[:, t + 1]
        beta[:, t] = np.where(valid[:, None], np.einsum("nhk,nk->nh", m, w), beta[:, t + 1])
        x = fw.alpha[:, t, :, None] * m * w[:, None, :]
        xi[:, t] = np.where(valid[:, None, None], x, 0.0)
    gamma = fw.alpha * beta
    return gamma, xi


def trace_posteriors(model: DbnModel, trace: EncodedTrace):
    """Smoothed posteriors of a fully observed trace.

    Returns ``(gamma, xi, log_likelihood)`` where ``gamma`` is (T, K) and
    ``xi`` is (T-1, K, K) with ``xi[t, h, h']`` = P(H_t = h, H_{t+1} = h' | trace).
    """
    bt = _make_batch(model, [trace])
    fw = _forward_batch(model.cpds, bt)
    if fw.impossible_at[0]:
        raise ImpossibleEvidence(int(fw.impossible_at[0]), trace.case_id)
    gamma, xi = _backward_batch(model.cpds, bt, fw)
    return gamma[0], xi[0], float(fw.log_likelihoods()[0])


def trace_log_likelihoods(model: DbnModel, log: EncodedLog | Sequence[EncodedTrace]) -> np.ndarray:
    """log P(trace | model) per trace; ``-inf`` marks impossible traces."""
    traces = log.traces if isinstance(log, EncodedLog) else log
    bt = _make_batch(model, traces)
    return _forward_batch(model.cpds, bt).log_likelihoods()


def log_likelihood(model: DbnModel, log: EncodedLog | Sequence[EncodedTrace]) -> float:
    """Sum of per-trace log-likelihoods (``-inf`` if any trace is impossible).

    Use :func:`trace_log_likelihoods` to count the impossible traces.
    """
    if len(log) == 0:
        raise ConfigError("log is empty")
    return float(trace_log_likelihoods(model, log).sum())


def next_event_table(model: DbnModel, traces: Sequence[EncodedTrace]) -> tuple[np.ndarray, np.ndarray]:
    """Next-event distributions at every slice p >= 2 of every trace, batched.

    Returns ``(probs, mask)`` with ``probs[n, p-2]`` the distribution of the
    event at 1-based slice ``p`` given slices ``1..p-1`` and, for background
    structures, the observed background of slice ``p``.  Rows after an
    impossible prefix are NaN.
    """
    c = model.cpds
    bt = _make_batch(model, traces)
    fw = _forward_batch(c, bt)
    N, T = bt.events.shape
    probs = np.full((N, max(T - 1, 0), c.n_events), np.nan)
    for t in range(T - 1):
        rho = np.einsum("nh,nhk->nk", fw.alpha[:, t], _trans_at(c, bt, t))
        b_next = bt.background[:, t + 1]
        w = rho * c.background_emit[:, b_next].T
        p = np.einsum("nk,kne->ne", w, c.event_emit[:, b_next, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            probs[:, t] = p / p.sum(axis=1, keepdims=True)
    return probs, bt.mask[:, 1:]
