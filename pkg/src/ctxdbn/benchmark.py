"""Repeated-split benchmark of the context structures against PFA and n-gram baselines."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .baselines import DEFAULT_NS, ngram_sweep
from .dbn import Structure
from .errors import ConfigError, DataError, ImpossibleEvidence
from .eventlog import EventLog, Roles, encode_log, split_log
from .evaluation import NEXT_EVENT, SYMPTOM, evaluate_model
from .learning import DEFAULT_K_GRID, INIT_MODES, EmConfig, select_hidden_states

logger = logging.getLogger(__name__)

ROLES = ("background", "symptom")
SPLIT_NOTE = (
    "repeated Monte-Carlo train/test splits; split seed = base_seed + repetition; "
    "means and population standard deviations over successful repetitions"
)


@dataclass(frozen=True)
class RoleConfig:
    attribute: str
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"role must be one of {ROLES}, got {self.role!r}")

    @classmethod
    def parse(cls, text: str) -> "RoleConfig":
        """``attr:background`` or ``attr:symptom``."""
        name, sep, role = text.rpartition(":")
        if not sep or not name:
            raise ConfigError(f"role configuration must look like attr:role, got {text!r}")
        return cls(name, role)

    @property
    def label(self) -> str:
        return f"{self.attribute}:{self.role}"


@dataclass
class EntryResult:
    """Scores of one model on one repetition."""

    key: str
    model: str
    attribute: str | None
    role: str | None
    target: str
    accuracy: float
    macro_f1: float
    hidden_states: int | None = None


@dataclass
class Aggregate:
    key: str
    model: str
    attribute: str | None
    role: str | None
    target: str
    accuracy: list[float]
    macro_f1: list[float]
    hidden_states: list[int | None]

    @staticmethod
    def _stats(values: list[float]) -> dict:
        arr = np.asarray(values, dtype=float)
        return {"mean": float(arr.mean()), "std": float(arr.std()), "raw": [float(v) for v in values]}

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "model": self.model,
            "attribute": self.attribute,
            "role": self.role,
            "target": self.target,
            "repetitions": len(self.accuracy),
            "accuracy": self._stats(self.accuracy),
            "macro_f1": self._stats(self.macro_f1),
            "hidden_states": self.hidden_states,
        }


@dataclass
class BenchmarkReport:
    dataset: str
    entries: list[Aggregate]
    failures: list[dict]
    config: dict
    best_ngram_accuracy: int | None = None
    best_ngram_f1: int | None = None
    notes: list[str] = field(default_factory=list)

    def entry(self, key: str) -> Aggregate:
        for e in self.entries:
            if e.key == key:
                return e
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config": self.config,
            "entries": [e.to_dict() for e in self.entries],
            "best_ngram_n": {"accuracy": self.best_ngram_accuracy, "macro_f1": self.best_ngram_f1},
            "failures": self.failures,
            "notes": self.notes,
        }

    def table_csv(self) -> str:
        """One row per model (context attribute and role, PFA, n-gram) with mean and std of both metrics."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["dataset", "model", "attribute", "role", "target", "repetitions",
             "accuracy_mean", "accuracy_std", "f1_mean", "f1_std"]
        )
        for e in self.entries:
            d = e.to_dict()
            w.writerow(
                [self.dataset, e.model, e.attribute or "", e.role or "", e.target, d["repetitions"],
                 repr(d["accuracy"]["mean"]), repr(d["accuracy"]["std"]),
                 repr(d["macro_f1"]["mean"]), repr(d["macro_f1"]["std"])]
            )
        return buf.getvalue()

    def ngram_csv(self) -> str:
        """Mean n-gram accuracy and macro-F1 with one column per n."""
        rows = [e for e in self.entries if e.model == "ngram"]
        ns = [int(e.key.split("-")[1]) for e in rows]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "dataset"] + [f"n={n}" for n in ns])
        for metric in ("accuracy", "macro_f1"):
            w.writerow([metric, self.dataset] + [repr(e.to_dict()[metric]["mean"]) for e in rows])
        return buf.getvalue()


@dataclass(frozen=True)
class _Job:
    log: EventLog
    rep: int
    split_seed: int
    split_ratio: float
    role_configs: tuple[RoleConfig, ...]
    k_grid: tuple[int, ...]
    config: EmConfig
    inits: tuple[str, ...]
    ngrams: tuple[int, ...]
    include_pfa: bool
    symptom_target: bool


def _run_repetition(job: _Job) -> tuple[int, list[EntryResult] | None, str | None]:
    try:
        return job.rep, _repetition_entries(job), None
    except (ConfigError, DataError, ImpossibleEvidence) as exc:
        logger.warning("repetition %d failed: %s", job.rep, exc)
        return job.rep, None, f"{type(exc).__name__}: {exc}"


def _repetition_entries(job: _Job) -> list[EntryResult]:
    train, test = split_log(job.log, job.split_ratio, job.split_seed)
    out: list[EntryResult] = []

    def fit_and_score(structure: Structure, roles: Roles, key: str, rc: RoleConfig | None):
        etr = encode_log(train, roles)
        ete = encode_log(test, roles, etr.vocabulary)
        model, _, _ = select_hidden_states(structure, etr, job.k_grid, job.config, job.inits)
        attr = rc.attribute if rc else None
        role = rc.role if rc else None
        rep = evaluate_model(model, ete, NEXT_EVENT)
        out.append(EntryResult(key, structure.value, attr, role, NEXT_EVENT, rep.accuracy, rep.macro_f1, model.K))
        if job.symptom_target and structure.has_symptom:
            rep = evaluate_model(model, ete, SYMPTOM)
            out.append(
                EntryResult(f"{key}/symptom", structure.value, attr, role, SYMPTOM, rep.accuracy, rep.macro_f1, model.K)
            )

    for rc in job.role_configs:
        roles = Roles(background=rc.attribute) if rc.role == "background" else Roles(symptom=rc.attribute)
        fit_and_score(Structure(rc.role), roles, rc.label, rc)
    if job.include_pfa:
        fit_and_score(Structure.PFA, Roles(), "pfa", None)
    if job.ngrams:
        etr = encode_log(train, Roles())
        ete = encode_log(test, Roles(), etr.vocabulary)
        for row in ngram_sweep(etr, ete, job.ngrams).rows:
            out.append(EntryResult(f"ngram-{row.n}", "ngram", None, None, NEXT_EVENT, row.accuracy, row.macro_f1))
    return out


def run_benchmark(
    log: EventLog,
    role_configs: Sequence[RoleConfig],
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    config: EmConfig = EmConfig(),
    repetitions: int = 10,
    split_ratio: float = 0.7,
    base_seed: int = 0,
    ngrams: Iterable[int] = DEFAULT_NS,
    include_pfa: bool = True,
    symptom_target: bool = False,
    inits: Sequence[str] = INIT_MODES,
    threads: int = 1,
    dataset: str = "log",
) -> BenchmarkReport:
    """Train and score every configured model on ``repetitions`` fresh train/test splits.

    A repetition in which any training or scoring step fails contributes no
    values and is listed under ``failures``.  The result does not depend on
    ``threads``.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if not 0 < split_ratio < 1:
        raise ConfigError("split ratio must lie in (0, 1)")
    if len(log.traces) == 0:
        raise ConfigError("benchmark log is empty")
    role_configs = tuple(role_configs)
    for rc in role_configs:
        if rc.attribute not in log.schema:
            raise ConfigError(f"attribute {rc.attribute!r} not in log schema")
    ngrams = tuple(sorted(set(int(n) for n in ngrams)))
    jobs = [
        _Job(log, r, base_seed + r, split_ratio, role_configs, tuple(k_grid), config, tuple(inits),
             ngrams, include_pfa, symptom_target)
        for r in range(repetitions)
    ]
    if threads > 1 and repetitions > 1:
        with ProcessPoolExecutor(max_workers=min(threads, repetitions)) as pool:
            results = list(pool.map(_run_repetition, jobs))
    else:
        results = [_run_repetition(j) for j in jobs]

    aggregates: dict[str, Aggregate] = {}
    failures = []
    for rep, entries, error in results:
        if entries is None:
            failures.append({"repetition": rep, "split_seed": base_seed + rep, "error": error})
            continue
        for e in entries:
            agg = aggregates.setdefault(
                e.key, Aggregate(e.key, e.model, e.attribute, e.role, e.target, [], [], [])
            )
            agg.accuracy.append(e.accuracy)
            agg.macro_f1.append(e.macro_f1)
            agg.hidden_states.append(e.hidden_states)

    entries = list(aggregates.values())
    grams = [e for e in entries if e.model == "ngram"]
    best_acc = best_f1 = None
    if grams:
        n_of = lambda e: int(e.key.split("-")[1])
        best_acc = n_of(max(grams, key=lambda e: (np.mean(e.accuracy), -n_of(e))))
        best_f1 = n_of(max(grams, key=lambda e: (np.mean(e.macro_f1), -n_of(e))))

    echo = {
        "dataset": dataset,
        "traces": len(log.traces),
        "roles": [rc.label for rc in role_configs],
        "k_grid": sorted(set(int(k) for k in k_grid)),
        "inits": list(inits),
        "em": config.to_dict(),
        "repetitions": repetitions,
        "split_ratio": split_ratio,
        "base_seed": base_seed,
        "ngrams": list(ngrams),
        "include_pfa": include_pfa,
        "symptom_target": symptom_target,
    }
    return BenchmarkReport(dataset, entries, failures, echo, best_acc, best_f1, [SPLIT_NOTE])
