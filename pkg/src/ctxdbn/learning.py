"""Parameter fitting by expectation-maximization, restarts and choice of K."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dbn import (
    CpdSet,
    DbnModel,
    Structure,
    _backward_batch,
    _forward_batch,
    _make_batch,
    _normalize_rows,
    init_model,
)
from .errors import ConfigError, ImpossibleEvidence
from .eventlog import EncodedLog, split_log

logger = logging.getLogger(__name__)

DEFAULT_K_GRID = (2, 4, 6, 8, 10)
INIT_MODES = ("random", "lifted")


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 200
    rel_tol: float = 1e-6
    smoothing_epsilon: float = 1e-6
    restarts: int = 5
    seed: int = 0
    # starting point of every restart, see train_with_restarts
    init: str = "random"

    def __post_init__(self):
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be > 0")
        if self.smoothing_epsilon < 0:
            raise ConfigError("smoothing_epsilon must be >= 0")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "smoothing_epsilon": self.smoothing_epsilon,
            "restarts": self.restarts,
            "seed": self.seed,
            "init": self.init,
        }


@dataclass
class FitReport:
    history: list[float]
    iterations: int
    converged: bool
    seed: int
    restart_log_likelihoods: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    init: str = "random"

    @property
    def final_log_likelihood(self) -> float:
        return self.history[-1]

    def to_dict(self) -> dict:
        return {
            "history": self.history,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "restart_log_likelihoods": self.restart_log_likelihoods,
            "notes": self.notes,
            "init": self.init,
        }


@dataclass
class ExpectedCounts:
    initial_h: np.ndarray
    background_emit: np.ndarray
    event_emit: np.ndarray
    symptom_emit: np.ndarray
    transition: np.ndarray


def expected_counts(model: DbnModel, log: EncodedLog) -> tuple[ExpectedCounts, float]:
    """E-step: expected sufficient statistics and the log-likelihood of ``log``.

    Counts are accumulated trace by trace in log order so repeated runs give
    bit-identical results.
    """
    c = model.cpds
    K, nE, nB, nS = c.K, c.n_events, c.n_background, c.n_symptom
    bt = _make_batch(model, log.traces)
    fw = _forward_batch(c, bt)
    if fw.impossible_at.any():
        n = int(np.flatnonzero(fw.impossible_at)[0])
        raise ImpossibleEvidence(int(fw.impossible_at[n]), log.traces[n].case_id)
    gamma, xi = _backward_batch(c, bt, fw)

    m = bt.mask
    g = gamma[m]
    E, B, S = bt.events[m], bt.background[m], bt.symptom[m]

    event = np.zeros((nB * nE, K))
    np.add.at(event, B * nE + E, g)
    background = np.zeros((nB, K))
    np.add.at(background, B, g)
    symptom = np.zeros((nE, nS))
    # symptom node is fully observed given the event: plain co-occurrence counts
    np.add.at(symptom, (E, S), 1.0)

    tm = m[:, 1:]
    Et, Bt, St = bt.events[:, :-1][tm], bt.background[:, :-1][tm], bt.symptom[:, :-1][tm]
    trans = np.zeros((nE * nB * nS, K, K))
    np.add.at(trans, (Et * nB + Bt) * nS + St, xi[tm])

    counts = ExpectedCounts(
        initial_h=gamma[:, 0].sum(axis=0),
        background_emit=background.T.copy(),
        event_emit=event.reshape(nB, nE, K).transpose(2, 0, 1).copy(),
        symptom_emit=symptom,
        transition=trans.reshape(nE, nB, nS, K, K).transpose(3, 0, 1, 2, 4).copy(),
    )
    return counts, float(fw.log_likelihoods().sum())


def maximize(counts: ExpectedCounts, epsilon: float) -> CpdSet:
    """M-step: add ``epsilon`` to every cell and normalize each conditional row."""
    return CpdSet(
        initial_h=_normalize_rows(counts.initial_h + epsilon),
        background_emit=_normalize_rows(counts.background_emit + epsilon),
        event_emit=_normalize_rows(counts.event_emit + epsilon),
        symptom_emit=_normalize_rows(counts.symptom_emit + epsilon),
        transition=_normalize_rows(counts.transition + epsilon),
    )


def _check_compatible(model: DbnModel, train: EncodedLog) -> None:
    if len(train) == 0:
        raise ConfigError("training log is empty")
    v = train.vocabulary
    c = model.cpds
    if v.activity.size != c.n_events:
        raise ConfigError("model and log activity vocabularies differ")
    if model.structure.has_background and (v.background is None or v.background.size != c.n_background):
        raise ConfigError("model and log background vocabularies differ")
    if model.structure.has_symptom and (v.symptom is None or v.symptom.size != c.n_symptom):
        raise ConfigError("model and log symptom vocabularies differ")


def em_fit(
    initial: DbnModel,
    train: EncodedLog,
    config: EmConfig = EmConfig(),
    on_iteration: Callable[[int, DbnModel, float], None] | None = None,
) -> tuple[DbnModel, FitReport]:
    """Run EM from ``initial`` until the relative log-likelihood change drops below ``rel_tol``.

    ``history[i]`` is the training log-likelihood of the parameters after
    ``i`` M-steps; the last entry belongs to the returned model.
    ``on_iteration(i, model, ll)`` is called after every M-step with the
    log-likelihood of the parameters that produced it.
    """
    _check_compatible(initial, train)
    eps = config.smoothing_epsilon
    model = initial
    history: list[float] = []
    converged = False
    iterations = 0
    while True:
        counts, ll = expected_counts(model, train)
        if history and abs(ll - history[-1]) <= config.rel_tol * abs(ll):
            history.append(ll)
            converged = True
            break
        history.append(ll)
        if iterations == config.max_iters:
            break
        model = DbnModel(model.structure, maximize(counts, eps), model.vocabulary, dict(model.metadata))
        iterations += 1
        if on_iteration is not None:
            on_iteration(iterations, model, ll)

    notes = []
    if eps > 0:
        notes.append(
            f"expected counts smoothed with epsilon={eps!r} per cell so that held-out "
            "configurations keep non-zero probability"
        )
    seed = int(initial.metadata.get("init_seed", 0))
    model.metadata.update(
        {
            "seed": seed,
            "em_iterations": iterations,
            "final_log_likelihood": history[-1],
            "smoothing_epsilon": eps,
        }
    )
    report = FitReport(history, iterations, converged, seed, [history[-1]], notes)
    return model, report


def lift_model(pfa: DbnModel, structure: Structure | str, vocabulary) -> DbnModel:
    """Embed a fitted context-free model into a context structure.

    Hidden-state dynamics and event emissions are copied to every background
    and symptom value; the context emissions start uniform.
    """
    structure = Structure(structure)
    base = init_model(structure, pfa.K, vocabulary, int(pfa.metadata.get("seed", 0)))
    c, p = base.cpds, pfa.cpds
    c.initial_h[:] = p.initial_h
    c.background_emit[:] = 1.0 / c.n_background
    c.event_emit[:] = p.event_emit
    c.symptom_emit[:] = 1.0 / c.n_symptom
    c.transition[:] = p.transition
    base.metadata = {"init_seed": int(pfa.metadata.get("seed", 0)), "lifted_from": "pfa"}
    return base


def _fit_from_seed(structure: Structure, K: int, train: EncodedLog, config: EmConfig, seed: int):
    if config.init == "lifted" and structure != Structure.PFA:
        pfa, _ = em_fit(init_model(Structure.PFA, K, train.vocabulary, seed), train, config)
        model, report = em_fit(lift_model(pfa, structure, train.vocabulary), train, config)
        report.init = "lifted"
    else:
        model, report = em_fit(init_model(structure, K, train.vocabulary, seed), train, config)
        report.init = "random"
    return model, report


def train_with_restarts(
    structure: Structure | str, K: int, train: EncodedLog, config: EmConfig = EmConfig()
) -> tuple[DbnModel, FitReport]:
    """Best of ``config.restarts`` EM runs seeded ``seed, seed+1, ...`` by final training LL.

    With ``config.init == "lifted"`` each restart first fits the context-free
    structure from its seed and lifts it (:func:`lift_model`) before running
    EM on the requested structure.
    """
    if len(train) == 0:
        raise ConfigError("training log is empty")
    structure = Structure(structure)
    best = None
    finals = []
    for r in range(config.restarts):
        model, report = _fit_from_seed(structure, K, train, config, config.seed + r)
        finals.append(report.final_log_likelihood)
        # strict comparison keeps the earliest seed on ties
        if best is None or report.final_log_likelihood > best[1].final_log_likelihood:
            best = (model, report)
    model, report = best
    report.restart_log_likelihoods = finals
    model.metadata["init"] = report.init
    return model, report


@dataclass
class KSelectionRow:
    K: int
    init: str
    validation_accuracy: float
    train_log_likelihood: float

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "init": self.init,
            "validation_accuracy": self.validation_accuracy,
            "train_log_likelihood": self.train_log_likelihood,
        }


def select_hidden_states(
    structure: Structure | str,
    train: EncodedLog,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    config: EmConfig = EmConfig(),
    inits: Sequence[str] = INIT_MODES,
    validation_share: float = 0.2,
) -> tuple[DbnModel, FitReport, list[KSelectionRow]]:
    """Pick (K, init) by next-event accuracy on an internal validation split, then refit on all of ``train``.

    Within each configuration the restart with the best training likelihood
    is scored.  Ties go to the smaller K, then to the earlier entry of
    ``inits``.  A grid with a single configuration skips validation.
    """
    from .evaluation import evaluate_model

    structure = Structure(structure)
    grid = sorted(set(int(k) for k in k_grid))
    if not grid:
        raise ConfigError("k_grid is empty")
    if any(k < 1 for k in grid):
        raise ConfigError("hidden state counts must be >= 1")
    inits = list(dict.fromkeys(inits))
    if not inits or any(i not in INIT_MODES for i in inits):
        raise ConfigError(f"inits must be a non-empty subset of {INIT_MODES}")
    if structure == Structure.PFA:
        # lifting is the identity on the context-free structure
        inits = inits[:1]
    configs = [(k, init) for k in grid for init in inits]

    table: list[KSelectionRow] = []
    if len(configs) == 1:
        best = configs[0]
    else:
        inner_train, inner_val = split_log(train, 1.0 - validation_share, config.seed)
        best, best_acc = None, -1.0
        for k, init in configs:
            model, report = train_with_restarts(structure, k, inner_train, replace(config, init=init))
            acc = evaluate_model(model, inner_val).accuracy
            table.append(KSelectionRow(k, init, acc, report.final_log_likelihood))
            logger.info("K=%d init=%s validation accuracy %.4f", k, init, acc)
            if acc > best_acc:
                best, best_acc = (k, init), acc
    k, init = best
    model, report = train_with_restarts(structure, k, train, replace(config, init=init))
    model.metadata["selected_K"] = k
    model.metadata["k_selection"] = [row.to_dict() for row in table]
    return model, report, table
