"""Command-line interface: ``ctxdbn {synth,train,predict,evaluate,esa,benchmark}``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
data errors (unreadable input, bad rows, impossible evidence).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import RoleConfig, run_benchmark
from .dbn import UNOBSERVED, Structure, model_from_json, model_to_json, predict_next_event, predict_symptom
from .errors import ConfigError, DataError, ImpossibleEvidence
from .esa import QUARTILE_METHOD, esa_report
from .eventlog import (
    CATEGORICAL,
    MISSING_LABEL,
    NUMERIC,
    DiscretizationSpec,
    EncodedTrace,
    Roles,
    apply_discretization,
    discretize_attribute,
    encode_log,
    filter_short_traces,
    parse_csv,
    write_csv,
)
from .evaluation import NEXT_EVENT, TARGETS, evaluate_model
from .learning import DEFAULT_K_GRID, INIT_MODES, EmConfig, select_hidden_states
from .synthetic import KINDS, SyntheticSpec, generate

logger = logging.getLogger("ctxdbn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for data errors here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# small helpers


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _range_list(text: str) -> list[int]:
    """``3..7`` or ``3,4,5``."""
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise ConfigError(f"bad range {text!r}") from None
    return _int_list(text)


def _attr_specs(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        name, sep, kind = item.partition(":")
        kind = kind if sep else CATEGORICAL
        if kind not in (CATEGORICAL, NUMERIC):
            raise ConfigError(f"attribute kind must be categorical or numeric, got {kind!r}")
        out[name] = kind
    return out


def _config_echo(args) -> dict:
    skip = {"func", "verbose", "threads"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _em_config(args) -> EmConfig:
    return EmConfig(
        max_iters=args.max_iters,
        rel_tol=args.tol,
        smoothing_epsilon=args.epsilon,
        restarts=args.restarts,
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# log loading


def _read_log(args, attributes: dict[str, str]):
    try:
        log = parse_csv(
            args.log,
            case_col=args.case_col,
            activity_col=args.activity_col,
            timestamp_col=args.timestamp_col,
            attributes=attributes,
            timestamp_format=args.timestamp_format,
        )
    except OSError as exc:
        raise DataError(f"cannot read {args.log}: {exc}") from None
    return filter_short_traces(log, args.min_len)


def _training_attributes(args, role_attrs) -> dict[str, str]:
    attrs = _attr_specs(args.attr)
    for name in args.discretize or []:
        attrs[name] = NUMERIC
    for name in role_attrs:
        attrs.setdefault(name, CATEGORICAL)
    return attrs


def _load_training_log(args, role_attrs):
    log = _read_log(args, _training_attributes(args, role_attrs))
    specs = []
    for name in args.discretize or []:
        log, spec = discretize_attribute(log, name, args.bins)
        specs.append(spec)
    return log, specs


def _load_model(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    try:
        return model_from_json(text)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed model file {path}: {exc}") from None


def _load_test_log(args, model):
    """Parse a log with the attribute kinds and binning stored in the model."""
    roles = model.vocabulary.roles
    specs = [DiscretizationSpec.from_dict(d) for d in model.metadata.get("discretization", [])]
    binned = {s.attribute for s in specs}
    attrs = {}
    for name in (roles.background, roles.symptom):
        if name is not None:
            attrs[name] = NUMERIC if name in binned else CATEGORICAL
    log = _read_log(args, attrs)
    for spec in specs:
        if spec.attribute in attrs:
            log = apply_discretization(log, spec)
    return encode_log(log, roles, model.vocabulary)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    log = generate(SyntheticSpec(args.kind, args.traces, args.seed))
    buf = io.StringIO()
    write_csv(log, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    structure = Structure(args.structure)
    roles = Roles(
        background=args.background if structure.has_background else None,
        symptom=args.symptom if structure.has_symptom else None,
    )
    if structure.has_background and args.background is None:
        raise ConfigError(f"--background is required for the {structure.value} structure")
    if structure.has_symptom and args.symptom is None:
        raise ConfigError(f"--symptom is required for the {structure.value} structure")
    role_attrs = [a for a in (roles.background, roles.symptom) if a is not None]
    log, specs = _load_training_log(args, role_attrs)
    if len(log.traces) == 0:
        raise DataError("no traces left after length filtering")
    train = encode_log(log, roles)
    model, report, _ = select_hidden_states(
        structure, train, _int_list(args.hidden_states), _em_config(args), args.inits.split(",")
    )
    model.metadata["fit_report"] = report.to_dict()
    model.metadata["discretization"] = [s.to_dict() for s in specs]
    model.metadata["run_config"] = _config_echo(args)
    _emit(model_to_json(model) + "\n", args.out)
    logger.info("trained %s model with K=%d", structure.value, model.K)
    return EXIT_OK


def _encode_labels(vocab, labels: list[str]) -> list[int]:
    out = []
    for lab in labels:
        if lab == "":
            out.append(UNOBSERVED)
        elif lab == MISSING_LABEL:
            out.append(vocab.missing)
        else:
            out.append(vocab.encode(lab))
    return out


def _split_labels(text: str | None, n: int, flag: str) -> list[str]:
    if text is None:
        return [""] * n
    parts = text.split(",")
    if len(parts) != n:
        raise ConfigError(f"{flag} needs {n} comma-separated values, one per prefix event")
    return parts


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    v = model.vocabulary
    if v is None:
        raise ConfigError("model file carries no vocabulary")
    acts = args.prefix.split(",")
    events = [v.activity.encode(a) for a in acts]
    background = symptom = None
    if model.structure.has_background:
        labels = _split_labels(args.prefix_background, len(acts), "--prefix-background")
        background = np.array(_encode_labels(v.background, labels), dtype=np.int64)
    if model.structure.has_symptom:
        labels = _split_labels(args.prefix_symptom, len(acts), "--prefix-symptom")
        symptom = np.array(_encode_labels(v.symptom, labels), dtype=np.int64)
    prefix = EncodedTrace("query", np.array(events, dtype=np.int64), background, symptom)

    if args.target == NEXT_EVENT:
        nb = None
        if args.next_background is not None:
            if not model.structure.has_background:
                raise ConfigError("--next-background given but the model has no background node")
            nb = _encode_labels(v.background, [args.next_background])[0]
        dist = predict_next_event(model, prefix, nb)
        labels = v.activity.labels()
    else:
        dist = predict_symptom(model, prefix, marginal=args.symptom_marginal)
        labels = v.symptom.labels()

    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "probability"])
        for lab, p in zip(labels, dist.probs):
            w.writerow([lab, repr(float(p))])
        text = buf.getvalue()
    else:
        text = _dumps(
            {
                "target": dist.target,
                "argmax": str(labels[dist.argmax]),
                "probabilities": dist.labelled(labels),
            }
        )
    _emit(text, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    test = _load_test_log(args, model)
    report = evaluate_model(model, test, args.target, symptom_marginal=args.symptom_marginal)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "precision", "recall", "f1", "support"])
        for c in report.per_class:
            w.writerow([c.label, repr(c.precision), repr(c.recall), repr(c.f1), c.support])
        w.writerow(["<accuracy>", "", "", repr(report.accuracy), report.total])
        w.writerow(["<macro_f1>", "", "", repr(report.macro_f1), report.total])
        text = buf.getvalue()
    else:
        text = _dumps({"report": report.to_dict(), "config": _config_echo(args)})
    _emit(text, args.out)
    return EXIT_OK


def cmd_esa(args) -> int:
    model = _load_model(args.model)
    test = _load_test_log(args, model)
    report = esa_report(model, test)
    summary = {"esa": report.to_dict(), "config": _config_echo(args)}
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(f"# normalized likelihood per prediction point; quartiles: {QUARTILE_METHOD} interpolation\n")
        csv.writer(buf, lineterminator="\n").writerows(report.csv_rows())
        _emit(buf.getvalue(), args.out)
        if args.summary:
            atomic_write(args.summary, _dumps(summary))
    else:
        summary["points"] = [
            {"case_id": p.case_id, "position": p.position, "nl": p.nl if p.finite else "inf"}
            for p in report.points
        ]
        _emit(_dumps(summary), args.out)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    roles = [RoleConfig.parse(x) for x in args.roles.split(",")] if args.roles else []
    role_attrs = list(dict.fromkeys(rc.attribute for rc in roles))
    log, specs = _load_training_log(args, role_attrs)
    if len(log.traces) == 0:
        raise DataError("no traces left after length filtering")
    dataset = args.dataset or Path(args.log).stem
    report = run_benchmark(
        log,
        roles,
        k_grid=_int_list(args.hidden_states),
        config=_em_config(args),
        repetitions=args.repetitions,
        split_ratio=args.split,
        base_seed=args.seed,
        ngrams=_range_list(args.ngrams) if args.ngrams else [],
        include_pfa=not args.no_pfa,
        symptom_target=args.symptom_target,
        inits=args.inits.split(","),
        threads=args.threads,
        dataset=dataset,
    )
    if args.format == "csv":
        _emit(report.table_csv(), args.out)
    else:
        payload = report.to_dict()
        payload["run_config"] = _config_echo(args)
        payload["discretization"] = [s.to_dict() for s in specs]
        _emit(_dumps(payload), args.out)
    if args.ngram_out:
        atomic_write(args.ngram_out, report.ngram_csv())
    if report.failures:
        logger.warning("%d repetition(s) failed", len(report.failures))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_log_options(p, training: bool):
    p.add_argument("--log", required=True, help="CSV event log")
    p.add_argument("--case-col", default="case")
    p.add_argument("--activity-col", default="activity")
    p.add_argument("--timestamp-col", default="timestamp")
    p.add_argument("--timestamp-format", default=None, help="strptime format; ISO-8601 if omitted")
    p.add_argument("--min-len", type=int, default=3, help="drop traces with fewer events")
    if training:
        p.add_argument(
            "--attr", action="append", metavar="NAME[:numeric]",
            help="attribute column to load (repeatable); role attributes are loaded automatically",
        )
        p.add_argument("--discretize", action="append", metavar="NAME", help="numeric attribute to bin (repeatable)")
        p.add_argument("--bins", type=int, default=40)


def _add_em_options(p):
    p.add_argument("--hidden-states", default=",".join(map(str, DEFAULT_K_GRID)), help="K grid, e.g. 2,4,6")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6, help="relative log-likelihood change to stop EM")
    p.add_argument("--epsilon", type=float, default=1e-6, help="smoothing added to every count cell")
    p.add_argument("--inits", default=",".join(INIT_MODES), help="initialization strategies to select among")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctxdbn", description="Context-sensitive DBN next-event prediction for event logs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic validation log")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--traces", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output CSV (stdout if omitted)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model and write it as JSON")
    _add_log_options(p, training=True)
    p.add_argument("--structure", choices=[s.value for s in Structure], default="pfa")
    p.add_argument("--background", default=None, help="background attribute")
    p.add_argument("--symptom", default=None, help="symptom attribute")
    _add_em_options(p)
    p.add_argument("--out", default=None, help="model JSON (stdout if omitted)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="distribution of the next event or the current symptom")
    p.add_argument("--model", required=True)
    p.add_argument("--prefix", required=True, help="comma-separated activities")
    p.add_argument("--prefix-background", default=None, help="background value per prefix event; empty = unobserved")
    p.add_argument("--prefix-symptom", default=None, help="symptom value per prefix event; empty = unobserved")
    p.add_argument("--next-background", default=None, help="background value of the predicted slice; MISSING if omitted")
    p.add_argument("--target", choices=TARGETS, default=NEXT_EVENT)
    p.add_argument("--symptom-marginal", action="store_true", help="do not condition the symptom on the current event")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model on a log")
    p.add_argument("--model", required=True)
    _add_log_options(p, training=False)
    p.add_argument("--target", choices=TARGETS, default=NEXT_EVENT)
    p.add_argument("--symptom-marginal", action="store_true")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("esa", help="normalized likelihood of the true next event with and without context")
    p.add_argument("--model", required=True)
    _add_log_options(p, training=False)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--out", default=None, help="raw values (csv) or full report (json)")
    p.add_argument("--summary", default=None, help="JSON summary path when --format csv")
    p.set_defaults(func=cmd_esa)

    p = sub.add_parser("benchmark", help="repeated train/test splits over structures and baselines")
    _add_log_options(p, training=True)
    p.add_argument("--roles", default="", help="attr:background,attr:symptom,...")
    _add_em_options(p)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--split", type=float, default=0.7, help="training share of each split")
    p.add_argument("--ngrams", default="3..7", help="n values, e.g. 3..7 or 3,5; empty to skip")
    p.add_argument("--no-pfa", action="store_true")
    p.add_argument("--symptom-target", action="store_true", help="also score symptom prediction")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--dataset", default=None, help="name used in reports (log file stem by default)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.add_argument("--ngram-out", default=None, help="CSV of the n-gram sweep")
    p.set_defaults(func=cmd_benchmark)
    return parser


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DataError, ImpossibleEvidence) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
