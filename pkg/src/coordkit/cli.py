"""Command-line workflow: labelgen, train, predict, evaluate, split.

Logs go to stderr, data to stdout or files. Exit codes: 0 ok, 1 data
error, 2 usage/config error, 3 internal error. Every command is
reproducible byte-for-byte given identical inputs, config, and seed
(evaluation reports contain wall-clock timing unless --omit-timing).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from coordkit import __version__
from coordkit.config import apply_overrides, load_config
from coordkit.errors import (
    ConfigError,
    CoordkitError,
    DataError,
    TreeParseError,
    UsageError,
)
from coordkit.evaluation import evaluate_runs, score_annotations
from coordkit.jsonio import canonical_dumps, read_jsonl
from coordkit.models import (
    load_detector,
    load_identifier,
    save_detector,
    save_identifier,
    train_detector,
    train_identifier,
)
from coordkit.pipeline import gold_annotation, recognize, recognize_timed
from coordkit.schema import CoordinatorSpan, make_tokens
from coordkit.splitter import split_corpus
from coordkit.treebank import (
    TrainingInstance,
    apply_exceptions,
    augment,
    generate_instances,
    instances_from_jsonl,
    instances_to_conll,
    instances_to_jsonl,
    iter_tree_blocks,
    parse_bracketed,
)

log = logging.getLogger("coordkit")

MODEL_DIR_ENV = "COORDKIT_MODEL_DIR"
IDENTIFIER_FILE = "identifier.ckpt"
DETECTOR_FILE = "detector.ckpt"


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _model_dir(args) -> str:
    models = args.models or os.environ.get(MODEL_DIR_ENV)
    if not models:
        raise UsageError(f"--models not given and {MODEL_DIR_ENV} unset")
    return _require_file(models, "model directory")


def _load_models(args):
    models = _model_dir(args)
    identifier = load_identifier(os.path.join(models, IDENTIFIER_FILE))
    detector = load_detector(os.path.join(models, DETECTOR_FILE))
    return identifier, detector


def _open_out(path: str):
    if path == "-":
        # Never close the process stdout.
        from contextlib import nullcontext

        return nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8")


# ---------------------------------------------------------------------------
# labelgen
# ---------------------------------------------------------------------------

def cmd_labelgen(args) -> int:
    _require_file(args.input, "treebank file")
    text = Path(args.input).read_text(encoding="utf-8")
    instances: list[TrainingInstance] = []
    for start_line, block in iter_tree_blocks(text):
        try:
            tree = parse_bracketed(block)
        except TreeParseError as exc:
            raise DataError(
                f"{args.input}:{start_line}: parse error at offset {exc.offset}: {exc}"
            ) from exc
        instances.extend(generate_instances(tree))

    if args.exceptions:
        _require_file(args.exceptions, "exceptions file")
        instances, applied = apply_exceptions(instances, args.exceptions)
        log.info("applied %d exception entries", applied)

    if args.augment:
        augmented = []
        for inst in instances:
            swapped, changed = augment(inst)
            if changed:
                augmented.append(swapped)
        log.info("augmentation added %d swapped instances", len(augmented))
        instances.extend(augmented)

    kinds = Counter(inst.target.kind.value for inst in instances)
    if args.format == "jsonl":
        payload = instances_to_jsonl(instances) + ("\n" if instances else "")
    else:
        payload = instances_to_conll(instances)
    with _open_out(args.output) as fh:
        fh.write(payload)
    log.info(
        "wrote %d instances (%s)",
        len(instances),
        ", ".join(f"{k}={v}" for k, v in sorted(kinds.items())) or "none",
    )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_instances(path: str) -> list[TrainingInstance]:
    _require_file(path, "instance file")
    try:
        return instances_from_jsonl(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise DataError(f"cannot parse instances from {path}: {exc}") from exc


def cmd_train(args) -> int:
    data = _load_instances(args.data)
    config = apply_overrides(load_config(args.config), args.seed, args.epochs, args.lr)
    if args.task == "identifier":
        model = train_identifier(data, config.train, config.encoder)
        save_identifier(args.out, model)
    else:
        model = train_detector(data, config.train, config.encoder, config.flag_mode)
        save_detector(args.out, model)
    log.info("trained %s on %d instances, final loss %.6f", args.task, len(data), model.final_loss)
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def _sentences_from_jsonl(path: str, whitespace: bool):
    _require_file(path, "input file")
    sentences = []
    for lineno, obj in read_jsonl(path):
        if "tokens" in obj:
            texts = [str(t) for t in obj["tokens"]]
        elif "text" in obj and whitespace:
            texts = str(obj["text"]).split()
        elif "text" in obj:
            raise DataError(
                f"{path}:{lineno}: raw text input requires --whitespace-tokenize"
            )
        else:
            raise DataError(f"{path}:{lineno}: object has neither 'tokens' nor 'text'")
        if not texts:
            raise DataError(f"{path}:{lineno}: empty sentence")
        coordinators = None
        if "coordinators" in obj:
            coordinators = [CoordinatorSpan.from_obj(c) for c in obj["coordinators"]]
        sentences.append((obj.get("id"), make_tokens(texts), coordinators))
    return sentences


def cmd_predict(args) -> int:
    identifier, detector = _load_models(args)
    sentences = _sentences_from_jsonl(args.input, args.whitespace_tokenize)
    if args.gold_coordinators and any(coords is None for _, _, coords in sentences):
        raise DataError("--gold-coordinators requires a 'coordinators' field on every line")
    rows = []
    for sid, tokens, coords in sentences:
        ann = recognize(
            identifier, detector, tokens, coords if args.gold_coordinators else None
        )
        obj = ann.to_obj()
        if sid is not None:
            obj["id"] = sid
        rows.append(obj)
    with _open_out(args.output) as fh:
        for obj in rows:
            fh.write(canonical_dumps(obj))
            fh.write("\n")
    log.info("annotated %d sentences", len(rows))
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _gold_annotations(path: str, input_format: str):
    from coordkit.pipeline import AnnotatedSentence

    _require_file(path, "input file")
    golds = []
    if input_format == "treebank":
        for start_line, block in iter_tree_blocks(Path(path).read_text(encoding="utf-8")):
            try:
                tree = parse_bracketed(block)
            except TreeParseError as exc:
                raise DataError(f"{path}:{start_line}: {exc}") from exc
            golds.append(gold_annotation(tree))
    else:
        for _, obj in read_jsonl(path):
            golds.append(AnnotatedSentence.from_obj(obj))
    return golds


def cmd_evaluate(args) -> int:
    golds = _gold_annotations(args.input, args.input_format)
    golds = [g for g in golds if g.tokens]

    if args.runs > 1:
        if not args.train_data:
            raise UsageError("--runs > 1 requires --train-data for per-seed retraining")
        data = _load_instances(args.train_data)
        base = load_config(args.config)

        def factory(seed: int):
            config = apply_overrides(base, seed=seed)
            identifier = train_identifier(data, config.train, config.encoder)
            detector = train_detector(data, config.train, config.encoder, config.flag_mode)

            def recognize_fn(gold):
                coords = gold.coordinators if args.gold_coordinators else None
                return recognize(identifier, detector, gold.tokens, coords)

            return recognize_fn

        seeds = [base.train.seed + i for i in range(args.runs)]
        report = evaluate_runs(factory, golds, seeds=seeds, subset=args.subset)
    else:
        identifier, detector = _load_models(args)
        sentences = [g.tokens for g in golds]
        gold_coords = [g.coordinators if args.gold_coordinators else None for g in golds]
        timed = recognize_timed(identifier, detector, sentences, gold_coords, args.threads)
        report = score_annotations(golds, timed.annotations, subset=args.subset)
        report.inference_seconds = timed.inference_seconds

    obj = report.to_obj(include_timing=not args.omit_timing)
    if args.report:
        with _open_out(args.report) as fh:
            fh.write(canonical_dumps(obj))
            fh.write("\n")
    if args.table or not args.report:
        print(report.format_table())
    return 0


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------

def cmd_split(args) -> int:
    _require_file(args.input, "input file")
    if args.models or os.environ.get(MODEL_DIR_ENV):
        identifier, detector = _load_models(args)
        sentences = _sentences_from_jsonl(args.input, args.whitespace_tokenize)
        lines = []
        for sid, tokens, coords in sentences:
            ann = recognize(
                identifier, detector, tokens, coords if args.gold_coordinators else None
            )
            obj = ann.to_obj()
            if sid is not None:
                obj["id"] = sid
            lines.append(canonical_dumps(obj))
    else:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()

    warnings = 0
    written = 0
    with _open_out(args.output) as fh:
        for kind, _, payload in split_corpus(lines):
            if kind == "warning":
                warnings += 1
                log.warning("%s", payload[0])
                continue
            for obj in payload:
                fh.write(canonical_dumps(obj))
                fh.write("\n")
                written += 1
    log.info("wrote %d sub-sentences (%d malformed lines skipped)", written, warnings)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordkit",
        description="Coordination recognition and conjunctive sentence splitting.",
    )
    parser.add_argument("--version", action="version", version=f"coordkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("labelgen", help="convert a treebank into labeled instances")
    p.add_argument("input", help="bracketed trees, blank-line separated")
    p.add_argument("output", help="output path or - for stdout")
    p.add_argument("--format", choices=("jsonl", "conll"), default="jsonl")
    p.add_argument("--exceptions", help="JSONL exception list applied after conversion")
    p.add_argument("--augment", action="store_true", help="append first/last conjunct swaps")
    p.set_defaults(func=cmd_labelgen)

    p = sub.add_parser("train", help="train the identifier or the detector")
    p.add_argument("task", choices=("identifier", "detector"))
    p.add_argument("--data", required=True, help="instances JSONL from labelgen")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--lr", type=float, help="override config learning rate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="annotate sentences with coordinations")
    p.add_argument("--input", required=True, help="JSONL with tokens or text")
    p.add_argument("--output", required=True, help="output path or -")
    p.add_argument("--models", help=f"model directory (default ${MODEL_DIR_ENV})")
    p.add_argument("--gold-coordinators", action="store_true",
                   help="bypass the identifier; use the coordinators field")
    p.add_argument("--whitespace-tokenize", action="store_true",
                   help="allow raw 'text' input split on whitespace")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against treebank gold")
    p.add_argument("--input", required=True, help="gold treebank or annotated JSONL")
    p.add_argument("--input-format", choices=("treebank", "jsonl"), default="treebank")
    p.add_argument("--models", help=f"model directory (default ${MODEL_DIR_ENV})")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--table", action="store_true", help="also print the text table")
    p.add_argument("--subset", choices=("all", "simple", "complex"), default="all")
    p.add_argument("--gold-coordinators", action="store_true")
    p.add_argument("--runs", type=int, default=1, help="retrain/evaluate with n seeds")
    p.add_argument("--train-data", help="instances JSONL (required for --runs > 1)")
    p.add_argument("--config", help="run config JSON (used for --runs > 1)")
    p.add_argument("--omit-timing", action="store_true",
                   help="drop wall-clock fields for byte-reproducible reports")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("split", help="split conjunctive sentences into simple ones")
    p.add_argument("--input", required=True,
                   help="annotated JSONL, or raw sentences when --models is given")
    p.add_argument("--output", required=True, help="output path or -")
    p.add_argument("--models", help="annotate before splitting using these models")
    p.add_argument("--gold-coordinators", action="store_true")
    p.add_argument("--whitespace-tokenize", action="store_true")
    p.set_defaults(func=cmd_split)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help/--version.
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        log.error("%s", exc)
        return 2
    except DataError as exc:
        log.error("%s", exc)
        return 1
    except CoordkitError as exc:
        log.error("internal error: %s", exc)
        return 3
    except Exception as exc:  # unexpected bug
        log.exception("unexpected error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
