"""Command-line interface.

Subcommands read and write JSON lines. Exit codes: 0 success, 1 runtime
failure, 2 bad input. ``--config FILE`` supplies defaults for any flag;
explicit flags win.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
from fractions import Fraction

from . import codec, dataset
from .errors import MTreeError
from .expr import parse_expression
from .mtree import eval_mtree, from_expression

log = logging.getLogger("mtreecode")


class InputError(Exception):
    pass


def _value_pairs(rec):
    pi = rec.get("pi_value", math.pi)
    out = []
    for t in rec["values"]:
        out.append((t, pi if t == "pi" else float(Fraction(t))))
    return out


def _out(args):
    if args.output in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(args.output, "w", encoding="utf-8")


def _load(args):
    problems, dropped = dataset.read_corpus(args.input, args.format, workers=args.workers)
    for d in dropped:
        log.warning("dropped %s: %s", d["id"], d["reason"])
    if args.strict and dropped:
        raise InputError(f"{len(dropped)} records failed")
    return problems, dropped


def _split(args, problems):
    if getattr(args, "test", None):
        test, dropped = dataset.read_corpus(args.test, args.format, workers=args.workers)
        return problems, test, dropped
    return (*dataset.split(problems, args.test_fraction, args.seed), [])


# --------------------------------------------------------------------------
# subcommands

def cmd_canonicalize(args):
    tree = from_expression(parse_expression(args.expression))
    value = eval_mtree(tree)
    if args.json:
        print(json.dumps({"mtree": tree.serialize(), "value": value}, ensure_ascii=False))
    else:
        print(tree.serialize())
        print(repr(value))
    return 0


def cmd_synth(args):
    from .synthetic import write_corpus
    write_corpus(args.output, args.n, args.seed)
    return 0


def cmd_encode(args):
    problems, dropped = _load(args)
    vocab = codec.CodeVocab.load(args.vocab) if args.vocab else codec.build_vocab(p.codes for p in problems)
    failed = 0
    records = []
    for p in problems:
        try:
            rec = codec.codes_record(p.id, p.value_texts, p.codes, vocab)
        except MTreeError as exc:
            failed += 1
            rec = {"id": p.id, "error": type(exc).__name__, "detail": str(exc)}
        if p.pi_value != math.pi:
            rec["pi_value"] = p.pi_value
        records.append(rec)
    records.extend({"id": d["id"], "error": d["reason"]} for d in dropped)
    with _out(args) as f:
        codec.write_jsonl(records, f)
    if args.save_vocab:
        vocab.save(args.save_vocab)
    return 1 if args.strict and failed else 0


def cmd_decode(args):
    vocab = codec.CodeVocab.load(args.vocab) if args.vocab else None
    failed = 0
    out = []
    for rec in codec.read_jsonl(args.input):
        if "values" not in rec:
            out.append({"id": rec.get("id"), "error": rec.get("error", "SchemaError")})
            failed += 1
            continue
        try:
            values = _value_pairs(rec)
            if rec.get("codes") is not None:
                tree = codec.decode(rec["codes"], values)
            elif vocab is not None:
                tree = codec.decode_vectors(rec["vectors"], vocab, values)
            else:
                raise InputError(f"record {rec.get('id')}: vectors need --vocab")
            out.append({"id": rec["id"], "answer": eval_mtree(tree), "mtree": tree.serialize()})
        except MTreeError as exc:
            failed += 1
            out.append({"id": rec["id"], "error": type(exc).__name__, "detail": str(exc)})
    with _out(args) as f:
        codec.write_jsonl(out, f)
    return 1 if args.strict and failed else 0


def cmd_preprocess(args):
    problems, dropped = _load(args)
    train, test, test_dropped = _split(args, problems)
    sup = dataset.make_supervision(train, test, dropped + test_dropped)
    with _out(args) as f:
        codec.write_jsonl(sup.records(), f)
    if args.vocab:
        sup.vocab.save(args.vocab)
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as f:
            json.dump(sup.stats, f, indent=2, ensure_ascii=False)
    return 0


def cmd_stats(args):
    problems, dropped = _load(args)
    train, test, test_dropped = _split(args, problems)
    stats = dataset.make_supervision(train, test, dropped + test_dropped).stats
    if args.manifest_sizes:
        stats["subsample_manifest"] = dataset.subsample_manifest(
            [p.id for p in train], args.manifest_sizes, args.seed)
    with _out(args) as f:
        json.dump(stats, f, indent=2, ensure_ascii=False)
        f.write("\n")
    return 0


def _train_config(args):
    from .model import TrainConfig
    return TrainConfig(
        embed_dim=args.embed_dim, hidden=args.hidden, attn_dim=args.attn_dim,
        ffn=tuple(args.ffn), lr=args.lr, batch_size=args.batch_size, epochs=args.epochs,
        seed=args.seed, clip_norm=args.clip_norm, optimizer=args.optimizer,
        activation=args.activation, max_words=args.max_words,
        log_timing=not args.no_timing,
    )


def cmd_train(args):
    from .model import train
    problems, dropped = _load(args)
    train_set, dev, _ = _split(args, problems)
    vocab = codec.build_vocab(p.codes for p in train_set)
    dev = [p for p in dev if all(c in vocab for cs in p.codes for c in cs)]
    cfg = _train_config(args)
    log_file = open(args.log, "w", encoding="utf-8") if args.log else None

    def on_epoch(model, rec):
        if log_file:
            log_file.write(json.dumps(rec) + "\n")
            log_file.flush()

    try:
        model, history = train(train_set, vocab, cfg, dev=dev, on_epoch=on_epoch)
    finally:
        if log_file:
            log_file.close()
    model.save(args.output)
    if history:
        print(json.dumps(history[-1]))
    return 0


def cmd_predict(args):
    from .model import Seq2Code, predict_answer
    model = Seq2Code.load(args.checkpoint)
    problems, _ = _load(args)
    correct = 0
    out = []
    for p in problems:
        answer, diag = predict_answer(model, p)
        ok = answer is not None and dataset.answers_match(answer, p.answer)
        correct += ok
        out.append({"id": p.id, "answer": answer, "gold": p.answer, "correct": bool(ok),
                    "codes": diag["codes"], "error": diag["error"]})
    with _out(args) as f:
        codec.write_jsonl(out, f)
    acc = correct / len(problems) if problems else 0.0
    print(json.dumps({"answer_accuracy": acc, "n": len(problems)}), file=sys.stderr)
    return 0


# --------------------------------------------------------------------------
# argument parsing

def _common(p, corpus=True):
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--output", "-o")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="nonzero exit if any record fails")
    if corpus:
        p.add_argument("--input", "-i", required=True)
        p.add_argument("--format", default="synthetic-json", choices=dataset.FORMATS)
        p.add_argument("--workers", type=int, default=0)


def _split_flags(p):
    p.add_argument("--test", help="separate test corpus (same format)")
    p.add_argument("--test-fraction", type=float, default=0.1)


def build_parser():
    parser = argparse.ArgumentParser(prog="mtreecode", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("canonicalize", help="print the canonical M-tree of an expression")
    p.add_argument("expression")
    p.add_argument("--json", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("synth", help="write the synthetic corpus")
    _common(p, corpus=False)
    p.add_argument("--n", type=int, default=5000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", help="corpus -> codes file")
    _common(p)
    p.add_argument("--vocab", help="existing vocabulary file (default: build from input)")
    p.add_argument("--save-vocab")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="codes file -> answers")
    _common(p, corpus=False)
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("preprocess", help="corpus -> supervision, vocabulary, stats")
    _common(p)
    _split_flags(p)
    p.add_argument("--vocab")
    p.add_argument("--stats")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stats", help="code set size, coverage, operand histogram")
    _common(p)
    _split_flags(p)
    p.add_argument("--manifest-sizes", type=int, nargs="*")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the seq2code model")
    _common(p)
    _split_flags(p)
    p.add_argument("--log", help="JSON-lines training log")
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--attn-dim", type=int)
    p.add_argument("--ffn", type=int, nargs=2, default=[2048, 1024])
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--optimizer", choices=("adam", "momentum", "sgd"), default="adam")
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--max-words", type=int, default=2500)
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock seconds from the log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="answer accuracy of a checkpoint on a corpus")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_predict)
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            defaults = {k.replace("-", "_"): v for k, v in json.load(f).items()}
        sp = sub.choices[args.command]
        known = {a.dest for a in sp._actions}
        unknown = set(defaults) - known
        if unknown:
            parser.error(f"unknown keys in {args.config}: {sorted(unknown)}")
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("config %s", json.dumps(resolved, default=str))
    try:
        return args.func(args)
    except (InputError, MTreeError, OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err, ensure_ascii=False), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
