"""Command-line interface.

Subcommands: parse, dfa, vocab, encode, synth, split, train, eval,
predict. Validation failures (bad input files, schema violations,
unsupported constructs) exit with status 2.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

import numpy as np

from . import dataflow, embedding, harness, model
from .cfg import Cfg, CfgError, dump_cfg, load_cfg
from .parser import ParseError, parse_function


def _read_cfg(path: str) -> Cfg:
    with open(path) as f:
        text = f.read()
    if path.endswith(".json"):
        return load_cfg(text)
    return parse_function(text)


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_parse(args) -> int:
    _write(dump_cfg(_read_cfg(args.file)), args.output)
    return 0


def cmd_dfa(args) -> int:
    cfg = _read_cfg(args.file)
    table, state = dataflow.compute_gen_kill(cfg, deref_defines=args.deref_defines)
    report = {
        "function": cfg.function,
        "definitions": [
            {"id": d.def_id, "node": d.node, "variable": d.variable} for d in table.entries
        ],
    }
    if args.trace is not None:
        snapshots = dataflow.trace(cfg, state, args.trace)
        report["trace"] = [
            {str(v): str(snap[v]) for v in range(len(cfg.nodes))} for snap in snapshots
        ]
    else:
        dataflow.solve(cfg, state)
        report["nodes"] = [
            {"id": v, "in": str(state.inb[v]), "out": str(state.out[v])}
            for v in range(len(cfg.nodes))
        ]
    _write(json.dumps(report, indent=2) + "\n", args.output)
    return 0


def _corpus_cfgs(directory: str) -> list[Cfg]:
    if os.path.exists(os.path.join(directory, "manifest.json")):
        return [e.cfg for e in harness.load_dataset(directory)]
    cfgs = []
    for path in sorted(glob.glob(os.path.join(directory, "*.json"))):
        with open(path) as f:
            cfgs.append(load_cfg(f.read()))
    for path in sorted(glob.glob(os.path.join(directory, "*.c"))):
        with open(path) as f:
            cfgs.append(parse_function(f.read()))
    if not cfgs:
        raise ValueError(f"no CFG documents or sources found in {directory}")
    return cfgs


def cmd_vocab_build(args) -> int:
    vocab = embedding.build_vocabulary(_corpus_cfgs(args.corpus), args.k)
    _write(vocab.to_json(), args.output)
    return 0


def cmd_encode(args) -> int:
    with open(args.vocab) as f:
        vocab = embedding.Vocabulary.from_json(f.read())
    mask = embedding.parse_mask(args.mask)
    rows = embedding.encode(_read_cfg(args.file), vocab, mask)
    text = "\n".join(" ".join(str(int(x)) for x in row) for row in rows) + "\n"
    _write(text, args.output)
    return 0


def cmd_synth(args) -> int:
    examples = harness.synth_generate(
        args.n,
        args.seed,
        vulnerable_fraction=args.vuln_frac,
        branch_depth=args.branch_depth,
        loop_depth=args.loop_depth,
    )
    harness.save_dataset(examples, args.output)
    n_vuln = sum(e.label for e in examples)
    print(f"wrote {len(examples)} examples ({n_vuln} vulnerable) to {args.output}")
    return 0


def cmd_split(args) -> int:
    dataset = harness.load_dataset(args.data)
    fractions = tuple(float(x) for x in args.fractions.split(","))
    if len(fractions) != 3:
        raise ValueError("--fractions needs three comma-separated values")
    if args.folds:
        folds = harness.cross_folds(dataset, args.folds, args.seed)
        doc = [
            {"train": [e.id for e in tr], "test": [e.id for e in te]} for tr, te in folds
        ]
    else:
        train, valid, test = harness.split(dataset, args.regime, fractions, args.seed)
        doc = {
            "train": [e.id for e in train],
            "valid": [e.id for e in valid],
            "test": [e.id for e in test],
        }
    _write(json.dumps(doc, indent=2) + "\n", args.output)
    return 0


def _apply_split(dataset, split_path: str | None, seed: int):
    if split_path:
        with open(split_path) as f:
            doc = json.load(f)
        by_id = {e.id: e for e in dataset}
        return tuple([by_id[i] for i in doc[part]] for part in ("train", "valid", "test"))
    return harness.split(dataset, "mixed", (0.8, 0.1, 0.1), seed)


def cmd_train(args) -> int:
    dataset = harness.load_dataset(args.data)
    train, valid, _ = _apply_split(dataset, args.split, args.seed)
    if not train:
        raise ValueError("empty training split")
    vocab = embedding.build_vocabulary([e.cfg for e in train], args.k)
    train = harness.undersample(train, args.seed)
    mask = embedding.parse_mask(args.mask)
    config = model.ModelConfig(
        hidden=args.hidden,
        steps=args.steps,
        learning_rate=args.lr,
        l2_weight=args.l2,
        batch_size=args.batch_size,
        k=args.k,
        mask=[p for p in embedding.PROPERTIES if mask[p]],
    )
    params, best_epoch, history = model.train_model(
        config,
        [(e.cfg, e.label) for e in train],
        [(e.cfg, e.label) for e in valid],
        vocab,
        seed=args.seed,
        epochs=args.epochs,
        patience=args.patience,
    )
    vocab_path = args.vocab_out or args.output + ".vocab.json"
    with open(vocab_path, "w") as f:
        f.write(vocab.to_json())
    model.save_checkpoint(args.output, params, config, os.path.abspath(vocab_path), best_epoch)
    for h in history:
        print(f"epoch {h.epoch}: loss {h.train_loss:.4f} valid_f1 {h.valid_f1:.4f}")
    print(f"saved checkpoint {args.output} (best epoch {best_epoch})")
    return 0


def cmd_eval(args) -> int:
    ckpt = model.load_checkpoint(args.ckpt)
    dataset = harness.load_dataset(args.data)
    if args.split:
        _, _, dataset = _apply_split(dataset, args.split, 0)
    probs = [model.predict(ckpt, e.cfg) for e in dataset]
    metrics = harness.compute_metrics(probs, [e.label for e in dataset])
    report = metrics.to_dict()
    if metrics.degenerate:
        report["degenerate"] = True
    if args.timing:
        mask = ckpt.config.mask_dict()
        start = time.perf_counter()
        for e in dataset:
            features = embedding.encode(e.cfg, ckpt.vocab, mask)
            model.forward(ckpt.params, features, e.cfg, ckpt.config)
        report["ms_per_example"] = (time.perf_counter() - start) * 1000.0 / len(dataset)
    _write(json.dumps(report, indent=2) + "\n", args.output)
    return 0


def cmd_predict(args) -> int:
    ckpt = model.load_checkpoint(args.ckpt)
    prob = model.predict(ckpt, _read_cfg(args.file))
    verdict = harness.LABELS[model.classify(prob)]
    print(json.dumps({"probability": prob, "classification": verdict}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="defreach")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse mini-C into the CFG interchange format")
    p.add_argument("file")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("dfa", help="reaching-definitions report for one function")
    p.add_argument("file")
    p.add_argument("--trace", type=int, default=None, metavar="N",
                   help="emit per-round OUT snapshots for N synchronous sweeps")
    p.add_argument("--deref-defines", action="store_true",
                   help="treat dereference statements as anonymous definitions")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_dfa)

    p = sub.add_parser("vocab", help="vocabulary operations")
    vsub = p.add_subparsers(dest="vocab_command", required=True)
    b = vsub.add_parser("build")
    b.add_argument("--corpus", required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("-o", "--output")
    b.set_defaults(fn=cmd_vocab_build)

    p = sub.add_parser("encode", help="emit the per-node feature matrix")
    p.add_argument("file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--mask", default=",".join(embedding.PROPERTIES))
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vuln-frac", type=float, default=0.5)
    p.add_argument("--branch-depth", type=int, default=2)
    p.add_argument("--loop-depth", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("split", help="produce train/valid/test id lists")
    p.add_argument("--data", required=True)
    p.add_argument("--regime", choices=("mixed", "cross"), default="mixed")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--mask", default=",".join(embedding.PROPERTIES))
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--l2", type=float, default=1e-2)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--vocab-out")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", help="evaluate the test part of this split file")
    p.add_argument("--timing", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="classify one function")
    p.add_argument("file")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=cmd_predict)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, CfgError, ValueError, harness.GenerationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
