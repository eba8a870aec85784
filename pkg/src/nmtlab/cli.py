"""Command-line interface: `nmtlab <command> ...`."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import harness, lexsim, metrics, stats
from .corpus import WordOrder, load_parallel, load_registry, load_tagged
from .nnet import (
    ModelConfig, OptimizerHyper, encode_corpus, load_checkpoint,
    save_checkpoint, train, translate,
)
from .subword import MergeTable, Vocab, apply_bpe, build_vocab, learn_bpe


def _print_json(obj) -> None:
    print(json.dumps(harness.round_floats(obj), sort_keys=True, indent=2))


def _read_tokens(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def _read_numbers(path) -> list[float]:
    with open(path, encoding="utf-8") as fh:
        return [float(line) for line in fh.read().split()]


# -- subcommand handlers ---------------------------------------------------------


def _cmd_lexsim(args) -> int:
    corpus = load_parallel(args.src, args.tgt, "src", "tgt")
    mode = "mean" if args.mode == "mean" else "length_weighted"
    sample = (args.sample, args.seed) if args.sample else None
    res = lexsim.corpus_distance(corpus, mode=mode, sample=sample)
    _print_json({
        "raw_total": res.raw_total,
        "normalized": res.normalized,
        "n_pairs": res.n_pairs,
    })
    return 0


def _cmd_bpe_learn(args) -> int:
    sentences = []
    for path in args.input:
        sentences.extend(_read_tokens(path))
    merges = learn_bpe(sentences, args.merges)
    merges.save(args.out)
    print(f"learned {len(merges)} merges -> {args.out}")
    return 0


def _cmd_bpe_apply(args) -> int:
    merges = MergeTable.load(args.codes)
    with open(args.out, "w", encoding="utf-8", newline="\n") as out:
        for words in _read_tokens(args.input):
            out.write(" ".join(apply_bpe(merges, words)) + "\n")
    return 0


def _cmd_vocab(args) -> int:
    sentences = []
    for path in args.input:
        sentences.extend(_read_tokens(path))
    if args.codes:
        merges = MergeTable.load(args.codes)
        sentences = [apply_bpe(merges, s) for s in sentences]
    vocab = build_vocab(sentences, min_freq=args.min_freq)
    vocab.save(args.out)
    print(f"vocabulary of {len(vocab)} tokens -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    corpus = load_parallel(args.train_src, args.train_tgt, "src", "tgt")
    if args.tags:
        tagged = load_tagged(args.tags)
        dropped = set(corpus.dropped_lines)
        kept = [t for i, t in enumerate(tagged, 1) if i not in dropped]
        if len(kept) != len(corpus.pairs) and len(tagged) == len(corpus.pairs):
            kept = tagged
        corpus = corpus.with_source_tags(kept)
    merges = MergeTable.load(args.codes)
    vocab = Vocab.load(args.vocab)
    data = encode_corpus(corpus, merges, vocab)
    config = ModelConfig(
        arch=args.arch,
        vocab_size=len(vocab),
        d_model=args.d_model,
        n_layers=args.layers,
        n_heads=args.heads,
        dropout=args.dropout,
        use_pos=args.pos,
        max_len=args.max_len,
    )
    schedule = args.schedule or (
        "inverse_sqrt_warmup" if args.arch == "transformer" else "constant"
    )
    hyper = OptimizerHyper(eta=args.eta, schedule=schedule, warmup_steps=args.warmup)
    ckpt, curve = train(
        data, config, hyper, steps=args.steps, seed=args.seed,
        batch_size=args.batch_size, token_budget=args.token_budget,
        log_every=args.log_every,
    )
    save_checkpoint(ckpt, args.out)
    for step, loss in curve:
        print(f"step {step}: loss {loss:.4f}")
    print(f"checkpoint -> {args.out}")
    return 0


def _cmd_translate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    sentences = _read_tokens(args.input)
    tag_seqs = None
    if args.tags:
        tag_seqs = [tags for _, tags in load_tagged(args.tags)]
        if len(tag_seqs) != len(sentences):
            raise SystemExit(
                f"{len(tag_seqs)} tagged sentences for {len(sentences)} inputs"
            )
    out = open(args.out, "w", encoding="utf-8", newline="\n") if args.out else sys.stdout
    try:
        for i, words in enumerate(sentences):
            tags = tag_seqs[i] if tag_seqs else None
            hyp = translate(
                ckpt, words, tags=tags, beam_size=args.beam, alpha=args.alpha
            )
            out.write(" ".join(hyp) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def _cmd_bleu(args) -> int:
    hyps = _read_tokens(args.hyp)
    refs = _read_tokens(args.ref)
    res = metrics.corpus_bleu(hyps, refs)
    doc = dataclasses.asdict(res)
    doc["score_x100"] = res.score_x100
    _print_json(doc)
    return 0


def _cmd_stats(args) -> int:
    if args.stat == "mww":
        res = stats.mww_one_sided(
            _read_numbers(args.x), _read_numbers(args.y),
            "x_less" if args.alt == "less" else "x_greater",
        )
    elif args.stat == "pearson":
        res = stats.pearson(_read_numbers(args.x), _read_numbers(args.y))
    elif args.stat == "ttest":
        res = stats.one_sample_t(_read_numbers(args.data), args.mu0)
    else:
        res = stats.ols_fit(_read_numbers(args.x), _read_numbers(args.y))
    _print_json(dataclasses.asdict(res))
    return 0


def load_experiment_config(path) -> harness.ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    languages = []
    for row in doc.get("languages", []):
        wo = None
        if row.get("word_order"):
            orders = row["word_order"]
            wo = WordOrder(orders[0], orders[1] if len(orders) > 1 else None)
        languages.append(harness.LanguageSpec(
            code=row["code"],
            train_src=row["train_src"], train_tgt=row["train_tgt"],
            test_src=row["test_src"], test_tgt=row["test_tgt"],
            train_tags=row.get("train_tags"), test_tags=row.get("test_tags"),
            word_order=wo,
        ))
    models = tuple(
        ModelConfig(vocab_size=m.pop("vocab_size", 0), **m)
        for m in [dict(m) for m in doc.get("models", [])]
    )
    optimizer = OptimizerHyper(**doc.get("optimizer", {}))
    return harness.ExperimentConfig(
        languages=tuple(languages),
        models=models,
        optimizer=optimizer,
        steps=doc.get("steps", 200),
        seed=doc.get("seed", 0),
        out_dir=doc.get("out_dir"),
        bpe_merges=doc.get("bpe_merges", 500),
        min_freq=doc.get("min_freq", 1),
    )


def _cmd_report(args) -> int:
    registry = load_registry(args.registry_file) if args.registry_file else None
    if args.registry:
        doc = harness.run_experiment(registry_mode=True, registry=registry)
    else:
        if not args.config:
            raise SystemExit("--config is required unless --registry is given")
        config = load_experiment_config(args.config)
        if args.out_dir:
            config = dataclasses.replace(config, out_dir=args.out_dir)
        doc = harness.run_experiment(config, registry=registry)
    if args.out:
        harness.emit_report(doc, "json", args.out)
    if args.csv:
        harness.emit_report(doc, "csv", args.csv)
    if args.svg:
        arches = doc["arch_order"]
        if len(args.svg) != len(arches):
            raise SystemExit(
                f"{len(arches)} architectures in the report need {len(arches)} "
                f"--svg paths, got {len(args.svg)}"
            )
        for arch, path in zip(arches, args.svg):
            harness.emit_figure(doc, arch, path, x_axis="levenshtein")
            group_path = _with_suffix(path, ".groups.svg")
            harness.emit_figure(doc, arch, group_path, x_axis="group")
    if not args.out and not args.csv and not args.svg:
        print(harness.report_to_json(doc), end="")
    return 0 if not doc["failures"] else 1


def _with_suffix(path: str, suffix: str) -> str:
    base = path[:-4] if path.endswith(".svg") else path
    return base + suffix


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nmtlab",
        description="Desk-scale NMT workbench: lexical similarity, BPE, toy "
                    "seq2seq training, BLEU, and exact rank statistics.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("lexsim", help="corpus-level normalized edit distance")
    q.add_argument("--src", required=True)
    q.add_argument("--tgt", required=True)
    q.add_argument("--mode", choices=["mean", "weighted"], default="mean")
    q.add_argument("--sample", type=int, default=None)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_lexsim)

    bpe = sub.add_parser("bpe", help="learn or apply subword merges")
    bpe_sub = bpe.add_subparsers(dest="bpe_command", required=True)
    q = bpe_sub.add_parser("learn")
    q.add_argument("--input", nargs="+", required=True)
    q.add_argument("--merges", type=int, required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_bpe_learn)
    q = bpe_sub.add_parser("apply")
    q.add_argument("--codes", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_bpe_apply)

    q = sub.add_parser("vocab", help="build a shared subword vocabulary")
    q.add_argument("--input", nargs="+", required=True)
    q.add_argument("--codes", default=None, help="apply these merges first")
    q.add_argument("--min-freq", type=int, default=1)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_vocab)

    q = sub.add_parser("train", help="train a toy seq2seq model")
    q.add_argument("--arch", choices=["lstm", "transformer"], required=True)
    q.add_argument("--pos", action="store_true", help="fuse POS features")
    q.add_argument("--train-src", required=True)
    q.add_argument("--train-tgt", required=True)
    q.add_argument("--tags", default=None)
    q.add_argument("--codes", required=True)
    q.add_argument("--vocab", required=True)
    q.add_argument("--steps", type=int, required=True)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--d-model", type=int, default=64)
    q.add_argument("--layers", type=int, default=2)
    q.add_argument("--heads", type=int, default=4)
    q.add_argument("--dropout", type=float, default=0.1)
    q.add_argument("--max-len", type=int, default=64)
    q.add_argument("--eta", type=float, default=1.0)
    q.add_argument("--schedule", choices=["constant", "inverse_sqrt_warmup"], default=None)
    q.add_argument("--warmup", type=int, default=400)
    q.add_argument("--batch-size", type=int, default=32)
    q.add_argument("--token-budget", type=int, default=512)
    q.add_argument("--log-every", type=int, default=50)
    q.set_defaults(func=_cmd_train)

    q = sub.add_parser("translate", help="decode with a trained checkpoint")
    q.add_argument("--ckpt", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--tags", default=None)
    q.add_argument("--beam", type=int, default=1)
    q.add_argument("--alpha", type=float, default=0.0)
    q.add_argument("--out", default=None)
    q.set_defaults(func=_cmd_translate)

    q = sub.add_parser("bleu", help="corpus BLEU of hypothesis vs reference")
    q.add_argument("--hyp", required=True)
    q.add_argument("--ref", required=True)
    q.set_defaults(func=_cmd_bleu)

    st = sub.add_parser("stats", help="statistical tests on number files")
    st_sub = st.add_subparsers(dest="stat", required=True)
    q = st_sub.add_parser("mww")
    q.add_argument("--x", required=True)
    q.add_argument("--y", required=True)
    q.add_argument("--alt", choices=["less", "greater"], required=True)
    q.set_defaults(func=_cmd_stats)
    q = st_sub.add_parser("pearson")
    q.add_argument("--x", required=True)
    q.add_argument("--y", required=True)
    q.set_defaults(func=_cmd_stats)
    q = st_sub.add_parser("ttest")
    q.add_argument("--data", required=True)
    q.add_argument("--mu0", type=float, default=0.0)
    q.set_defaults(func=_cmd_stats)
    q = st_sub.add_parser("ols")
    q.add_argument("--x", required=True)
    q.add_argument("--y", required=True)
    q.set_defaults(func=_cmd_stats)

    q = sub.add_parser("report", help="run an experiment and emit reports")
    q.add_argument("--config", default=None, help="experiment JSON (see README)")
    q.add_argument("--registry", action="store_true",
                   help="use the shipped registry scores instead of training")
    q.add_argument("--registry-file", default=None)
    q.add_argument("--out", default=None, help="report JSON path")
    q.add_argument("--csv", default=None, help="report CSV path")
    q.add_argument("--svg", nargs="*", default=None, help="one figure per architecture")
    q.add_argument("--out-dir", default=None, help="directory for per-language partials")
    q.set_defaults(func=_cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
