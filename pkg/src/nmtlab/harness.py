"""End-to-end experiment orchestration and report emission.

Two modes share one report schema: registry mode recomputes the statistics
block directly from the shipped language registry (fast, exact), while
trained mode runs the full pipeline per language -- ingest, lexical
similarity, BPE, optional POS fusion, training, decoding, BLEU -- and then
the same statistics.  Every stage draws its randomness from the single
experiment seed, so rerunning a config yields byte-identical outputs.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from typing import Optional

from . import lexsim, metrics, stats
from .corpus import (
    LanguageProfile, ParallelCorpus, Registry, WordOrder,
    load_parallel, load_registry, load_tagged, word_order_group,
)
from .nnet import (
    ModelConfig, OptimizerHyper, encode_corpus, greedy_decode_batch, train,
)
from .plotting import plot_scatter
from .subword import CONTINUATION, apply_bpe, build_vocab, detok_bpe, learn_bpe

REPORT_FORMAT = "nmtlab-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class LanguageSpec:
    """Corpus locations for one target language in a trained experiment."""

    code: str
    train_src: str
    train_tgt: str
    test_src: str
    test_tgt: str
    train_tags: Optional[str] = None
    test_tags: Optional[str] = None
    word_order: Optional[WordOrder] = None  # falls back to the registry


@dataclass(frozen=True)
class ExperimentConfig:
    languages: tuple[LanguageSpec, ...]
    models: tuple[ModelConfig, ...]
    optimizer: OptimizerHyper = OptimizerHyper()
    steps: int = 200
    seed: int = 0
    out_dir: Optional[str] = None
    bpe_merges: int = 500
    min_freq: int = 1

    def __post_init__(self):
        for m in self.models:
            if m.use_pos:
                raise ValueError(
                    "experiment models are baselines; the POS variant is derived"
                )


def pos_variant(model: ModelConfig) -> ModelConfig:
    """The POS-fused twin, differing from the baseline only in use_pos."""
    return dataclasses.replace(model, use_pos=True)


# -- experiment ------------------------------------------------------------------


def run_experiment(
    config: Optional[ExperimentConfig] = None,
    registry_mode: bool = False,
    registry: Optional[Registry] = None,
) -> dict:
    """Produce the evaluation report document (see emit_report for output)."""
    registry = registry or load_registry()
    if registry_mode:
        return _registry_report(registry)
    if config is None:
        raise ValueError("trained mode needs an ExperimentConfig")
    return _trained_report(config, registry)


def _registry_report(registry: Registry) -> dict:
    arch_order = ["lstm", "transformer"]
    languages = []
    for p in registry.profiles:
        languages.append({
            "code": p.code,
            "group": word_order_group(p),
            "levenshtein": p.levenshtein,
            "n_train": p.n_train,
            "n_test": p.n_test,
            "results": {
                "lstm": {"bleu_baseline": p.bleu_lstm, "bleu_pos": None,
                         "delta_percent": None},
                "transformer": {"bleu_baseline": p.bleu_transformer, "bleu_pos": None,
                                "delta_percent": None},
            },
        })
    statistics = {
        arch: _statistics_block(languages, arch, registry.reported_stats)
        for arch in arch_order
    }
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "mode": "registry",
        "arch_order": arch_order,
        "languages": languages,
        "statistics": statistics,
        "failures": [],
    }


def _trained_report(config: ExperimentConfig, registry: Registry) -> dict:
    arch_order = [m.arch for m in config.models]
    languages = []
    failures = []
    for spec in config.languages:
        row, errors = _run_language(spec, config, registry)
        languages.append(row)
        failures.extend(errors)
        if config.out_dir:
            _write_partial(config.out_dir, row)
    statistics = {
        arch: _statistics_block(languages, arch, reported=None)
        for arch in arch_order
    }
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "mode": "trained",
        "seed": config.seed,
        "steps": config.steps,
        "arch_order": arch_order,
        "languages": languages,
        "statistics": statistics,
        "failures": failures,
    }


def _run_language(spec: LanguageSpec, config: ExperimentConfig, registry: Registry):
    row = {
        "code": spec.code,
        "group": None,
        "levenshtein": None,
        "n_train": None,
        "n_test": None,
        "results": {m.arch: {"bleu_baseline": None, "bleu_pos": None,
                             "delta_percent": None} for m in config.models},
    }
    failures = []

    def fail(stage, exc):
        failures.append({"code": spec.code, "stage": stage, "error": str(exc)})

    try:
        row["group"] = word_order_group(_profile_for(spec, registry))
    except Exception as exc:
        fail("word_order", exc)
        return row, failures

    try:
        train_corpus = load_parallel(spec.train_src, spec.train_tgt, "en", spec.code)
        test_corpus = load_parallel(spec.test_src, spec.test_tgt, "en", spec.code)
        if spec.train_tags:
            train_corpus = _attach_tags(train_corpus, spec.train_tags)
        if spec.test_tags:
            test_corpus = _attach_tags(test_corpus, spec.test_tags)
        row["n_train"] = len(train_corpus)
        row["n_test"] = len(test_corpus)
    except Exception as exc:
        fail("load", exc)
        return row, failures

    try:
        row["levenshtein"] = lexsim.corpus_distance(train_corpus, mode="mean").normalized
    except Exception as exc:
        fail("lexsim", exc)

    try:
        sentences = [p.source for p in train_corpus.pairs]
        sentences += [p.target for p in train_corpus.pairs]
        merges = learn_bpe(sentences, config.bpe_merges)
        vocab = build_vocab(
            (apply_bpe(merges, s) for s in sentences), min_freq=config.min_freq
        )
        train_enc = encode_corpus(train_corpus, merges, vocab)
        test_enc = encode_corpus(test_corpus, merges, vocab)
    except Exception as exc:
        fail("bpe", exc)
        return row, failures

    refs = [list(p.target) for p in test_corpus.pairs]
    has_tags = all(p.source_tags is not None for p in train_corpus.pairs) and bool(
        train_corpus.pairs
    )
    for model in config.models:
        base_cfg = dataclasses.replace(model, vocab_size=len(vocab), use_pos=False)
        arch_row = row["results"][model.arch]
        try:
            ckpt, _ = train(
                train_enc, base_cfg, config.optimizer, config.steps, config.seed
            )
            arch_row["bleu_baseline"] = _evaluate(base_cfg, ckpt, test_enc, refs, use_pos=False)
        except Exception as exc:
            fail(f"{model.arch}.baseline", exc)
            continue
        if not has_tags:
            continue
        try:
            pos_cfg = pos_variant(base_cfg)
            ckpt_pos, _ = train(
                train_enc, pos_cfg, config.optimizer, config.steps, config.seed
            )
            arch_row["bleu_pos"] = _evaluate(pos_cfg, ckpt_pos, test_enc, refs, use_pos=True)
        except Exception as exc:
            fail(f"{model.arch}.pos", exc)
            continue
        base, pos = arch_row["bleu_baseline"], arch_row["bleu_pos"]
        if base and base > 0:
            arch_row["delta_percent"] = 100.0 * (pos - base) / base
        else:
            arch_row["delta_percent"] = None
            arch_row["delta_note"] = "undefined: baseline BLEU is 0"
    return row, failures


def _profile_for(spec: LanguageSpec, registry: Registry) -> LanguageProfile:
    if spec.word_order is not None:
        return LanguageProfile(
            code=spec.code, word_order=spec.word_order,
            levenshtein=0.0, n_train=0, n_test=0,
        )
    return registry[spec.code]


def _attach_tags(corpus: ParallelCorpus, tags_path) -> ParallelCorpus:
    tagged = load_tagged(tags_path)
    dropped = set(corpus.dropped_lines)
    kept = [t for i, t in enumerate(tagged, 1) if i not in dropped]
    if len(kept) != len(corpus.pairs) and len(tagged) == len(corpus.pairs):
        kept = tagged  # tags were produced from the already-filtered corpus
    return corpus.with_source_tags(kept)


def _evaluate(model_cfg, ckpt, test_enc, refs, use_pos: bool) -> float:
    examples = [
        (src, tags if use_pos else None) for src, _, tags in test_enc.examples
    ]
    params = ckpt.param_tensors()
    hyp_ids = greedy_decode_batch(model_cfg, params, examples)
    vocab = test_enc.vocab
    hyps = [_safe_detok(vocab.decode(ids)) for ids in hyp_ids]
    return 100.0 * metrics.corpus_bleu(hyps, refs).score


def _safe_detok(tokens: list[str]) -> list[str]:
    """detok_bpe, tolerating a dangling continuation from a truncated decode."""
    if tokens and tokens[-1].endswith(CONTINUATION):
        stripped = tokens[-1][: -len(CONTINUATION)]
        tokens = tokens[:-1] + ([stripped] if stripped else [])
    return detok_bpe(tokens)


# -- statistics -------------------------------------------------------------------


def _collect(languages, arch, key):
    """(value, group, levenshtein, n_test) for languages where `key` is present."""
    out = []
    for row in languages:
        val = row["results"].get(arch, {}).get(key)
        if val is None or row["group"] is None:
            continue
        out.append((val, row["group"], row["levenshtein"], row["n_test"]))
    return out


def _group_values(rows):
    groups = {1: [], 2: [], 3: []}
    for val, group, _, _ in rows:
        groups[group].append(val)
    return groups


def _mww_trio(groups, alternative):
    pairs = [("g1", "g2", 1, 2), ("g2", "g3", 2, 3), ("g1", "g3", 1, 3)]
    op = "lt" if alternative == "x_less" else "gt"
    out = {}
    for la, lb, a, b in pairs:
        name = f"{la}_{op}_{lb}"
        if not groups[a] or not groups[b]:
            out[name] = None
            continue
        try:
            res = stats.mww_one_sided(groups[a], groups[b], alternative)
        except ValueError:
            out[name] = None  # e.g. every pooled value identical
            continue
        out[name] = dataclasses.asdict(res)
    return out


def _maybe_pearson(x, y):
    try:
        return dataclasses.asdict(stats.pearson(x, y))
    except ValueError:
        return None


def _maybe_fit(x, y):
    try:
        return dataclasses.asdict(stats.ols_fit(x, y))
    except ValueError:
        return None


def _statistics_block(languages, arch, reported) -> dict:
    block: dict = {}
    base = _collect(languages, arch, "bleu_baseline")
    if len(base) >= 2:
        groups = _group_values(base)
        block["mww_baseline"] = _mww_trio(groups, "x_less")
        bleus = [v for v, _, _, _ in base]
        levs = [l for _, _, l, _ in base]
        ntests = [float(n) for _, _, _, n in base]
        block["pearson_bleu_vs_levenshtein"] = _maybe_pearson(levs, bleus)
        block["fits"] = {
            "bleu_vs_levenshtein": _maybe_fit(levs, bleus),
            "bleu_vs_n_test": _maybe_fit(ntests, bleus),
        }
        block["pearson_bleu_vs_n_test"] = _maybe_pearson(ntests, bleus)
    else:
        block["mww_baseline"] = None
        block["pearson_bleu_vs_levenshtein"] = None
        block["pearson_bleu_vs_n_test"] = None
        block["fits"] = None
        block["note"] = "fewer than 2 languages with baseline scores"

    deltas = _collect(languages, arch, "delta_percent")
    if len(deltas) >= 2:
        dgroups = _group_values(deltas)
        dvals = [v for v, _, _, _ in deltas]
        dlevs = [l for _, _, l, _ in deltas]
        block["mww_delta_less"] = _mww_trio(dgroups, "x_less")
        block["mww_delta_greater"] = _mww_trio(dgroups, "x_greater")
        try:
            block["ttest_delta"] = dataclasses.asdict(stats.one_sample_t(dvals, 0.0))
        except ValueError:
            block["ttest_delta"] = None
        block["pearson_delta_vs_levenshtein"] = _maybe_pearson(dlevs, dvals)
        if block.get("fits") is not None:
            block["fits"]["delta_vs_levenshtein"] = _maybe_fit(dlevs, dvals)
    else:
        block["mww_delta_less"] = None
        block["mww_delta_greater"] = None
        block["ttest_delta"] = None
        block["pearson_delta_vs_levenshtein"] = None

    if reported:
        block["reported"] = _reported_comparison(block, arch, reported)
    return block


def _reported_comparison(block, arch, reported) -> dict:
    """Computed-vs-previously-reported deltas; disagreements are recorded as is."""
    out: dict = {}
    rep_mww = reported.get("mww_baseline", {}).get(arch, {})
    comp = block.get("mww_baseline") or {}
    mww = {}
    for rep_key, rep_val in rep_mww.items():
        comp_entry = comp.get(rep_key)
        comp_p = comp_entry["p_value"] if comp_entry else None
        entry = {"reported": rep_val, "computed": comp_p}
        if comp_p is not None:
            entry["abs_diff"] = abs(comp_p - rep_val)
            if entry["abs_diff"] > 0.005:
                entry["note"] = "computed value disagrees with the reported one"
        mww[rep_key] = entry
    out["mww_baseline"] = mww

    rep_r = reported.get("pearson_bleu_vs_levenshtein", {}).get(arch)
    comp_r = block.get("pearson_bleu_vs_levenshtein")
    if rep_r and comp_r:
        out["pearson_bleu_vs_levenshtein"] = {
            "reported": rep_r,
            "computed": {"r": comp_r["r"], "p": comp_r["p_value"]},
            "abs_diff": {
                "r": abs(comp_r["r"] - rep_r["r"]),
                "p": abs(comp_r["p_value"] - rep_r["p"]),
            },
        }
    return out


# -- emission ---------------------------------------------------------------------


def round_floats(doc, sig: int = 6):
    """Round every float to `sig` significant digits (canonical report form)."""
    if isinstance(doc, float):
        if math.isnan(doc) or math.isinf(doc):
            raise ValueError("reports must not contain NaN or Inf")
        return float(f"{doc:.{sig}g}")
    if isinstance(doc, dict):
        return {k: round_floats(v, sig) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [round_floats(v, sig) for v in doc]
    return doc


def report_to_json(doc: dict) -> str:
    return json.dumps(round_floats(doc), sort_keys=True, indent=2) + "\n"


def report_to_csv(doc: dict) -> str:
    doc = round_floats(doc)
    arches = doc["arch_order"]
    cols = ["code", "group", "levenshtein", "n_train", "n_test"]
    for arch in arches:
        cols += [f"{arch}_baseline", f"{arch}_pos", f"{arch}_delta_percent"]
    lines = [",".join(cols)]
    for row in doc["languages"]:
        cells = [
            row["code"], _csv(row["group"]), _csv(row["levenshtein"]),
            _csv(row["n_train"]), _csv(row["n_test"]),
        ]
        for arch in arches:
            r = row["results"].get(arch, {})
            cells += [
                _csv(r.get("bleu_baseline")), _csv(r.get("bleu_pos")),
                _csv(r.get("delta_percent")),
            ]
        lines.append(",".join(cells))
    lines.append("")
    lines.append("statistic,arch,name,value")
    for arch in arches:
        for name, value in sorted(_flatten(doc["statistics"].get(arch, {}))):
            lines.append(f"stat,{arch},{name},{_csv(value)}")
    return "\n".join(lines) + "\n"


def _csv(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _flatten(d, prefix=""):
    out = []
    if isinstance(d, dict):
        for k, v in d.items():
            out.extend(_flatten(v, f"{prefix}{k}."))
    else:
        out.append((prefix[:-1], d))
    return out


def emit_report(doc: dict, fmt: str, path) -> None:
    """Write the report as canonical JSON or CSV (LF endings, stable bytes)."""
    if fmt == "json":
        text = report_to_json(doc)
    elif fmt == "csv":
        text = report_to_csv(doc)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def parse_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path} is not a {REPORT_FORMAT} document")
    return doc


def _write_partial(out_dir, row) -> None:
    pdir = os.path.join(out_dir, "partials")
    os.makedirs(pdir, exist_ok=True)
    with open(os.path.join(pdir, f"{row['code']}.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(round_floats(row), sort_keys=True, indent=2) + "\n")


def emit_figure(doc: dict, arch: str, path, x_axis: str = "levenshtein") -> None:
    """Figure-style scatter for one architecture.

    Trained reports with POS runs plot the relative improvement; otherwise
    the baseline score is plotted.  ``x_axis`` is "levenshtein" or "group".
    """
    have_delta = any(
        row["results"].get(arch, {}).get("delta_percent") is not None
        for row in doc["languages"]
    )
    y_key = "delta_percent" if have_delta else "bleu_baseline"
    points = []
    for row in doc["languages"]:
        y = row["results"].get(arch, {}).get(y_key)
        if y is None or row["group"] is None or row["levenshtein"] is None:
            continue
        x = row["levenshtein"] if x_axis == "levenshtein" else float(row["group"])
        points.append((round(x, 6), round(y, 6), row["group"]))
    block = doc["statistics"].get(arch) or {}
    fits = block.get("fits") or {}
    fit_key = "delta_vs_levenshtein" if have_delta else "bleu_vs_levenshtein"
    fit = None
    if x_axis == "levenshtein" and fits.get(fit_key):
        f = fits[fit_key]
        fit = stats.FitResult(f["slope"], f["intercept"], f["r_squared"])
    x_label = (
        "Normalized Levenshtein distance" if x_axis == "levenshtein"
        else "Word-order group"
    )
    y_label = (
        "BLEU improvement with POS (%)" if have_delta else "BLEU score"
    )
    svg = plot_scatter(points, fit, x_label, y_label, title=arch)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
