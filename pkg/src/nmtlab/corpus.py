"""Parallel-corpus ingestion, the 15-language registry, and word-order grouping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
SPECIAL_TAG = "X_SPECIAL"
ALL_TAGS = UPOS_TAGS + (SPECIAL_TAG,)

WORD_ORDERS = ("SOV", "SVO", "FLEXIBLE")


class CorpusError(Exception):
    """Raised for malformed or inconsistent corpus inputs."""


class AlignmentError(CorpusError):
    """Source and target files disagree on line count."""

    def __init__(self, n_src: int, n_tgt: int):
        super().__init__(f"line-count mismatch: source has {n_src} lines, target has {n_tgt}")
        self.n_src = n_src
        self.n_tgt = n_tgt


@dataclass(frozen=True)
class WordOrder:
    """Dominant constituent order, with an optional secondary order for flexible languages."""

    dominant: str
    secondary: Optional[str] = None

    def __post_init__(self):
        if self.dominant not in WORD_ORDERS:
            raise ValueError(f"unknown word order {self.dominant!r}")
        if self.secondary is not None:
            if self.secondary not in WORD_ORDERS:
                raise ValueError(f"unknown word order {self.secondary!r}")
            if self.secondary == self.dominant:
                raise ValueError("secondary word order must differ from dominant")

    @property
    def orders(self) -> frozenset[str]:
        if self.secondary is None:
            return frozenset((self.dominant,))
        return frozenset((self.dominant, self.secondary))


@dataclass(frozen=True)
class LanguageProfile:
    """One registry row: target language code plus its catalogued properties."""

    code: str
    word_order: WordOrder
    levenshtein: float
    n_train: int
    n_test: int
    bleu_lstm: Optional[float] = None
    bleu_transformer: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.levenshtein < 0:
            raise ValueError("levenshtein distance must be non-negative")


@dataclass(frozen=True)
class SentencePair:
    """One aligned sentence pair; source tags, when present, are per source word."""

    source: tuple[str, ...]
    target: tuple[str, ...]
    source_tags: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        for side in (self.source, self.target):
            for tok in side:
                if not tok or any(c.isspace() for c in tok):
                    raise ValueError(f"bad token {tok!r}: tokens must be non-empty and whitespace-free")
        if self.source_tags is not None and len(self.source_tags) != len(self.source):
            raise ValueError(
                f"{len(self.source_tags)} tags for {len(self.source)} source words"
            )


@dataclass(frozen=True)
class ParallelCorpus:
    """Ordered aligned sentence pairs for one language pair."""

    pairs: tuple[SentencePair, ...]
    source_lang: str
    target_lang: str
    n_dropped: int = 0
    dropped_lines: tuple[int, ...] = ()  # 1-based line numbers removed at load

    def __len__(self) -> int:
        return len(self.pairs)

    def with_source_tags(self, tag_seqs) -> "ParallelCorpus":
        """Return a copy whose pairs carry the given per-sentence source tags."""
        if len(tag_seqs) != len(self.pairs):
            raise CorpusError(
                f"{len(tag_seqs)} tagged sentences for {len(self.pairs)} pairs"
            )
        pairs = []
        for i, (pair, (words, tags)) in enumerate(zip(self.pairs, tag_seqs)):
            if tuple(words) != pair.source:
                raise CorpusError(
                    f"tagged sentence {i} does not match the source sentence"
                )
            pairs.append(SentencePair(pair.source, pair.target, tuple(tags)))
        return ParallelCorpus(
            tuple(pairs), self.source_lang, self.target_lang,
            self.n_dropped, self.dropped_lines,
        )


def load_parallel(src_path, tgt_path, src_lang: str, tgt_lang: str) -> ParallelCorpus:
    """Read two line-aligned UTF-8 files into a corpus.

    Pairs that are empty on either side (after trimming) are dropped; the
    drop count is kept on the returned corpus.
    """
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(len(src_lines), len(tgt_lines))
    pairs = []
    dropped = []
    for lineno, (s, t) in enumerate(zip(src_lines, tgt_lines), 1):
        s_toks = tuple(s.split())
        t_toks = tuple(t.split())
        if not s_toks or not t_toks:
            dropped.append(lineno)
            continue
        pairs.append(SentencePair(s_toks, t_toks))
    return ParallelCorpus(
        tuple(pairs), src_lang, tgt_lang,
        n_dropped=len(dropped), dropped_lines=tuple(dropped),
    )


def _read_lines(path) -> list[str]:
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()  # trailing newline does not open a new sentence
    out = []
    for i, line in enumerate(lines, 1):
        try:
            out.append(line.decode("utf-8").rstrip("\r"))
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path}: invalid UTF-8 on line {i}: {exc}") from None
    return out


def load_tagged(path) -> list[tuple[list[str], list[str]]]:
    """Read a POS-tagged file: one "form<TAB>TAG" per line, blank line between sentences."""
    sentences = []
    words: list[str] = []
    tags: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                if words:
                    sentences.append((words, tags))
                    words, tags = [], []
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}: line {lineno}: expected 'form<TAB>TAG', got {line!r}")
            form, tag = line.split("\t", 1)
            tag = tag.strip()
            if tag not in ALL_TAGS:
                raise CorpusError(f"{path}: line {lineno}: unknown POS tag {tag!r}")
            words.append(form.strip())
            tags.append(tag)
    if words:
        sentences.append((words, tags))
    return sentences


def word_order_group(profile: LanguageProfile) -> int:
    """Assign the three-way ordering group: 1 if SOV appears anywhere in the
    ordering list, 3 if SVO appears (and SOV does not), 2 if purely flexible."""
    orders = profile.word_order.orders
    if "SOV" in orders:
        return 1
    if "SVO" in orders:
        return 3
    return 2


def split_corpus(
    corpus: ParallelCorpus,
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[ParallelCorpus, ParallelCorpus, ParallelCorpus]:
    """Deterministically partition a corpus into train/valid/test.

    Sizes follow largest-remainder rounding so the partition is exact.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(corpus)
    if n < 3:
        raise CorpusError(f"corpus of {n} pairs is too small to split three ways")

    quotas = [r * n for r in ratios]
    sizes = [int(q) for q in quotas]
    remainders = [q - s for q, s in zip(quotas, sizes)]
    for _ in range(n - sum(sizes)):
        # break remainder ties toward the earlier split
        i = max(range(3), key=lambda j: (remainders[j], -j))
        sizes[i] += 1
        remainders[i] = -1.0

    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(n)
    parts = []
    start = 0
    for size in sizes:
        idx = sorted(order[start:start + size])
        parts.append(
            ParallelCorpus(
                tuple(corpus.pairs[i] for i in idx),
                corpus.source_lang,
                corpus.target_lang,
            )
        )
        start += size
    return parts[0], parts[1], parts[2]


@dataclass(frozen=True)
class Registry:
    """The shipped catalogue of target languages and previously reported statistics."""

    version: int
    source_language: str
    profiles: tuple[LanguageProfile, ...]
    reported_stats: dict = field(default_factory=dict, compare=False)

    def __getitem__(self, code: str) -> LanguageProfile:
        for p in self.profiles:
            if p.code == code:
                return p
        raise KeyError(code)

    def codes(self) -> list[str]:
        return [p.code for p in self.profiles]

    def groups(self) -> dict[int, list[LanguageProfile]]:
        out: dict[int, list[LanguageProfile]] = {1: [], 2: [], 3: []}
        for p in self.profiles:
            out[word_order_group(p)].append(p)
        return out


def load_registry(path=None) -> Registry:
    """Load the language registry, by default the one shipped with the package."""
    if path is None:
        doc = json.loads(
            resources.files("nmtlab.data").joinpath("registry.json").read_text("utf-8")
        )
    else:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("format") != "nmtlab-registry":
        raise CorpusError("not a nmtlab registry document")
    profiles = []
    for row in doc["languages"]:
        orders = row["word_order"]
        wo = WordOrder(orders[0], orders[1] if len(orders) > 1 else None)
        profiles.append(
            LanguageProfile(
                code=row["code"],
                word_order=wo,
                levenshtein=row["levenshtein"],
                n_train=row["n_train"],
                n_test=row["n_test"],
                bleu_lstm=row.get("bleu_lstm"),
                bleu_transformer=row.get("bleu_transformer"),
                name=row.get("name", ""),
            )
        )
    return Registry(
        version=doc["version"],
        source_language=doc["source_language"],
        profiles=tuple(profiles),
        reported_stats=doc.get("reported_stats", {}),
    )
