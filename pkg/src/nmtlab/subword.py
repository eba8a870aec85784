"""Byte pair encoding with a vocabulary shared across source and target.

Words are split to characters plus a separate end-of-word marker symbol;
merges are learned greedily on pair frequency and applied in priority order.
Subwords are rendered with the "@@" continuation suffix.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .corpus import ALL_TAGS, SPECIAL_TAG

END_MARKER = "</w>"
CONTINUATION = "@@"

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIAL_TOKENS = (PAD, UNK, BOS, EOS)

MERGES_HEADER = "#nmtlab-bpe v1"


class SubwordError(Exception):
    pass


@dataclass(frozen=True)
class MergeTable:
    """Ordered BPE merges; position in the tuple is the priority."""

    merges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise SubwordError("duplicate merge pair")

    def __len__(self) -> int:
        return len(self.merges)

    def priorities(self) -> dict[tuple[str, str], int]:
        return {pair: i for i, pair in enumerate(self.merges)}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(MERGES_HEADER + "\n")
            for left, right in self.merges:
                fh.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != MERGES_HEADER:
                raise SubwordError(f"{path}: expected header {MERGES_HEADER!r}, got {header!r}")
            merges = []
            for lineno, line in enumerate(fh, 2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise SubwordError(f"{path}: line {lineno}: expected 'left right'")
                merges.append((parts[0], parts[1]))
        return cls(tuple(merges))


def learn_bpe(sentences: Iterable[Sequence[str]], num_merges: int) -> MergeTable:
    """Learn merges over the word-frequency table of all given sentences.

    The most frequent adjacent pair wins each round; ties go to the
    lexicographically smallest (left, right) pair.  Learning stops early
    once no pair occurs at least twice.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    word_freq: Counter = Counter()
    for sent in sentences:
        word_freq.update(sent)
    if not word_freq:
        raise SubwordError("cannot learn BPE from an empty corpus")

    # symbol sequences per word type, mutated as merges are applied
    table: list[tuple[list[str], int]] = [
        (list(word) + [END_MARKER], freq) for word, freq in sorted(word_freq.items())
    ]

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_counts: Counter = Counter()
        for symbols, freq in table:
            for i in range(len(symbols) - 1):
                pair_counts[(symbols[i], symbols[i + 1])] += freq
        if not pair_counts:
            break
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if best[1] < 2:
            break
        pair = best[0]
        merges.append(pair)
        merged = pair[0] + pair[1]
        for symbols, _ in table:
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
                    symbols[i:i + 2] = [merged]
                else:
                    i += 1
    return MergeTable(tuple(merges))


def _segment_word(word: str, priorities: dict[tuple[str, str], int]) -> list[str]:
    symbols = list(word) + [END_MARKER]
    while len(symbols) > 1:
        ranked = [
            (priorities[p], i)
            for i, p in enumerate(zip(symbols, symbols[1:]))
            if p in priorities
        ]
        if not ranked:
            break
        prio, _ = min(ranked)
        pair = None
        i = 0
        # merge every occurrence of the winning pair, left to right
        while i < len(symbols) - 1:
            cur = (symbols[i], symbols[i + 1])
            if priorities.get(cur) == prio:
                pair = cur
                symbols[i:i + 2] = [cur[0] + cur[1]]
            else:
                i += 1
        assert pair is not None
    return symbols


def _render(symbols: list[str]) -> list[str]:
    if symbols and symbols[-1] == END_MARKER:
        symbols = symbols[:-1]
    elif symbols and symbols[-1].endswith(END_MARKER):
        symbols = symbols[:-1] + [symbols[-1][: -len(END_MARKER)]]
    return [s + CONTINUATION for s in symbols[:-1]] + [symbols[-1]]


def apply_bpe(merges: MergeTable, words: Sequence[str]) -> list[str]:
    """Split words into subword tokens under the given merge table."""
    priorities = merges.priorities()
    memo: dict[str, list[str]] = {}
    out: list[str] = []
    for word in words:
        if word not in memo:
            memo[word] = _render(_segment_word(word, priorities))
        out.extend(memo[word])
    return out


def detok_bpe(tokens: Sequence[str]) -> list[str]:
    """Rejoin "@@"-continued subwords back into words (inverse of apply_bpe)."""
    words: list[str] = []
    buf = ""
    for tok in tokens:
        if tok.endswith(CONTINUATION):
            buf += tok[: -len(CONTINUATION)]
        else:
            words.append(buf + tok)
            buf = ""
    if buf:
        raise SubwordError("dangling continuation token at end of sequence")
    return words


def propagate_pos(
    words: Sequence[str], tags: Sequence[str], subwords: Sequence[str]
) -> list[str]:
    """Copy each word's POS tag onto all of its subword tokens.

    Special tokens (PAD/UNK/BOS/EOS) are tagged ``X_SPECIAL`` and consume no
    word.  The subwords must detokenize back to ``words``.
    """
    if len(words) != len(tags):
        raise ValueError(f"{len(words)} words but {len(tags)} tags")
    out: list[str] = []
    wi = 0
    buf = ""
    pending = 0  # subwords of the word currently being reassembled
    for tok in subwords:
        if tok in SPECIAL_TOKENS:
            if pending:
                raise SubwordError(f"special token inside word at index {wi}")
            out.append(SPECIAL_TAG)
            continue
        if wi >= len(words):
            raise SubwordError(f"subwords continue past the last word (index {len(words)})")
        if tok.endswith(CONTINUATION):
            buf += tok[: -len(CONTINUATION)]
            pending += 1
            continue
        word = buf + tok
        if word != words[wi]:
            raise SubwordError(
                f"detokenization mismatch at word index {wi}: {word!r} != {words[wi]!r}"
            )
        out.extend([tags[wi]] * (pending + 1))
        buf = ""
        pending = 0
        wi += 1
    if pending:
        raise SubwordError("dangling continuation token at end of sequence")
    if wi != len(words):
        raise SubwordError(f"subwords cover only {wi} of {len(words)} words")
    return out


@dataclass(frozen=True)
class Vocab:
    """Shared source/target subword vocabulary plus the POS tag inventory."""

    id_to_token: tuple[str, ...]
    token_to_id: dict
    pos_to_id: dict

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocab":
        id_to_token = SPECIAL_TOKENS + tuple(tokens)
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        if len(token_to_id) != len(id_to_token):
            raise SubwordError("duplicate token in vocabulary")
        pos_to_id = {tag: i for i, tag in enumerate(ALL_TAGS)}
        return cls(id_to_token, token_to_id, pos_to_id)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def n_tags(self) -> int:
        return len(self.pos_to_id)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        unk = self.token_to_id[UNK]
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def encode_tags(self, tags: Sequence[str]) -> list[int]:
        return [self.pos_to_id[t] for t in tags]

    def fingerprint(self) -> str:
        blob = json.dumps(
            {"tokens": list(self.id_to_token), "pos_tags": ALL_TAGS},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def save(self, path) -> None:
        doc = {
            "tokens": {tok: i for i, tok in enumerate(self.id_to_token)},
            "pos_tags": dict(self.pos_to_id),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, ensure_ascii=False, indent=0, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        by_id = sorted(doc["tokens"].items(), key=lambda kv: kv[1])
        id_to_token = tuple(tok for tok, _ in by_id)
        if [i for _, i in by_id] != list(range(len(by_id))):
            raise SubwordError(f"{path}: token ids are not a contiguous 0-based range")
        if id_to_token[:4] != SPECIAL_TOKENS:
            raise SubwordError(f"{path}: special tokens must occupy ids 0..3")
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        return cls(id_to_token, token_to_id, dict(doc["pos_tags"]))


def build_vocab(corpora: Iterable[Sequence[str]], min_freq: int = 1) -> Vocab:
    """Build the shared vocabulary from tokenized source plus target text.

    Tokens at or above ``min_freq`` are kept, ordered by descending
    frequency then token string, after the four special tokens.
    """
    freq: Counter = Counter()
    for sent in corpora:
        freq.update(sent)
    kept = sorted(
        (tok for tok, c in freq.items() if c >= min_freq),
        key=lambda tok: (-freq[tok], tok),
    )
    return Vocab.from_tokens(kept)
