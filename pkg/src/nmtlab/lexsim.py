"""Character-level Levenshtein distance and the corpus lexical-similarity metric.

Distances operate on Unicode scalar values (code points), not bytes or
grapheme clusters, so scripts with disjoint alphabets stay comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import ParallelCorpus


@dataclass(frozen=True)
class DistanceResult:
    """Raw edit count plus the mean-length-normalized ratio in [0, 2]."""

    raw: int
    normalized: float


@dataclass(frozen=True)
class CorpusDistanceResult:
    """Aggregated distance over a corpus, ready for reporting."""

    raw_total: int
    normalized: float
    n_pairs: int


def _codepoints(s: str) -> np.ndarray:
    # utf-32-le gives one uint32 per scalar value with no surrogate pairs
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def edit_distance(a: str, b: str) -> int:
    """Minimum insertions, deletions, and substitutions turning ``a`` into ``b``.

    Row-wise dynamic program; the in-row dependency is resolved with a
    prefix-minimum scan so each row is a handful of vectorized ops.
    """
    if a == b:
        return 0
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    a_codes = _codepoints(a)
    b_codes = _codepoints(b)

    cols = np.arange(m + 1, dtype=np.int64)
    prev = cols.copy()
    shifted = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cost = (b_codes != a_codes[i - 1]).astype(np.int64)
        cand = np.minimum(prev[1:] + 1, prev[:-1] + cost)
        # row recurrence D[j] = min(cand[j], D[j-1] + 1) equals
        # j + running_min(cand[k] - k), seeded with the j=0 boundary value i
        shifted[0] = i
        np.subtract(cand, cols[1:], out=shifted[1:])
        np.minimum.accumulate(shifted, out=shifted)
        prev = shifted + cols
        shifted = np.empty(m + 1, dtype=np.int64)
    return int(prev[m])


def edit_distance_fast(a: str, b: str) -> int:
    """Bit-parallel Levenshtein distance (Myers' algorithm).

    The column bit-vectors live in arbitrary-precision ints, so a pattern of
    any length runs through the same code path as one that fits a machine
    word; agreement with :func:`edit_distance` is exercised in the tests.
    """
    if a == b:
        return 0
    if len(a) > len(b):
        a, b = b, a  # keep the bit-vectors on the shorter string
    n = len(a)
    if n == 0:
        return len(b)

    peq: dict[str, int] = {}
    for i, ch in enumerate(a):
        peq[ch] = peq.get(ch, 0) | (1 << i)

    mask = (1 << n) - 1
    high = 1 << (n - 1)
    pv = mask
    mv = 0
    score = n
    for ch in b:
        eq = peq.get(ch, 0)
        xv = eq | mv
        xh = ((((eq & pv) + pv) ^ pv) | eq) & mask
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & high:
            score += 1
        elif mh & high:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def normalized_distance(a: str, b: str) -> float:
    """Edit distance divided by the average character count of the two strings.

    Both strings empty is defined as 0.
    """
    if not a and not b:
        return 0.0
    return edit_distance_fast(a, b) / ((len(a) + len(b)) / 2.0)


def distance(a: str, b: str) -> DistanceResult:
    """Raw and normalized distance for one string pair."""
    raw = edit_distance_fast(a, b)
    if not a and not b:
        return DistanceResult(raw=0, normalized=0.0)
    return DistanceResult(raw=raw, normalized=raw / ((len(a) + len(b)) / 2.0))


def corpus_distance(
    corpus: ParallelCorpus,
    mode: str = "mean",
    sample: Optional[tuple[int, int]] = None,
) -> CorpusDistanceResult:
    """Corpus-level lexical distance between source and target sides.

    Per pair, tokens are joined with single spaces and compared at the
    character level.  ``mean`` averages per-pair normalized distances;
    ``length_weighted`` divides total edits by total mean length.  ``sample``
    is an optional ``(n, seed)`` uniform subsample for large corpora.
    """
    if len(corpus) == 0:
        raise ValueError("corpus_distance needs a non-empty corpus")
    if mode not in ("mean", "length_weighted"):
        raise ValueError(f"unknown mode {mode!r}")

    pairs = corpus.pairs
    if sample is not None:
        n, seed = sample
        if n < len(pairs):
            rng = np.random.Generator(np.random.Philox(key=seed))
            idx = sorted(rng.choice(len(pairs), size=n, replace=False))
            pairs = tuple(pairs[i] for i in idx)

    raws = []
    mean_lens = []
    ratios = []
    for pair in pairs:
        src = " ".join(pair.source)
        tgt = " ".join(pair.target)
        raw = edit_distance_fast(src, tgt)
        mean_len = (len(src) + len(tgt)) / 2.0
        raws.append(raw)
        mean_lens.append(mean_len)
        ratios.append(0.0 if mean_len == 0 else raw / mean_len)

    raw_total = sum(raws)
    if mode == "mean":
        normalized = math.fsum(ratios) / len(ratios)
    else:
        normalized = raw_total / math.fsum(mean_lens)
    return CorpusDistanceResult(raw_total=raw_total, normalized=normalized, n_pairs=len(pairs))
