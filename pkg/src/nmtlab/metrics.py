"""Corpus-level BLEU with clipped n-gram precision and brevity penalty.

Single reference, case-sensitive, no smoothing; counts are summed over the
whole corpus before taking precisions (multi-bleu convention).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    @property
    def score_x100(self) -> float:
        return 100.0 * self.score


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
) -> BleuResult:
    """BLEU over a corpus of (hypothesis, reference) word sequences."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise ValueError("corpus_bleu needs at least one sentence pair")

    matched = [0] * max_n
    possible = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref, n)
            possible[n - 1] += sum(hyp_counts.values())
            matched[n - 1] += sum(
                min(c, ref_counts[g]) for g, c in hyp_counts.items()
            )

    precisions = tuple(
        (matched[i] / possible[i]) if possible[i] > 0 else 0.0
        for i in range(max_n)
    )

    if hyp_len == 0:
        return BleuResult(0.0, precisions, 0.0, hyp_len, ref_len)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(math.fsum(math.log(p) for p in precisions) / max_n)
    return BleuResult(score, precisions, bp, hyp_len, ref_len)
