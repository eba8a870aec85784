"""Greedy and beam decoding.

Both strategies re-score the full prefix through the teacher-forcing path,
so decoding shares every numerical detail with training.  Beam hypotheses
are ranked by log-probability divided by length**alpha; ties break on token
ids, which makes beam(1, 0) coincide with greedy decoding exactly.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..subword import apply_bpe, detok_bpe, propagate_pos
from .checkpoint import Checkpoint
from .config import ARCH_LSTM
from .models import (
    BOS_ID, EOS_ID, PAD_ID, Batch,
    lstm_decode_step, lstm_encode, transformer_decode, transformer_encode,
)
from .tensor import Tensor
from .training import checkpoint_merges, checkpoint_vocab


def _next_logits(config, params, enc_state, prefixes: np.ndarray) -> np.ndarray:
    """Log-softmax scores for the next token of each prefix row.

    prefixes: (B, t) target ids already generated (no BOS).
    """
    B, t = prefixes.shape
    tgt_in = np.concatenate(
        [np.full((B, 1), BOS_ID, dtype=np.int64), prefixes], axis=1
    )
    if config.arch == ARCH_LSTM:
        enc_top, finals, pad_mask = enc_state
        states = finals
        logits = None
        for step in range(tgt_in.shape[1]):
            logits, states, _ = lstm_decode_step(
                config, params, states, enc_top, pad_mask, tgt_in[:, step]
            )
        out = logits.data
    else:
        memory, pad_mask = enc_state
        logits = transformer_decode(config, params, memory, pad_mask, tgt_in)
        out = logits.data[:, -1, :]
    shifted = out - out.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _encode_source(config, params, src: np.ndarray, src_len: np.ndarray, src_pos):
    if config.arch == ARCH_LSTM:
        return lstm_encode(config, params, src, src_len, src_pos)
    return transformer_encode(config, params, src, src_pos)


def _tile_encoder_state(config, enc_state, reps: int):
    """Repeat a single-sentence encoder state across beam hypotheses."""
    def tile_t(t: Tensor) -> Tensor:
        return Tensor(np.repeat(t.data, reps, axis=0))

    if config.arch == ARCH_LSTM:
        enc_top, finals, pad_mask = enc_state
        return (
            tile_t(enc_top),
            [(tile_t(h), tile_t(c)) for h, c in finals],
            np.repeat(pad_mask, reps, axis=0),
        )
    memory, pad_mask = enc_state
    return tile_t(memory), np.repeat(pad_mask, reps, axis=0)


def decode_ids(
    config,
    params,
    src_ids: np.ndarray,
    src_pos: Optional[np.ndarray],
    beam_size: int = 1,
    alpha: float = 0.0,
    max_len: Optional[int] = None,
) -> list[int]:
    """Decode one source sentence to target ids (BOS/EOS stripped)."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if len(src_ids) == 0:
        return []
    limit = max_len if max_len is not None else config.max_len

    src = np.concatenate([src_ids, [EOS_ID]]).astype(np.int64)[None, :]
    src_len = np.array([src.shape[1]], dtype=np.int64)
    pos = None
    if src_pos is not None:
        special = config.tagset_size - 1  # X_SPECIAL sits at the end of the tag inventory
        pos = np.concatenate([src_pos, [special]]).astype(np.int64)[None, :]
    enc_state = _encode_source(config, params, src, src_len, pos)

    if beam_size == 1:
        return _greedy(config, params, enc_state, limit)
    return _beam(config, params, enc_state, beam_size, alpha, limit)


def _greedy(config, params, enc_state, limit: int) -> list[int]:
    prefix = np.zeros((1, 0), dtype=np.int64)
    out: list[int] = []
    for _ in range(limit):
        scores = _next_logits(config, params, enc_state, prefix)
        nxt = int(np.argmax(scores[0]))
        if nxt == EOS_ID:
            break
        out.append(nxt)
        prefix = np.concatenate([prefix, [[nxt]]], axis=1)
    return out


def _beam(config, params, enc_state, beam_size: int, alpha: float, limit: int) -> list[int]:
    def norm(logp: float, length: int) -> float:
        return logp / (max(length, 1) ** alpha)

    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float, int]] = []  # (ids sans EOS, logp, gen length)

    for _ in range(limit):
        if not live:
            break
        enc_tiled = _tile_encoder_state(config, enc_state, len(live))
        width = max(len(p) for p, _ in live)
        prefixes = np.full((len(live), width), PAD_ID, dtype=np.int64)
        for i, (p, _) in enumerate(live):
            prefixes[i, :len(p)] = p
        scores = _next_logits(config, params, enc_tiled, prefixes)

        candidates: list[tuple[tuple[int, ...], float]] = []
        for i, (p, logp) in enumerate(live):
            top = np.argsort(-scores[i], kind="stable")[:beam_size]
            for tok in top:
                candidates.append((p + (int(tok),), logp + float(scores[i][tok])))
        # rank expanded candidates by normalized score; token ids break ties
        candidates.sort(key=lambda c: (-norm(c[1], len(c[0])), c[0]))
        live = []
        for p, logp in candidates[: 2 * beam_size]:
            if p[-1] == EOS_ID:
                finished.append((p[:-1], logp, len(p)))
            elif len(live) < beam_size:
                live.append((p, logp))
        if len(finished) >= beam_size:
            break

    pool = [(ids, norm(logp, glen)) for ids, logp, glen in finished]
    pool += [(ids, norm(logp, len(ids))) for ids, logp in live]
    pool.sort(key=lambda c: (-c[1], c[0]))
    return list(pool[0][0]) if pool else []


def greedy_decode_batch(
    config,
    params,
    examples: Sequence[tuple[np.ndarray, Optional[np.ndarray]]],
    max_len: Optional[int] = None,
    batch_size: int = 64,
) -> list[list[int]]:
    """Greedy-decode many sentences, batching for speed."""
    limit = max_len if max_len is not None else config.max_len
    out: list[list[int]] = []
    special = config.tagset_size - 1
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        B = len(chunk)
        s_max = max(len(s) for s, _ in chunk) + 1
        src = np.full((B, s_max), PAD_ID, dtype=np.int64)
        src_len = np.zeros(B, dtype=np.int64)
        has_pos = any(p is not None for _, p in chunk)
        pos = np.full((B, s_max), special, dtype=np.int64) if has_pos else None
        for i, (s, p) in enumerate(chunk):
            src[i, :len(s)] = s
            src[i, len(s)] = EOS_ID
            src_len[i] = len(s) + 1
            if pos is not None and p is not None:
                pos[i, :len(p)] = p
        enc_state = _encode_source(config, params, src, src_len, pos)

        prefix = np.zeros((B, 0), dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        for _ in range(limit):
            scores = _next_logits(config, params, enc_state, prefix)
            nxt = scores.argmax(axis=-1)
            nxt[done] = PAD_ID
            done |= nxt == EOS_ID
            prefix = np.concatenate([prefix, nxt[:, None]], axis=1)
            if done.all():
                break
        for i in range(B):
            row = []
            for tok in prefix[i]:
                if tok in (EOS_ID, PAD_ID):
                    break
                row.append(int(tok))
            out.append(row)
    return out


def translate(
    ckpt: Checkpoint,
    source_words: Sequence[str],
    tags: Optional[Sequence[str]] = None,
    beam_size: int = 1,
    alpha: float = 0.0,
    max_len: Optional[int] = None,
) -> list[str]:
    """Translate one tokenized sentence using a checkpoint's embedded vocab/codes."""
    if len(source_words) == 0:
        return []
    vocab = checkpoint_vocab(ckpt)
    merges = checkpoint_merges(ckpt)
    subwords = apply_bpe(merges, list(source_words)) if merges else list(source_words)
    src_ids = np.array(vocab.encode(subwords), dtype=np.int64)
    pos_ids = None
    if ckpt.config.use_pos:
        if tags is None:
            raise ValueError("this checkpoint fuses POS features; pass source tags")
        sub_tags = propagate_pos(list(source_words), list(tags), subwords)
        pos_ids = np.array(vocab.encode_tags(sub_tags), dtype=np.int64)
    params = ckpt.param_tensors()
    out_ids = decode_ids(
        ckpt.config, params, src_ids, pos_ids, beam_size=beam_size,
        alpha=alpha, max_len=max_len,
    )
    tokens = vocab.decode(out_ids)
    return detok_bpe(tokens) if merges else tokens
