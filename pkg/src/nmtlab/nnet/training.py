"""Deterministic training loop.

All randomness flows from one user seed through named Philox streams
(counter-based), so runs with the same seed are bit-identical: stream 1
initializes parameters, stream 2 orders batches, stream 3 draws dropout
masks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..corpus import ParallelCorpus
from ..subword import MergeTable, Vocab, apply_bpe, propagate_pos
from .checkpoint import Checkpoint
from .config import ARCH_LSTM, ModelConfig, OptimizerHyper
from .models import Batch, init_params, make_batch, seq2seq_forward
from .optim import adam_step, init_adam_state
from .tensor import NonFiniteError, Tensor

STREAM_INIT = 1
STREAM_BATCH = 2
STREAM_DROPOUT = 3


class TrainingDivergedError(Exception):
    def __init__(self, step: int, detail: str):
        super().__init__(f"training diverged at step {step}: {detail}")
        self.step = step


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


Example = tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]


@dataclass
class EncodedCorpus:
    """Sentences as id arrays under a fixed vocabulary."""

    examples: list[Example]
    vocab: Vocab
    merges: Optional[MergeTable] = None

    @property
    def fingerprint(self) -> str:
        return self.vocab.fingerprint()

    def __len__(self) -> int:
        return len(self.examples)


def encode_corpus(
    corpus: ParallelCorpus, merges: MergeTable, vocab: Vocab
) -> EncodedCorpus:
    """BPE-segment and numericalize a parallel corpus; POS tags, when present
    on a pair, are propagated onto the source subwords."""
    examples: list[Example] = []
    for pair in corpus.pairs:
        src_sub = apply_bpe(merges, pair.source)
        tgt_sub = apply_bpe(merges, pair.target)
        src_ids = np.array(vocab.encode(src_sub), dtype=np.int64)
        tgt_ids = np.array(vocab.encode(tgt_sub), dtype=np.int64)
        tag_ids = None
        if pair.source_tags is not None:
            tags = propagate_pos(pair.source, pair.source_tags, src_sub)
            tag_ids = np.array(vocab.encode_tags(tags), dtype=np.int64)
        examples.append((src_ids, tgt_ids, tag_ids))
    return EncodedCorpus(examples, vocab, merges)


def _batch_plan(
    order: np.ndarray,
    examples: list[Example],
    sentence_batch: bool,
    batch_size: int,
    token_budget: int,
) -> list[list[int]]:
    if sentence_batch:
        return [
            list(order[i:i + batch_size]) for i in range(0, len(order), batch_size)
        ]
    # token batching: greedy fill counting padded source+target tokens
    plans: list[list[int]] = []
    cur: list[int] = []
    max_tok = 0
    for idx in order:
        n = len(examples[idx][0]) + len(examples[idx][1]) + 2
        new_max = max(max_tok, n)
        if cur and new_max * (len(cur) + 1) > token_budget:
            plans.append(cur)
            cur = [idx]
            max_tok = n
        else:
            cur.append(idx)
            max_tok = new_max
    if cur:
        plans.append(cur)
    return plans


def _batches(
    data: EncodedCorpus,
    config: ModelConfig,
    rng: np.random.Generator,
    batch_size: int,
    token_budget: int,
    special_tag_id: int,
) -> Iterator[Batch]:
    sentence_batch = config.arch == ARCH_LSTM
    n = len(data)
    while True:
        order = rng.permutation(n)
        for plan in _batch_plan(order, data.examples, sentence_batch, batch_size, token_budget):
            yield make_batch([data.examples[i] for i in plan], special_tag_id)


def train(
    data: EncodedCorpus,
    config: ModelConfig,
    hyper: OptimizerHyper,
    steps: int,
    seed: int,
    batch_size: int = 32,
    token_budget: int = 512,
    log_every: int = 50,
) -> tuple[Checkpoint, list[tuple[int, float]]]:
    """Run Adam updates and return the final checkpoint plus the loss curve."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty corpus")
    if config.vocab_size != len(data.vocab):
        raise ValueError(
            f"config.vocab_size={config.vocab_size} != corpus vocabulary {len(data.vocab)}"
        )
    if config.use_pos and any(ex[2] is None for ex in data.examples):
        raise ValueError("use_pos model needs POS tags on every source sentence")

    rng_init = stream_rng(seed, STREAM_INIT)
    rng_batch = stream_rng(seed, STREAM_BATCH)
    rng_dropout = stream_rng(seed, STREAM_DROPOUT)

    params = init_params(config, rng_init)
    raw = {name: t.data for name, t in params.items()}
    state = init_adam_state(raw)
    special_tag_id = data.vocab.pos_to_id["X_SPECIAL"]
    batches = _batches(data, config, rng_batch, batch_size, token_budget, special_tag_id)

    curve: list[tuple[int, float]] = []
    for t in range(1, steps + 1):
        batch = next(batches)
        for p in params.values():
            p.grad = None
        try:
            _, loss = seq2seq_forward(config, params, batch, rng_dropout, training=True)
        except NonFiniteError as exc:
            raise TrainingDivergedError(t, str(exc)) from exc
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingDivergedError(t, f"loss = {loss_val}")
        loss.backward()
        grads = {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()
        }
        adam_step(raw, grads, state, hyper, t, d_model=config.d_model)
        if t % log_every == 0 or t == steps:
            curve.append((t, loss_val))

    return _make_checkpoint(config, hyper, params, state, steps, seed,
                            rng_batch, rng_dropout, data), curve


def _make_checkpoint(config, hyper, params, state, step, seed, rng_batch, rng_dropout, data):
    vocab_doc = {
        "tokens": {tok: i for i, tok in enumerate(data.vocab.id_to_token)},
        "pos_tags": dict(data.vocab.pos_to_id),
    }
    return Checkpoint(
        config=config,
        hyper=hyper,
        params={name: p.data for name, p in params.items()},
        opt_m=state["m"],
        opt_v=state["v"],
        step=step,
        rng_states={
            "seed": seed,
            "batch": rng_batch.bit_generator.state,
            "dropout": rng_dropout.bit_generator.state,
        },
        vocab_fingerprint=data.vocab.fingerprint(),
        vocab_doc=vocab_doc,
        merges=[list(m) for m in data.merges.merges] if data.merges else None,
    )


def checkpoint_vocab(ckpt: Checkpoint) -> Vocab:
    """Rebuild the Vocab embedded in a checkpoint."""
    if ckpt.vocab_doc is None:
        raise ValueError("checkpoint carries no vocabulary")
    by_id = sorted(ckpt.vocab_doc["tokens"].items(), key=lambda kv: kv[1])
    id_to_token = tuple(tok for tok, _ in by_id)
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocab(id_to_token, token_to_id, dict(ckpt.vocab_doc["pos_tags"]))


def checkpoint_merges(ckpt: Checkpoint) -> Optional[MergeTable]:
    if ckpt.merges is None:
        return None
    return MergeTable(tuple(tuple(m) for m in ckpt.merges))
