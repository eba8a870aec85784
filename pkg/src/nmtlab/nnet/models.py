"""Seq2seq architectures: stacked LSTM with dot-product attention, and a
post-norm Transformer with sinusoidal positions.

Both share the embedding front end (optionally fused with POS features), the
PAD-masked cross-entropy, and the id conventions PAD=0, UNK=1, BOS=2, EOS=3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .config import ARCH_LSTM, ARCH_TRANSFORMER, POS_CARVE, ModelConfig
from .tensor import Tensor, scope

PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

NEG_INF = float("-inf")


@dataclass
class Batch:
    """Padded id arrays for one training or evaluation batch."""

    src: np.ndarray                 # (B, S) int64
    src_len: np.ndarray             # (B,)
    tgt_in: np.ndarray              # (B, T) BOS-shifted decoder input
    tgt_out: np.ndarray             # (B, T) gold targets ending in EOS
    tgt_mask: np.ndarray            # (B, T) 1.0 on real targets, 0.0 on PAD
    src_pos: Optional[np.ndarray] = None  # (B, S) POS tag ids

    @property
    def size(self) -> int:
        return self.src.shape[0]


def make_batch(
    examples: list[tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]],
    special_tag_id: int,
) -> Batch:
    """Pad raw (src_ids, tgt_ids, src_tag_ids) examples into a Batch.

    EOS is appended to the source; the decoder side is BOS + y / y + EOS.
    Source specials and padding take the special POS tag.
    """
    bsz = len(examples)
    s_max = max(len(s) for s, _, _ in examples) + 1
    t_max = max(len(t) for _, t, _ in examples) + 1
    has_pos = any(p is not None for _, _, p in examples)

    src = np.full((bsz, s_max), PAD_ID, dtype=np.int64)
    src_len = np.zeros(bsz, dtype=np.int64)
    tgt_in = np.full((bsz, t_max), PAD_ID, dtype=np.int64)
    tgt_out = np.full((bsz, t_max), PAD_ID, dtype=np.int64)
    tgt_mask = np.zeros((bsz, t_max), dtype=np.float64)
    src_pos = np.full((bsz, s_max), special_tag_id, dtype=np.int64) if has_pos else None

    for i, (s, t, p) in enumerate(examples):
        ls, lt = len(s), len(t)
        src[i, :ls] = s
        src[i, ls] = EOS_ID
        src_len[i] = ls + 1
        if src_pos is not None and p is not None:
            src_pos[i, :ls] = p
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1:lt + 1] = t
        tgt_out[i, :lt] = t
        tgt_out[i, lt] = EOS_ID
        tgt_mask[i, :lt + 1] = 1.0
    return Batch(src, src_len, tgt_in, tgt_out, tgt_mask, src_pos)


# -- initialization ------------------------------------------------------------


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    if config.arch == ARCH_LSTM:
        return _init_lstm(config, rng)
    return _init_transformer(config, rng)


def _uniform(rng, shape, scale=0.08):
    return Tensor(rng.uniform(-scale, scale, size=shape))


def _normal(rng, shape, std):
    return Tensor(rng.normal(0.0, std, size=shape))


def _init_lstm(config: ModelConfig, rng) -> dict[str, Tensor]:
    V, W = config.vocab_size, config.width
    p: dict[str, Tensor] = {}
    p["src_embed"] = _uniform(rng, (V, config.token_width))
    if config.use_pos:
        p["pos_embed"] = _uniform(rng, (config.tagset_size, config.pos_dim))
    p["tgt_embed"] = _uniform(rng, (V, W))
    for side in ("enc", "dec"):
        for layer in range(config.n_layers):
            in_dim = W  # embeddings and hidden states share the model width
            p[f"{side}.l{layer}.wx"] = _uniform(rng, (in_dim, 4 * W))
            p[f"{side}.l{layer}.wh"] = _uniform(rng, (W, 4 * W))
            p[f"{side}.l{layer}.b"] = _uniform(rng, (4 * W,))
    p["attn.wc"] = _uniform(rng, (2 * W, W))
    p["attn.bc"] = _uniform(rng, (W,))
    p["out.w"] = _uniform(rng, (W, V))
    p["out.b"] = _uniform(rng, (V,))
    return p


def _init_transformer(config: ModelConfig, rng) -> dict[str, Tensor]:
    V, W = config.vocab_size, config.width
    std = W ** -0.5
    p: dict[str, Tensor] = {}
    p["src_embed"] = _normal(rng, (V, config.token_width), std)
    if config.use_pos:
        p["pos_embed"] = _normal(rng, (config.tagset_size, config.pos_dim), std)
    p["tgt_embed"] = _normal(rng, (V, W), std)

    def attn_block(prefix):
        # q/k/v projections carry no bias: a key bias cancels inside softmax
        # and would leave an unverifiable zero-gradient direction
        for name in ("wq", "wk", "wv", "wo"):
            p[f"{prefix}.{name}"] = _normal(rng, (W, W), std)
        p[f"{prefix}.bo"] = Tensor(np.zeros(W))

    def ln_block(prefix):
        p[f"{prefix}.g"] = Tensor(np.ones(W))
        p[f"{prefix}.b"] = Tensor(np.zeros(W))

    def ffn_block(prefix):
        p[f"{prefix}.w1"] = _normal(rng, (W, 4 * W), std)
        p[f"{prefix}.b1"] = Tensor(np.zeros(4 * W))
        p[f"{prefix}.w2"] = _normal(rng, (4 * W, W), (4 * W) ** -0.5)
        p[f"{prefix}.b2"] = Tensor(np.zeros(W))

    for layer in range(config.n_layers):
        attn_block(f"enc.l{layer}.attn")
        ln_block(f"enc.l{layer}.ln1")
        ffn_block(f"enc.l{layer}.ffn")
        ln_block(f"enc.l{layer}.ln2")
    for layer in range(config.n_layers):
        attn_block(f"dec.l{layer}.self")
        ln_block(f"dec.l{layer}.ln1")
        attn_block(f"dec.l{layer}.cross")
        ln_block(f"dec.l{layer}.ln2")
        ffn_block(f"dec.l{layer}.ffn")
        ln_block(f"dec.l{layer}.ln3")
    p["out.w"] = _normal(rng, (W, V), std)
    p["out.b"] = Tensor(np.zeros(V))
    return p


def parameter_count(params: dict[str, Tensor]) -> int:
    return sum(t.data.size for t in params.values())


# -- shared pieces --------------------------------------------------------------


def embed_with_pos(
    token_ids: np.ndarray,
    pos_ids: Optional[np.ndarray],
    token_table: Tensor,
    pos_table: Optional[Tensor],
) -> Tensor:
    """Token embedding, optionally concatenated with a POS feature embedding."""
    tok = T.embedding(token_table, token_ids)
    if pos_table is None:
        return tok
    if pos_ids is None:
        raise ValueError("model fuses POS features but the batch carries no tags")
    if token_ids.shape != pos_ids.shape:
        raise ValueError("token ids and POS ids must have the same shape")
    pos = T.embedding(pos_table, pos_ids)
    return T.concat([tok, pos], axis=-1)


def _source_embedding(config, params, src_ids, src_pos) -> Tensor:
    pos_table = params.get("pos_embed") if config.use_pos else None
    return embed_with_pos(src_ids, src_pos, params["src_embed"], pos_table)


def _dropout(x: Tensor, config, rng, training: bool) -> Tensor:
    if training and config.dropout > 0.0:
        if rng is None:
            raise ValueError("training forward pass needs a dropout rng")
        return T.dropout(x, config.dropout, rng)
    return x


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean token NLL over positions where mask is 1."""
    B, L, V = logits.shape
    ls = T.log_softmax(logits, axis=-1)
    picked = T.gather_last(ls, targets)          # (B, L)
    total = float(mask.sum())
    if total == 0:
        raise ValueError("loss undefined: every target position is masked")
    return T.mul(T.sum_(T.mul(picked, Tensor(mask))), -1.0 / total)


# -- LSTM ------------------------------------------------------------------------


def _lstm_cell(x: Tensor, h: Tensor, c: Tensor, wx, wh, b) -> tuple[Tensor, Tensor]:
    gates = T.add(T.add(T.matmul(x, wx), T.matmul(h, wh)), b)
    i, f, g, o = T.split(gates, 4, axis=-1)
    c_new = T.add(T.mul(T.sigmoid(f), c), T.mul(T.sigmoid(i), T.tanh(g)))
    h_new = T.mul(T.sigmoid(o), T.tanh(c_new))
    return h_new, c_new


def _run_lstm_stack(config, params, side, inputs, init_states, rng, training):
    """inputs: list over time of (B, W) tensors; returns per-time outputs of the
    top layer and the final (h, c) per layer (at the last step run)."""
    B = inputs[0].shape[0]
    W = config.width
    states = init_states or [
        (Tensor(np.zeros((B, W))), Tensor(np.zeros((B, W))))
        for _ in range(config.n_layers)
    ]
    per_layer_h: list[list[Tensor]] = [[] for _ in range(config.n_layers)]
    per_layer_c: list[list[Tensor]] = [[] for _ in range(config.n_layers)]
    for x in inputs:
        inp = x
        new_states = []
        for layer in range(config.n_layers):
            with scope(f"{side}.l{layer}"):
                h, c = states[layer]
                inp = _dropout(inp, config, rng, training)
                h_new, c_new = _lstm_cell(
                    inp, h, c,
                    params[f"{side}.l{layer}.wx"],
                    params[f"{side}.l{layer}.wh"],
                    params[f"{side}.l{layer}.b"],
                )
                new_states.append((h_new, c_new))
                per_layer_h[layer].append(h_new)
                per_layer_c[layer].append(c_new)
                inp = h_new
        states = new_states
    return per_layer_h, per_layer_c, states


def lstm_encode(config, params, src, src_len, src_pos, rng=None, training=False):
    """Returns (top-layer states (B,S,W), per-layer final (h,c) gathered at each
    sequence's true last position, key padding mask (B,S))."""
    with scope("enc.embed"):
        emb = _source_embedding(config, params, src, src_pos)  # (B,S,W)
    steps = _unstack_time(emb)
    per_h, per_c, _ = _run_lstm_stack(config, params, "enc", steps, None, rng, training)
    enc_top = T.stack(per_h[-1], axis=1)  # (B,S,W)
    last = src_len - 1
    finals = []
    for layer in range(config.n_layers):
        h_seq = T.stack(per_h[layer], axis=1)
        c_seq = T.stack(per_c[layer], axis=1)
        finals.append((T.select_time(h_seq, last), T.select_time(c_seq, last)))
    pad_mask = src == PAD_ID  # (B,S) True at padding
    return enc_top, finals, pad_mask


def _unstack_time(emb: Tensor) -> list[Tensor]:
    """(B, S, W) -> S tensors of (B, W), preserving gradient flow."""
    B, S, W = emb.shape
    flat = T.reshape(emb, (B, S * W))
    return T.split(flat, S, axis=1)


def _luong_attention(h_t: Tensor, enc_top: Tensor, pad_mask: np.ndarray) -> Tensor:
    """Dot-product attention of one decoder state over the encoder states."""
    B, W = h_t.shape
    q = T.reshape(h_t, (B, 1, W))
    scores = T.matmul(q, T.transpose(enc_top, (0, 2, 1)))  # (B,1,S)
    scores = T.masked_fill(scores, pad_mask[:, None, :], NEG_INF)
    attn = T.softmax(scores, axis=-1)
    ctx = T.matmul(attn, enc_top)  # (B,1,W)
    return T.reshape(ctx, (B, W))


def lstm_decode_step(config, params, states, enc_top, pad_mask, y_prev, rng=None, training=False):
    """One teacher-forcing or inference step.

    states: list of (h, c) per layer; y_prev: (B,) previous target ids.
    Returns (logits (B,V), new states, attentional hidden (B,W)).
    """
    with scope("dec.embed"):
        x = T.embedding(params["tgt_embed"], y_prev)  # (B,W)
    inp = x
    new_states = []
    for layer in range(config.n_layers):
        with scope(f"dec.l{layer}"):
            h, c = states[layer]
            inp = _dropout(inp, config, rng, training)
            h_new, c_new = _lstm_cell(
                inp, h, c,
                params[f"dec.l{layer}.wx"],
                params[f"dec.l{layer}.wh"],
                params[f"dec.l{layer}.b"],
            )
            new_states.append((h_new, c_new))
            inp = h_new
    with scope("dec.attn"):
        ctx = _luong_attention(inp, enc_top, pad_mask)
        fused = T.concat([ctx, inp], axis=-1)
        h_tilde = T.tanh(T.add(T.matmul(fused, params["attn.wc"]), params["attn.bc"]))
        h_tilde = _dropout(h_tilde, config, rng, training)
    with scope("dec.out"):
        logits = T.add(T.matmul(h_tilde, params["out.w"]), params["out.b"])
    return logits, new_states, h_tilde


def lstm_seq2seq_forward(config, params, batch: Batch, rng=None, training=False):
    """Teacher-forced forward pass: per-token logits plus mean NLL loss."""
    if config.arch != ARCH_LSTM:
        raise ValueError("config.arch must be lstm")
    enc_top, finals, pad_mask = lstm_encode(
        config, params, batch.src, batch.src_len, batch.src_pos, rng, training
    )
    states = finals
    step_logits = []
    for t in range(batch.tgt_in.shape[1]):
        logits_t, states, _ = lstm_decode_step(
            config, params, states, enc_top, pad_mask, batch.tgt_in[:, t], rng, training
        )
        step_logits.append(logits_t)
    logits = T.stack(step_logits, axis=1)  # (B,T,V)
    loss = cross_entropy(logits, batch.tgt_out, batch.tgt_mask)
    return logits, loss


# -- Transformer ------------------------------------------------------------------


def sinusoidal_encoding(length: int, width: int) -> np.ndarray:
    """Fixed sin/cos position table of shape (length, width)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    dim = np.arange(width, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(dim / 2.0)) / width)
    enc = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


def _layer_norm(x: Tensor, g: Tensor, b: Tensor, eps: float = 1e-5) -> Tensor:
    mu = T.mean_(x, axis=-1, keepdims=True)
    xc = T.add(x, T.mul(mu, -1.0))
    var = T.mean_(T.mul(xc, xc), axis=-1, keepdims=True)
    norm = T.div(xc, T.sqrt(T.add(var, eps)))
    return T.add(T.mul(norm, g), b)


def _multi_head(config, params, prefix, q_in, k_in, v_in, mask):
    """Scaled dot-product attention; mask is broadcastable to (B,h,Tq,Tk), True = blocked."""
    B, Tq, W = q_in.shape
    Tk = k_in.shape[1]
    H = config.n_heads
    dh = W // H

    def project(x, name, length):
        y = T.matmul(x, params[f"{prefix}.w{name}"])
        y = T.reshape(y, (B, length, H, dh))
        return T.transpose(y, (0, 2, 1, 3))  # (B,H,T,dh)

    q = project(q_in, "q", Tq)
    k = project(k_in, "k", Tk)
    v = project(v_in, "v", Tk)
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    if mask is not None:
        scores = T.masked_fill(scores, mask, NEG_INF)
    attn = T.softmax(scores, axis=-1)
    ctx = T.matmul(attn, v)  # (B,H,Tq,dh)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (B, Tq, W))
    return T.add(T.matmul(ctx, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def _ffn(params, prefix, x):
    inner = T.gelu(T.add(T.matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return T.add(T.matmul(inner, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def transformer_encode(config, params, src, src_pos, rng=None, training=False):
    B, S = src.shape
    W = config.width
    with scope("enc.embed"):
        emb = _source_embedding(config, params, src, src_pos)
        x = T.add(T.mul(emb, math.sqrt(W)), Tensor(sinusoidal_encoding(S, W)))
        x = _dropout(x, config, rng, training)
    pad_mask = src == PAD_ID
    key_mask = pad_mask[:, None, None, :]  # (B,1,1,S)
    for layer in range(config.n_layers):
        with scope(f"enc.l{layer}"):
            a = _multi_head(config, params, f"enc.l{layer}.attn", x, x, x, key_mask)
            x = _layer_norm(
                T.add(x, _dropout(a, config, rng, training)),
                params[f"enc.l{layer}.ln1.g"], params[f"enc.l{layer}.ln1.b"],
            )
            f = _ffn(params, f"enc.l{layer}.ffn", x)
            x = _layer_norm(
                T.add(x, _dropout(f, config, rng, training)),
                params[f"enc.l{layer}.ln2.g"], params[f"enc.l{layer}.ln2.b"],
            )
    return x, pad_mask


def transformer_decode(config, params, memory, src_pad_mask, tgt_in, rng=None, training=False):
    B, L = tgt_in.shape
    W = config.width
    with scope("dec.embed"):
        emb = T.embedding(params["tgt_embed"], tgt_in)
        y = T.add(T.mul(emb, math.sqrt(W)), Tensor(sinusoidal_encoding(L, W)))
        y = _dropout(y, config, rng, training)
    causal = np.triu(np.ones((L, L), dtype=bool), k=1)[None, None, :, :]
    cross_mask = src_pad_mask[:, None, None, :]
    for layer in range(config.n_layers):
        with scope(f"dec.l{layer}"):
            a = _multi_head(config, params, f"dec.l{layer}.self", y, y, y, causal)
            y = _layer_norm(
                T.add(y, _dropout(a, config, rng, training)),
                params[f"dec.l{layer}.ln1.g"], params[f"dec.l{layer}.ln1.b"],
            )
            a = _multi_head(config, params, f"dec.l{layer}.cross", y, memory, memory, cross_mask)
            y = _layer_norm(
                T.add(y, _dropout(a, config, rng, training)),
                params[f"dec.l{layer}.ln2.g"], params[f"dec.l{layer}.ln2.b"],
            )
            f = _ffn(params, f"dec.l{layer}.ffn", y)
            y = _layer_norm(
                T.add(y, _dropout(f, config, rng, training)),
                params[f"dec.l{layer}.ln3.g"], params[f"dec.l{layer}.ln3.b"],
            )
    with scope("dec.out"):
        logits = T.add(T.matmul(y, params["out.w"]), params["out.b"])
    return logits


def transformer_forward(config, params, batch: Batch, rng=None, training=False):
    """Teacher-forced forward pass: per-token logits plus mean NLL loss."""
    if config.arch != ARCH_TRANSFORMER:
        raise ValueError("config.arch must be transformer")
    memory, pad_mask = transformer_encode(
        config, params, batch.src, batch.src_pos, rng, training
    )
    logits = transformer_decode(
        config, params, memory, pad_mask, batch.tgt_in, rng, training
    )
    loss = cross_entropy(logits, batch.tgt_out, batch.tgt_mask)
    return logits, loss


def seq2seq_forward(config, params, batch: Batch, rng=None, training=False):
    if config.arch == ARCH_LSTM:
        return lstm_seq2seq_forward(config, params, batch, rng, training)
    return transformer_forward(config, params, batch, rng, training)
