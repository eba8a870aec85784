"""Toy-scale differentiable seq2seq stack with deterministic training."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    ARCH_LSTM, ARCH_TRANSFORMER, POS_CARVE, POS_GROW,
    ModelConfig, OptimizerHyper, pos_embedding_dim,
)
from .decoding import decode_ids, greedy_decode_batch, translate
from .gradcheck import grad_check, grad_check_fn
from .models import (
    BOS_ID, EOS_ID, PAD_ID, UNK_ID, Batch,
    embed_with_pos, init_params, lstm_seq2seq_forward, make_batch,
    parameter_count, seq2seq_forward, sinusoidal_encoding, transformer_forward,
)
from .optim import adam_step, init_adam_state
from .tensor import NonFiniteError, Tensor
from .training import (
    EncodedCorpus, TrainingDivergedError, checkpoint_merges, checkpoint_vocab,
    encode_corpus, stream_rng, train,
)

__all__ = [
    "ARCH_LSTM", "ARCH_TRANSFORMER", "POS_CARVE", "POS_GROW",
    "BOS_ID", "EOS_ID", "PAD_ID", "UNK_ID",
    "Batch", "Checkpoint", "CheckpointError", "EncodedCorpus", "ModelConfig",
    "NonFiniteError", "OptimizerHyper", "Tensor", "TrainingDivergedError",
    "adam_step", "checkpoint_merges", "checkpoint_vocab", "decode_ids",
    "embed_with_pos", "encode_corpus", "grad_check", "grad_check_fn",
    "greedy_decode_batch", "init_adam_state", "init_params", "load_checkpoint",
    "lstm_seq2seq_forward", "make_batch", "parameter_count", "pos_embedding_dim",
    "save_checkpoint", "seq2seq_forward", "sinusoidal_encoding", "stream_rng",
    "train", "transformer_forward", "translate",
]
