"""Model and optimizer hyperparameter containers."""

from __future__ import annotations

from dataclasses import dataclass, asdict

ARCH_LSTM = "lstm"
ARCH_TRANSFORMER = "transformer"

POS_CARVE = "carve"  # token embedding narrows so total width stays d_model
POS_GROW = "grow"    # token embedding keeps d_model; POS dims are appended


def pos_embedding_dim(tagset_size: int, exponent: float = 0.7) -> int:
    """Feature-embedding width: tagset_size ** exponent, rounded half-to-even, min 1."""
    if tagset_size < 1:
        raise ValueError("tagset_size must be >= 1")
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    return max(1, round(tagset_size ** exponent))


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    dropout: float = 0.1
    use_pos: bool = False
    pos_exponent: float = 0.7
    pos_fusion: str = POS_CARVE
    tagset_size: int = 18
    max_len: int = 64

    def __post_init__(self):
        if self.arch not in (ARCH_LSTM, ARCH_TRANSFORMER):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.arch == ARCH_TRANSFORMER and self.width % self.n_heads != 0:
            raise ValueError(
                f"model width {self.width} not divisible by {self.n_heads} heads"
            )
        if self.pos_fusion not in (POS_CARVE, POS_GROW):
            raise ValueError(f"unknown pos_fusion {self.pos_fusion!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.use_pos:
            pd = self.pos_dim
            if not 1 <= pd < self.d_model:
                raise ValueError(
                    f"pos_dim {pd} must lie in [1, d_model={self.d_model})"
                )

    @property
    def pos_dim(self) -> int:
        if not self.use_pos:
            return 0
        return pos_embedding_dim(self.tagset_size, self.pos_exponent)

    @property
    def token_width(self) -> int:
        """Width of the token embedding table."""
        if self.use_pos and self.pos_fusion == POS_CARVE:
            return self.d_model - self.pos_dim
        return self.d_model

    @property
    def width(self) -> int:
        """Width seen by every layer above the embeddings."""
        if self.use_pos and self.pos_fusion == POS_GROW:
            return self.d_model + self.pos_dim
        return self.d_model

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class OptimizerHyper:
    """Adam settings; eta is the base step scale fed to the schedule."""

    eta: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    schedule: str = "constant"
    warmup_steps: int = 400

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.schedule not in ("constant", "inverse_sqrt_warmup"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def learning_rate(self, t: int, d_model: int | None = None) -> float:
        """Step scale at update t (1-based)."""
        if t < 1:
            raise ValueError("step must be >= 1")
        if self.schedule == "constant":
            # raw Adam with step scale 1 diverges; constant mode runs at eta/1000
            return 1e-3 * self.eta
        if d_model is None:
            raise ValueError("inverse_sqrt_warmup schedule needs d_model")
        return (
            self.eta
            * d_model ** -0.5
            * min(t ** -0.5, t * self.warmup_steps ** -1.5)
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerHyper":
        return cls(**d)
