"""Model and training hyperparameters.

Defaults follow the training protocol this repo standardizes on (6 epochs,
batch 8, lr 1e-4, gradient accumulation every 2 steps, eval every 100
optimizer steps, 3 retained checkpoints). Dimensions and regularization
values are repo defaults, configurable per run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from ..labels import NUM_CLASSES


@dataclass(frozen=True)
class ModelConfig:
    video_dim: int = 256
    text_dim: int = 256
    proj_dim: int = 256
    # Output widths of the fusion stack's hidden layers. The stack input is
    # 2*proj_dim for concat fusion and proj_dim for attention fusion, so the
    # default chain is 512 -> 256 -> 128 (concat) or 256 -> 256 -> 128.
    fusion_hidden_dims: tuple[int, ...] = (256, 128)
    dropout_p: float = 0.1
    fusion_kind: str = "concat"  # "concat" | "attention"
    attention_heads: int = 4
    attention_layers: int = 1
    label_smoothing_eps: float = 0.1
    num_classes: int = NUM_CLASSES
    use_layernorm: bool = True

    def __post_init__(self):
        if self.fusion_kind not in ("concat", "attention"):
            raise ValueError(f"unknown fusion_kind {self.fusion_kind!r}")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must be in [0, 1)")
        if not 0 <= self.label_smoothing_eps < 1:
            raise ValueError("label_smoothing_eps must be in [0, 1)")
        if self.fusion_kind == "attention" and self.proj_dim % self.attention_heads:
            raise ValueError("proj_dim must be divisible by attention_heads")
        if min(self.video_dim, self.text_dim, self.proj_dim, self.num_classes) <= 0:
            raise ValueError("dimensions must be positive")
        if any(d <= 0 for d in self.fusion_hidden_dims):
            raise ValueError("fusion_hidden_dims must be positive")
        object.__setattr__(self, "fusion_hidden_dims", tuple(self.fusion_hidden_dims))

    @property
    def stack_input_dim(self) -> int:
        return 2 * self.proj_dim if self.fusion_kind == "concat" else self.proj_dim

    @property
    def head_input_dim(self) -> int:
        dims = self.fusion_hidden_dims
        return dims[-1] if dims else self.stack_input_dim

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "fusion_hidden_dims" in d:
            d["fusion_hidden_dims"] = tuple(d["fusion_hidden_dims"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 6
    batch_size: int = 8
    lr: float = 1e-4
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    grad_accum_steps: int = 2
    eval_every_steps: int = 100
    checkpoints_retained: int = 3
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.grad_accum_steps) <= 0:
            raise ValueError("epochs/batch_size/grad_accum_steps must be positive")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        if not 0 <= self.warmup_ratio < 1:
            raise ValueError("warmup_ratio must be in [0, 1)")
        if self.eval_every_steps <= 0 or self.checkpoints_retained <= 0:
            raise ValueError("eval_every_steps/checkpoints_retained must be positive")

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)
