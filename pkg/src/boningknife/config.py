"""Run configuration: model dimensions, thresholds, and training schedule."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0
    tau_mention: float = 0.5
    tau_ent: float = 0.5
    tau_boundary: float = 0.5  # start/end-pair candidate ablation threshold
    window: int = 2
    neighbor_window: int = 128
    d_model: int = 128
    d_low: int = 84
    d_span: int = 128
    heads: int = 4
    dual_heads: int = 16
    base_blocks: int = 2
    max_span_len: int = 64
    max_len: int = 128
    alternation_period: int = 1  # 0 = optimize the summed objective each step
    beta: float = 0.5  # adaptive loss-weight exponent
    loss_weighting: str = "adaptive"  # adaptive | uniform
    lr_decay: bool = False  # linear decay to 0 over the configured epochs
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only
    early_stop_f1: float = 0.0  # stop once dev micro-F1 reaches this; 0 = off
    disable_entity_detection: bool = False  # ablation: drop the entity-token sub-task
    start_end_candidates: bool = False  # ablation: candidates from start/end pairs

    def validate(self) -> None:
        positive = ["batch_size", "lr", "d_model", "d_low", "d_span",
                    "heads", "dual_heads", "max_span_len", "max_len"]
        for field in positive:
            if getattr(self, field) <= 0:
                raise ConfigError(f"config field '{field}' must be positive")
        for field in ["epochs", "window", "neighbor_window", "base_blocks",
                      "alternation_period", "checkpoint_every"]:
            if getattr(self, field) < 0:
                raise ConfigError(f"config field '{field}' must be non-negative")
        for field in ["tau_mention", "tau_ent", "tau_boundary"]:
            v = getattr(self, field)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"config field '{field}' must lie in (0, 1)")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.beta < 0:
            raise ConfigError("config field 'beta' must be non-negative")
        if self.loss_weighting not in ("adaptive", "uniform"):
            raise ConfigError("loss_weighting must be 'adaptive' or 'uniform'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg
