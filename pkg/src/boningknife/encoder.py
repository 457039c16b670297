"""Token encoder: embedding + full-visibility attention stack, and the
dual-branch layer that fuses a global-visibility branch with a
mention-focus branch into one representation per position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .data import BEGIN, END, UNK
from .errors import DataValidationError
from .layers import (AttentionBlockParams, LinearParams, ParamSet,
                     attention_block, make_attention_block, make_linear,
                     resolve_heads)
from .masks import MaskMatrix, global_mask


@dataclass
class Sentence:
    """Real-token id sequence; sentinels are added at encode time."""

    ids: list[int]

    def __post_init__(self):
        if not self.ids:
            raise DataValidationError("empty sentence")
        if any(i in (BEGIN, END) for i in self.ids):
            raise DataValidationError("sentinel ids may not appear mid-sentence")

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass
class EncoderParams:
    emb: Tensor
    blocks: list[AttentionBlockParams]
    dual_global: AttentionBlockParams
    dual_focus: AttentionBlockParams
    dual_proj: LinearParams
    vocab_size: int


def make_encoder(ps: ParamSet, cfg: TrainConfig, vocab_size: int,
                 rng: np.random.Generator) -> EncoderParams:
    d = cfg.d_model
    dual_heads = resolve_heads(d, cfg.dual_heads)
    return EncoderParams(
        emb=ps.normal("encoder.emb", (vocab_size, d), 0.5, rng),
        blocks=[make_attention_block(ps, f"encoder.base{k}", d, cfg.heads, rng)
                for k in range(cfg.base_blocks)],
        dual_global=make_attention_block(ps, "encoder.dual_global", d, dual_heads, rng),
        dual_focus=make_attention_block(ps, "encoder.dual_focus", d, dual_heads, rng),
        dual_proj=make_linear(ps, "encoder.dual_proj", 2 * d, d, rng),
        vocab_size=vocab_size,
    )


def pad_ids(sentence: Sentence, vocab_size: int) -> np.ndarray:
    """BEGIN + tokens + END, with out-of-vocabulary ids mapped to UNK."""
    ids = [i if 0 <= i < vocab_size else UNK for i in sentence.ids]
    return np.array([BEGIN] + ids + [END], dtype=np.intp)


def encode_base(sentence: Sentence, p: EncoderParams) -> Tensor:
    """Embedding lookup + the full-visibility attention stack -> [N+2, d]."""
    padded = pad_ids(sentence, p.vocab_size)
    x = ad.gather_rows(p.emb, padded)
    mask = global_mask(sentence.n).bits
    for block in p.blocks:
        x = attention_block(x, mask, block)
    return x


def dual_info_forward(base: Tensor, mask_global: MaskMatrix, mask_focus: MaskMatrix,
                      p: EncoderParams, weights_out: dict | None = None) -> Tensor:
    """Fuse global-branch and focus-branch attention over the same base.

    Both branches run on `base`; their outputs are concatenated on the
    feature axis and projected back to d_model. When weights_out is a
    dict, head-averaged attention weights land in it under 'global' and
    'focus'.
    """
    if mask_global.size != base.data.shape[0] or mask_focus.size != base.data.shape[0]:
        raise ValueError(
            f"mask size {mask_global.size}/{mask_focus.size} does not match "
            f"sequence length {base.data.shape[0]}")
    wg: list | None = [] if weights_out is not None else None
    wf: list | None = [] if weights_out is not None else None
    g = attention_block(base, mask_global.bits, p.dual_global, wg)
    f = attention_block(base, mask_focus.bits, p.dual_focus, wf)
    if weights_out is not None:
        weights_out["global"] = wg[0]
        weights_out["focus"] = wf[0]
    return ad.linear(ad.concat([g, f], axis=-1), p.dual_proj.w, p.dual_proj.b)
