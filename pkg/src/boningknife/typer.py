"""Type classifier: assigns an entity type (or the reserved non-entity
class 0) to each mention candidate via span-restricted and
complement-restricted attention plus a four-part fused representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .errors import DimensionError
from .layers import (AttentionBlockParams, LinearParams, MlpParams, ParamSet,
                     apply_mlp, attention_block, make_attention_block,
                     make_linear, make_mlp)
from .masks import mention_mask, neighbor_mask, stack_mask_bits


@dataclass
class TyperParams:
    pos: Tensor  # [max_len + 2, d_model] learned absolute positions
    fuse: LinearParams  # [R; P] -> H
    mention_block: AttentionBlockParams
    neighbor_block: AttentionBlockParams
    e_sentence: LinearParams
    e_position: LinearParams
    e_mention: LinearParams
    e_neighbor: LinearParams
    t_fuse: LinearParams
    type_head: MlpParams
    n_classes: int  # entity types + non-entity


def make_typer(ps: ParamSet, cfg: TrainConfig, n_types: int,
               rng: np.random.Generator) -> TyperParams:
    d = cfg.d_model
    return TyperParams(
        pos=ps.normal("typer.pos", (cfg.max_len + 2, d), 0.02, rng),
        fuse=make_linear(ps, "typer.fuse", 2 * d, d, rng),
        mention_block=make_attention_block(ps, "typer.mention_block", d, cfg.heads, rng),
        neighbor_block=make_attention_block(ps, "typer.neighbor_block", d, cfg.heads, rng),
        e_sentence=make_linear(ps, "typer.e_sentence", 2 * d, d, rng),
        e_position=make_linear(ps, "typer.e_position", 2 * d, d, rng),
        e_mention=make_linear(ps, "typer.e_mention", 2 * d, d, rng),
        e_neighbor=make_linear(ps, "typer.e_neighbor", 2 * d, d, rng),
        t_fuse=make_linear(ps, "typer.t_fuse", 4 * d, d, rng),
        type_head=make_mlp(ps, "typer.type_head", d, d, n_types + 1, rng),
        n_classes=n_types + 1,
    )


def position_fused(r: Tensor, p: TyperParams) -> Tensor:
    """H = Linear([R; position]) per token, positions indexed absolutely."""
    length = r.data.shape[0]
    if length > p.pos.data.shape[0]:
        raise DimensionError(
            f"sequence length {length} exceeds position table "
            f"{p.pos.data.shape[0]}")
    pos_rows = ad.gather_rows(p.pos, np.arange(length, dtype=np.intp))
    return ad.linear(ad.concat([r, pos_rows], axis=-1), p.fuse.w, p.fuse.b)


def two_level_attention(h: Tensor, spans, n_tokens: int, neighbor_window: int,
                        p: TyperParams) -> tuple[Tensor, Tensor]:
    """Batched per-candidate attention: mention rows see only the span,
    neighbor rows see only the (window-clipped) complement plus sentinels.

    spans: list of (start, end) real-token pairs. Returns two [C, N+2, d]
    tensors sharing parameters across candidates.
    """
    m_bits = stack_mask_bits([mention_mask(l, r, n_tokens) for l, r in spans])
    n_bits = stack_mask_bits(
        [neighbor_mask(l, r, n_tokens, neighbor_window) for l, r in spans])
    matt = attention_block(h, m_bits, p.mention_block)
    natt = attention_block(h, n_bits, p.neighbor_block)
    return matt, natt


def four_level_representation(r: Tensor, h: Tensor, matt: Tensor, natt: Tensor,
                              spans, p: TyperParams) -> Tensor:
    """Fuse sentence-, position-, mention-, and neighbor-level vectors per
    candidate -> [C, d].

    Padded coordinates: span (l, r) occupies rows l+1..r+1; the previous /
    next neighbor rows l and r+2 hit the sentinels at sentence edges.
    """
    c = len(spans)
    last = r.data.shape[0] - 1
    ls = np.array([l for l, _ in spans], dtype=np.intp)
    rs = np.array([e for _, e in spans], dtype=np.intp)

    sent_pair = ad.concat([ad.gather_rows(r, [0]), ad.gather_rows(r, [last])], axis=-1)
    e_sentence = ad.expand0(ad.reshape(
        ad.linear(sent_pair, p.e_sentence.w, p.e_sentence.b), (-1,)), c)

    h_l = ad.gather_rows(h, ls + 1)
    h_r = ad.gather_rows(h, rs + 1)
    e_position = ad.linear(ad.concat([h_l, h_r], axis=-1),
                           p.e_position.w, p.e_position.b)

    m_l = ad.take_per_batch(matt, ls + 1)
    m_r = ad.take_per_batch(matt, rs + 1)
    e_mention = ad.linear(ad.concat([m_l, m_r], axis=-1),
                          p.e_mention.w, p.e_mention.b)

    n_prev = ad.take_per_batch(natt, ls)
    n_next = ad.take_per_batch(natt, rs + 2)
    e_neighbor = ad.linear(ad.concat([n_prev, n_next], axis=-1),
                           p.e_neighbor.w, p.e_neighbor.b)

    fused = ad.concat([e_sentence, e_position, e_mention, e_neighbor], axis=-1)
    return ad.linear(fused, p.t_fuse.w, p.t_fuse.b)


def classify(t: Tensor, p: TyperParams) -> Tensor:
    """Type logits [C, n_classes]; class 0 is non-entity."""
    return apply_mlp(t, p.type_head)


def type_labels(spans, gold_entities, type_index: dict[str, int]) -> np.ndarray:
    """Gold class per candidate: exact span match gets the entity type's
    class id, everything else class 0 (non-entity)."""
    gold = {(s, e): type_index[t] + 1 for s, e, t in gold_entities
            if t in type_index}
    return np.array([gold.get((l, r), 0) for l, r in spans], dtype=np.intp)
