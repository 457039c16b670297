"""Mention tagger: scores every candidate span from boundary evidence
(start/end token of the span, per-token entity membership, span region)
and emits a thresholded mention candidate set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .layers import MlpParams, ParamSet, apply_mlp, make_mlp


@dataclass
class BiaffineParams:
    u: Tensor  # [d_low, d_span, d_low]
    w_start: Tensor  # [d_low, d_span]
    w_end: Tensor  # [d_low, d_span]
    b: Tensor  # [d_span]


@dataclass
class TaggerParams:
    start_proj: MlpParams
    end_proj: MlpParams
    biaffine: BiaffineParams
    start_head: MlpParams
    end_head: MlpParams
    entity_head: MlpParams
    mention_head: MlpParams


def make_tagger(ps: ParamSet, cfg: TrainConfig, rng: np.random.Generator) -> TaggerParams:
    d, dl, dsp = cfg.d_model, cfg.d_low, cfg.d_span
    return TaggerParams(
        start_proj=make_mlp(ps, "tagger.start_proj", d, d, dl, rng),
        end_proj=make_mlp(ps, "tagger.end_proj", d, d, dl, rng),
        biaffine=BiaffineParams(
            ps.normal("tagger.biaffine.u", (dl, dsp, dl), 1.0 / dl, rng),
            ps.weight("tagger.biaffine.w_start", dl, dsp, rng),
            ps.weight("tagger.biaffine.w_end", dl, dsp, rng),
            ps.zeros("tagger.biaffine.b", (dsp,)),
        ),
        start_head=make_mlp(ps, "tagger.start_head", dl, dl, 2, rng),
        end_head=make_mlp(ps, "tagger.end_head", dl, dl, 2, rng),
        entity_head=make_mlp(ps, "tagger.entity_head", d, d, 2, rng),
        mention_head=make_mlp(ps, "tagger.mention_head", dsp, dsp, 2, rng),
    )


def enumerate_spans(n_tokens: int, max_span_len: int) -> tuple[np.ndarray, np.ndarray]:
    """All (start, end) pairs with start <= end and length <= cap, sorted."""
    starts, ends = [], []
    for l in range(n_tokens):
        for r in range(l, min(l + max_span_len, n_tokens)):
            starts.append(l)
            ends.append(r)
    return np.array(starts, dtype=np.intp), np.array(ends, dtype=np.intp)


@dataclass
class TaggerLabels:
    y_start: np.ndarray  # [N] binary
    y_end: np.ndarray  # [N] binary
    y_entity: np.ndarray  # [N] binary: token inside >= 1 gold entity
    y_mention: np.ndarray  # aligned to enumerate_spans order, binary


def build_tagger_labels(n_tokens: int, entities, max_span_len: int) -> TaggerLabels:
    """Derive the four detection targets from a gold (start, end, type) list."""
    y_start = np.zeros(n_tokens, dtype=np.intp)
    y_end = np.zeros(n_tokens, dtype=np.intp)
    y_entity = np.zeros(n_tokens, dtype=np.intp)
    gold_spans = set()
    dropped = 0
    for s, e, _ in entities:
        if e - s + 1 > max_span_len:
            dropped += 1
        else:
            gold_spans.add((s, e))
        y_start[s] = 1
        y_end[e] = 1
        y_entity[s : e + 1] = 1
    if dropped:
        warnings.warn(f"{dropped} gold spans longer than max_span_len={max_span_len} "
                      "dropped from mention labels")
    starts, ends = enumerate_spans(n_tokens, max_span_len)
    y_mention = np.fromiter(
        ((int(l), int(r)) in gold_spans for l, r in zip(starts, ends)),
        dtype=np.intp, count=len(starts))
    return TaggerLabels(y_start, y_end, y_entity, y_mention)


def project_boundaries(r_tokens: Tensor, p: TaggerParams) -> tuple[Tensor, Tensor]:
    """Independent low-dimensional start/end projections of each token."""
    return apply_mlp(r_tokens, p.start_proj), apply_mlp(r_tokens, p.end_proj)


def biaffine_span_scores(h_start: Tensor, h_end: Tensor, p: BiaffineParams,
                         starts: np.ndarray, ends: np.ndarray) -> Tensor:
    """Span vectors for the listed (start, end) pairs -> [S, d_span].

    score(i, j) = h_start[i] U h_end[j] + h_start[i] W_s + h_end[j] W_e + b
    per output channel.
    """
    n = h_start.data.shape[0]
    d_span = p.b.data.shape[0]
    grid = ad.span_bilinear(h_start, h_end, p.u)
    lin_s = ad.reshape(ad.matmul(h_start, p.w_start), (n, 1, d_span))
    lin_e = ad.reshape(ad.matmul(h_end, p.w_end), (1, n, d_span))
    full = ad.add(ad.add(ad.add(grid, lin_s), lin_e), p.b)
    flat = ad.reshape(full, (n * n, d_span))
    return ad.gather_rows(flat, starts * n + ends)


def mention_scores(span_vec: Tensor, p_entity: Tensor | None,
                   starts: np.ndarray, ends: np.ndarray,
                   p: TaggerParams) -> tuple[Tensor, Tensor | None]:
    """Mention logits per span; the span vector is scaled by the product of
    its tokens' entity probabilities before the head (long spans crossing
    non-entity tokens get suppressed).

    p_entity None (ablation) skips the scaling. Returns (logits, g).
    """
    if p_entity is None:
        return apply_mlp(span_vec, p.mention_head), None
    g = ad.span_products(p_entity, starts, ends)
    scaled = ad.mul(span_vec, ad.reshape(g, (len(starts), 1)))
    return apply_mlp(scaled, p.mention_head), g


def generate_candidates(p_mention: np.ndarray, starts: np.ndarray, ends: np.ndarray,
                        tau_mention: float, gold_spans=None) -> list[tuple[int, int, float]]:
    """Spans with p_mention >= tau, sorted by (start, end).

    gold_spans (training mode) are unioned in so the typing stage always
    sees its positives; prediction mode passes None.
    """
    keep = {(int(l), int(r)): float(pm)
            for l, r, pm in zip(starts, ends, p_mention) if pm >= tau_mention}
    if gold_spans is not None:
        predicted = dict(keep)
        lookup = {(int(l), int(r)): float(pm)
                  for l, r, pm in zip(starts, ends, p_mention)}
        for s, e in gold_spans:
            if (s, e) not in predicted:
                keep[(s, e)] = lookup.get((s, e), 1.0)
    return [(l, r, keep[(l, r)]) for l, r in sorted(keep)]


def start_end_pair_candidates(p_start: np.ndarray, p_end: np.ndarray,
                              tau: float, max_span_len: int,
                              gold_spans=None) -> list[tuple[int, int, float]]:
    """Ablation candidate strategy: cross product of confident start and end
    tokens (start <= end, length-capped), ignoring span-level evidence.
    """
    n = len(p_start)
    keep = {}
    for l in range(n):
        if p_start[l] < tau:
            continue
        for r in range(l, min(l + max_span_len, n)):
            if p_end[r] >= tau:
                keep[(l, r)] = float(p_start[l] * p_end[r])
    if gold_spans is not None:
        for s, e in gold_spans:
            keep.setdefault((s, e), 1.0)
    return [(l, r, keep[(l, r)]) for l, r in sorted(keep)]
