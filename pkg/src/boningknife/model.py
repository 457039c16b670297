"""Full nested-NER model: shared encoder, mention tagger, type classifier.

The forward pass is two-stage: a first, gradient-free pass runs the dual
branch with the global mask on both sides to get provisional entity-token
probabilities, which define the focus mask for the second (taped) pass.
Mask construction is a discrete selection and never carries gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape, Tensor, pause_recording
from .config import TrainConfig
from .encoder import (EncoderParams, Sentence, dual_info_forward, encode_base,
                      make_encoder)
from .errors import DataValidationError
from .layers import ParamSet, apply_mlp
from .masks import focus_mask, global_mask
from .tagger import (TaggerParams, biaffine_span_scores, build_tagger_labels,
                     enumerate_spans, generate_candidates, make_tagger,
                     mention_scores, project_boundaries,
                     start_end_pair_candidates)
from .typer import (TyperParams, classify, four_level_representation,
                    make_typer, position_fused, two_level_attention,
                    type_labels)

LOSS_NAMES = ("start", "end", "entity", "mention")


@dataclass
class EncodeResult:
    sentence: Sentence
    r: Tensor  # dual-info representation [N+2, d]
    attention: dict = field(default_factory=dict)


@dataclass
class ForwardResult:
    n: int
    spans: tuple[np.ndarray, np.ndarray]
    p_start: np.ndarray
    p_end: np.ndarray
    p_entity: np.ndarray
    p_mention: np.ndarray
    candidates: list[tuple[int, int, float]]
    predicted: list[tuple[int, int, str]]
    losses: dict[str, Tensor]
    type_loss: Tensor | None
    type_probs: np.ndarray | None
    attention: dict


class NestedNerModel:
    """Parameter container plus the staged forward passes."""

    def __init__(self, cfg: TrainConfig, vocab_size: int, type_names: list[str]):
        cfg.validate()
        self.cfg = cfg
        self.type_names = list(type_names)
        self.type_index = {t: i for i, t in enumerate(self.type_names)}
        rng = np.random.default_rng(cfg.seed)
        self.params = ParamSet()
        self.encoder: EncoderParams = make_encoder(self.params, cfg, vocab_size, rng)
        self.tagger: TaggerParams = make_tagger(self.params, cfg, rng)
        self.typer: TyperParams = make_typer(self.params, cfg, len(type_names), rng)

    # parameter groups for alternating optimization
    def encoder_param_names(self) -> list[str]:
        return self.params.names("encoder.")

    def tagger_group(self) -> list[str]:
        return self.params.names("encoder.") + self.params.names("tagger.")

    def type_group(self) -> list[str]:
        return self.params.names("encoder.") + self.params.names("typer.")

    def n_parameters(self) -> int:
        return self.params.count()

    # ------------------------------------------------------------------
    # staged forward
    # ------------------------------------------------------------------

    def encode(self, sentence: Sentence, collect_attention: bool = False) -> EncodeResult:
        """Base encoder + two-pass dual-branch layer."""
        cfg = self.cfg
        n = sentence.n
        base = encode_base(sentence, self.encoder)
        mask_g = global_mask(n)
        if cfg.disable_entity_detection:
            provisional = np.zeros(n)
        else:
            with pause_recording():
                base_frozen = Tensor(base.data)
                r1 = dual_info_forward(base_frozen, mask_g, mask_g, self.encoder)
                ent_logits = apply_mlp(self._real_rows(r1, n), self.tagger.entity_head)
                provisional = ad.softmax_probs(ent_logits)[:, 1]
        mask_f = focus_mask(provisional, cfg.window, cfg.tau_ent)
        attention: dict = {}
        r = dual_info_forward(base, mask_g, mask_f, self.encoder,
                              attention if collect_attention else None)
        return EncodeResult(sentence, r, attention)

    @staticmethod
    def _real_rows(r: Tensor, n: int) -> Tensor:
        return ad.gather_rows(r, np.arange(1, n + 1, dtype=np.intp))

    def tagger_stage(self, enc: EncodeResult, gold_entities=None, train: bool = False):
        """Boundary heads, span grid, mention probabilities, candidates.

        Returns (probs dict, losses dict, spans, candidates). Losses are
        empty unless training with gold.
        """
        cfg = self.cfg
        n = enc.sentence.n
        r_tokens = self._real_rows(enc.r, n)
        h_start, h_end = project_boundaries(r_tokens, self.tagger)
        starts, ends = enumerate_spans(n, cfg.max_span_len)

        start_logits = apply_mlp(h_start, self.tagger.start_head)
        end_logits = apply_mlp(h_end, self.tagger.end_head)
        span_vec = biaffine_span_scores(h_start, h_end, self.tagger.biaffine,
                                        starts, ends)
        if cfg.disable_entity_detection:
            p_entity_t = None
            p_entity = np.full(n, 0.5)
        else:
            entity_logits = apply_mlp(r_tokens, self.tagger.entity_head)
            p_entity_t = ad.binary_positive(entity_logits)
            p_entity = p_entity_t.data
        mention_logits, _ = mention_scores(span_vec, p_entity_t, starts, ends,
                                           self.tagger)

        probs = {
            "start": ad.softmax_probs(start_logits)[:, 1],
            "end": ad.softmax_probs(end_logits)[:, 1],
            "entity": p_entity,
            "mention": ad.softmax_probs(mention_logits)[:, 1],
        }

        losses: dict[str, Tensor] = {}
        if train and gold_entities is not None:
            labels = build_tagger_labels(n, gold_entities, cfg.max_span_len)
            losses["start"] = ad.cross_entropy_mean(start_logits, labels.y_start)
            losses["end"] = ad.cross_entropy_mean(end_logits, labels.y_end)
            if not cfg.disable_entity_detection:
                losses["entity"] = ad.cross_entropy_mean(entity_logits, labels.y_entity)
            losses["mention"] = ad.cross_entropy_mean(mention_logits, labels.y_mention)

        gold_spans = None
        if train and gold_entities is not None:
            cap = cfg.max_span_len
            gold_spans = [(s, e) for s, e, _ in gold_entities if e - s + 1 <= cap]
        if cfg.start_end_candidates:
            candidates = start_end_pair_candidates(
                probs["start"], probs["end"], cfg.tau_boundary, cfg.max_span_len,
                gold_spans)
        else:
            candidates = generate_candidates(probs["mention"], starts, ends,
                                             cfg.tau_mention, gold_spans)
        return probs, losses, (starts, ends), candidates

    def typing_stage(self, enc: EncodeResult, candidates, gold_entities=None,
                     train: bool = False):
        """Classify candidate spans. Returns (type_probs, loss, predicted).

        An empty candidate list yields (None, None, []).
        """
        if not candidates:
            return None, None, []
        spans = [(l, r) for l, r, _ in candidates]
        h = position_fused(enc.r, self.typer)
        matt, natt = two_level_attention(h, spans, enc.sentence.n,
                                         self.cfg.neighbor_window, self.typer)
        fused = four_level_representation(enc.r, h, matt, natt, spans, self.typer)
        logits = classify(fused, self.typer)
        probs = ad.softmax_probs(logits)
        loss = None
        if train and gold_entities is not None:
            labels = type_labels(spans, gold_entities, self.type_index)
            loss = ad.cross_entropy_mean(logits, labels)
        predicted = []
        for (l, r), row in zip(spans, probs):
            k = int(np.argmax(row))
            if k != 0:
                predicted.append((l, r, self.type_names[k - 1]))
        return probs, loss, predicted

    def run_sentence(self, sentence: Sentence, gold_entities=None,
                     train: bool = False, collect_attention: bool = False
                     ) -> ForwardResult:
        enc = self.encode(sentence, collect_attention)
        probs, losses, spans, candidates = self.tagger_stage(
            enc, gold_entities, train)
        type_probs, type_loss, predicted = self.typing_stage(
            enc, candidates, gold_entities, train)
        return ForwardResult(
            n=sentence.n, spans=spans,
            p_start=probs["start"], p_end=probs["end"],
            p_entity=probs["entity"], p_mention=probs["mention"],
            candidates=candidates, predicted=predicted,
            losses=losses, type_loss=type_loss, type_probs=type_probs,
            attention=enc.attention,
        )

    def predict(self, sentence: Sentence, collect_attention: bool = False
                ) -> ForwardResult:
        """Inference: no gold, no taping, candidates from thresholds only."""
        with pause_recording():
            return self.run_sentence(sentence, train=False,
                                     collect_attention=collect_attention)

    # ------------------------------------------------------------------
    # state
    # ------------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise DataValidationError(f"checkpoint is missing parameter '{name}'")
            val = np.asarray(arrays[name])
            if val.shape != p.data.shape:
                raise DataValidationError(
                    f"checkpoint parameter '{name}' has shape {val.shape}, "
                    f"expected {p.data.shape}")
            p.data = val.astype(p.data.dtype)
