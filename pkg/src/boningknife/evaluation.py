"""Micro precision/recall/F1 with flat/nested breakdown and candidate-stage
statistics.

Matching is exact on (start, end, type): a right-span wrong-type
prediction is both a false positive and a false negative. An entity is
NESTED when it shares at least one token position with another entity in
the same sentence (any overlap, not just containment), FLAT otherwise;
gold entities are flagged from the gold structure and predictions from
the predicted structure, then each subset is scored independently.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .encoder import Sentence
from .errors import DataValidationError


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    flat_f1: float
    nested_f1: float
    candidate_precision: float = 0.0
    candidate_recall: float = 0.0
    candidate_count: int = 0
    all_span_count: int = 0
    gold_count: int = 0
    predicted_count: int = 0
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "flat_f1": self.flat_f1,
            "nested_f1": self.nested_f1,
            "candidate_precision": self.candidate_precision,
            "candidate_recall": self.candidate_recall,
            "candidate_count": self.candidate_count,
            "all_span_count": self.all_span_count,
            "gold_count": self.gold_count,
            "predicted_count": self.predicted_count,
            "timings": self.timings,
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def micro_prf(pred_sets, gold_sets) -> tuple[float, float, float]:
    """Exact (start, end, type) micro scores over aligned sentence lists."""
    if len(pred_sets) != len(gold_sets):
        raise DataValidationError(
            f"prediction/gold sentence counts differ: {len(pred_sets)} vs "
            f"{len(gold_sets)}")
    tp = fp = fn = 0
    for pred, gold in zip(pred_sets, gold_sets):
        pred, gold = set(pred), set(gold)
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    return _prf(tp, fp, fn)


def nested_flags(entities) -> list[bool]:
    """True per entity iff it shares a token with another entity in the
    same sentence."""
    flags = []
    for i, (s1, e1, _) in enumerate(entities):
        nested = any(i != j and s1 <= e2 and s2 <= e1
                     for j, (s2, e2, _) in enumerate(entities))
        flags.append(nested)
    return flags


def split_flat_nested(entity_sets):
    """Partition each sentence's entities into (flat, nested) lists."""
    flat_sets, nested_sets = [], []
    for ents in entity_sets:
        ents = list(ents)
        flags = nested_flags(ents)
        flat_sets.append([e for e, f in zip(ents, flags) if not f])
        nested_sets.append([e for e, f in zip(ents, flags) if f])
    return flat_sets, nested_sets


def evaluate_predictions(pred_sets, gold_sets) -> EvalReport:
    p, r, f1 = micro_prf(pred_sets, gold_sets)
    pred_flat, pred_nested = split_flat_nested(pred_sets)
    gold_flat, gold_nested = split_flat_nested(gold_sets)
    _, _, flat_f1 = micro_prf(pred_flat, gold_flat)
    _, _, nested_f1 = micro_prf(pred_nested, gold_nested)
    return EvalReport(
        precision=p, recall=r, f1=f1, flat_f1=flat_f1, nested_f1=nested_f1,
        gold_count=sum(len(g) for g in gold_sets),
        predicted_count=sum(len(s) for s in pred_sets),
    )


def worker_threads() -> int:
    try:
        return max(1, int(os.environ.get("BONINGKNIFE_THREADS", "1")))
    except ValueError:
        return 1


def predict_corpus(model, records, vocab, collect_attention: bool = False):
    """Run inference over a corpus; parallel across sentences when
    BONINGKNIFE_THREADS > 1 (read-only parameters)."""
    sentences = [Sentence(vocab.encode(r.tokens)) for r in records]
    threads = worker_threads()
    run = lambda s: model.predict(s, collect_attention)
    if threads == 1 or len(sentences) < 2:
        return [run(s) for s in sentences]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, sentences))


def evaluate_model(model, records, vocab) -> EvalReport:
    """Predict a corpus and score it, including candidate-stage statistics."""
    t0 = time.perf_counter()
    results = predict_corpus(model, records, vocab)
    elapsed = time.perf_counter() - t0
    pred_sets = [res.predicted for res in results]
    gold_sets = [r.entity_tuples() for r in records]
    report = evaluate_predictions(pred_sets, gold_sets)

    cand_tp = cand_fp = cand_fn = 0
    candidate_count = span_count = 0
    for res, gold in zip(results, gold_sets):
        cand_spans = {(l, r) for l, r, _ in res.candidates}
        gold_spans = {(s, e) for s, e, _ in gold}
        cand_tp += len(cand_spans & gold_spans)
        cand_fp += len(cand_spans - gold_spans)
        cand_fn += len(gold_spans - cand_spans)
        candidate_count += len(cand_spans)
        span_count += len(res.spans[0])
    cp, cr, _ = _prf(cand_tp, cand_fp, cand_fn)
    report.candidate_precision = cp
    report.candidate_recall = cr
    report.candidate_count = candidate_count
    report.all_span_count = span_count
    report.timings["predict_seconds"] = elapsed
    return report
