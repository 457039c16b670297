"""Candidate-pruning benchmark: typing every tagger candidate versus
typing every enumerable span, with wall-clock per stage.
"""

from __future__ import annotations

import time

from .autodiff import pause_recording
from .encoder import Sentence
from .tagger import enumerate_spans


def bench_candidates(model, records, vocab) -> dict:
    """Run the typing stage twice per sentence: (a) on thresholded tagger
    candidates, (b) on all spans up to max_span_len. Candidate quality is
    span-level (type ignored) against gold.
    """
    cfg = model.cfg
    sentences = [Sentence(vocab.encode(r.tokens)) for r in records]
    golds = [r.entity_tuples() for r in records]

    encoded = []
    tag_seconds = 0.0
    with pause_recording():
        for s in sentences:
            enc = model.encode(s)
            t0 = time.perf_counter()
            _, _, spans, candidates = model.tagger_stage(enc, None, train=False)
            tag_seconds += time.perf_counter() - t0
            encoded.append((enc, spans, candidates))

        typing_candidates_seconds = 0.0
        typing_all_seconds = 0.0
        cand_count = all_count = 0
        tp = fp = fn = 0
        for (enc, spans, candidates), gold in zip(encoded, golds):
            t0 = time.perf_counter()
            model.typing_stage(enc, candidates)
            typing_candidates_seconds += time.perf_counter() - t0

            starts, ends = spans
            all_spans = [(int(l), int(r), 0.0) for l, r in zip(starts, ends)]
            t0 = time.perf_counter()
            model.typing_stage(enc, all_spans)
            typing_all_seconds += time.perf_counter() - t0

            cand_spans = {(l, r) for l, r, _ in candidates}
            gold_spans = {(s, e) for s, e, _ in gold}
            tp += len(cand_spans & gold_spans)
            fp += len(cand_spans - gold_spans)
            fn += len(gold_spans - cand_spans)
            cand_count += len(cand_spans)
            all_count += len(all_spans)

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return {
        "sentences": len(sentences),
        "candidate_count": cand_count,
        "all_span_count": all_count,
        "candidate_fraction": cand_count / all_count if all_count else 0.0,
        "candidate_precision": precision,
        "candidate_recall": recall,
        "tagging_seconds": tag_seconds,
        "typing_candidates_seconds": typing_candidates_seconds,
        "typing_all_spans_seconds": typing_all_seconds,
        "typing_speedup": (typing_all_seconds / typing_candidates_seconds
                           if typing_candidates_seconds else 0.0),
    }
