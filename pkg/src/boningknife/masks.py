"""Binary attention visibility masks over sentinel-padded sentences.

Index convention: a sentence of N real tokens occupies matrix positions
1..N; position 0 is the BEGIN sentinel and position N+1 the END sentinel,
so every mask is (N+2) x (N+2). Optional extra padding columns/rows
(pad_to > N+2) are invisible everywhere and see nothing, which keeps
encoder outputs over the real positions independent of padding content.

mask[i, j] == 1 means row i may attend to column j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MaskMatrix:
    kind: str  # global | focus | mention | neighbor
    bits: np.ndarray

    @property
    def size(self) -> int:
        return self.bits.shape[0]


def _alloc(n_tokens: int, pad_to: int | None) -> tuple[np.ndarray, int]:
    p = n_tokens + 2
    total = p if pad_to is None else pad_to
    if total < p:
        raise ValueError(f"pad_to {total} smaller than sentinel-padded length {p}")
    return np.zeros((total, total), dtype=np.float64), p


def global_mask(n_tokens: int, pad_to: int | None = None) -> MaskMatrix:
    """All-ones over real tokens and sentinels; padding stays invisible."""
    bits, p = _alloc(n_tokens, pad_to)
    bits[:p, :p] = 1.0
    return MaskMatrix("global", bits)


def focus_mask(entity_prob, window: int, tau_ent: float = 0.5,
               pad_to: int | None = None) -> MaskMatrix:
    """Mention-focus visibility from entity-token probabilities.

    With E = {j : entity_prob[j] >= tau_ent} (0-based real-token indices):
    an entity row sees every real token except itself; a non-entity row
    sees E plus its local window |i - j| <= window. Sentinel rows see
    everything; sentinel columns are visible from every row.
    """
    entity_prob = np.asarray(entity_prob, dtype=np.float64)
    n = entity_prob.shape[0]
    bits, p = _alloc(n, pad_to)
    is_entity = entity_prob >= tau_ent

    for i in range(n):
        row = bits[i + 1]
        if is_entity[i]:
            row[1 : n + 1] = 1.0
            row[i + 1] = 0.0
        else:
            row[1 : n + 1][is_entity] = 1.0
            lo, hi = max(0, i - window), min(n - 1, i + window)
            row[lo + 1 : hi + 2] = 1.0
        row[0] = 1.0
        row[p - 1] = 1.0
    bits[0, :p] = 1.0
    bits[p - 1, :p] = 1.0
    return MaskMatrix("focus", bits)


def mention_mask(start: int, end: int, n_tokens: int,
                 pad_to: int | None = None) -> MaskMatrix:
    """Every row sees exactly the span's tokens [start, end] (inclusive)."""
    _check_span(start, end, n_tokens)
    bits, p = _alloc(n_tokens, pad_to)
    bits[:p, start + 1 : end + 2] = 1.0
    return MaskMatrix("mention", bits)


def neighbor_mask(start: int, end: int, n_tokens: int, window: int = 128,
                  pad_to: int | None = None) -> MaskMatrix:
    """Every row sees the sentinels plus real tokens outside [start, end],
    clipped to `window` tokens on each side of the span.

    A whole-sentence span leaves only the two sentinels visible.
    """
    _check_span(start, end, n_tokens)
    bits, p = _alloc(n_tokens, pad_to)
    lo = max(0, start - window)
    hi = min(n_tokens - 1, end + window)
    bits[:p, lo + 1 : start + 1] = 1.0
    bits[:p, end + 2 : hi + 2] = 1.0
    bits[:p, 0] = 1.0
    bits[:p, p - 1] = 1.0
    return MaskMatrix("neighbor", bits)


def stack_mask_bits(masks) -> np.ndarray:
    """Stack MaskMatrix bits into [C, P, P] for batched per-span attention."""
    return np.stack([m.bits for m in masks], axis=0)


def _check_span(start: int, end: int, n_tokens: int) -> None:
    if not (0 <= start <= end < n_tokens):
        raise ValueError(
            f"span ({start}, {end}) out of range for sentence of {n_tokens} tokens"
        )
