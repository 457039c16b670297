"""Corpus I/O, vocabulary, and the synthetic nested-entity generator.

Corpus format: UTF-8 JSON lines, one record per line,
{"tokens": [...], "entities": [{"start": int, "end": int, "type": str}]}.
Entity end indices are INCLUSIVE token indices; (start=2, end=2) is the
single token at position 2. Overlapping and fully nested entities are
valid; exact duplicate (start, end, type) triples are not.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, field

from .errors import DataValidationError

PAD, UNK, BEGIN, END = 0, 1, 2, 3
SPECIAL_TOKENS = ["<pad>", "<unk>", "<begin>", "<end>"]


class Vocabulary:
    """token -> id mapping; ids 0-3 are reserved for PAD/UNK/BEGIN/END."""

    def __init__(self, tokens: list[str]):
        if tokens[:4] != SPECIAL_TOKENS:
            tokens = SPECIAL_TOKENS + list(tokens)
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataValidationError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: list[str]) -> list[int]:
        return [self.index.get(w, UNK) for w in words]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for t in self.tokens:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        if tokens[:4] != SPECIAL_TOKENS:
            raise DataValidationError(
                f"vocabulary file {path} must start with {SPECIAL_TOKENS}")
        return cls(tokens)


@dataclass(frozen=True)
class Entity:
    start: int
    end: int  # inclusive
    type: str

    def as_tuple(self) -> tuple[int, int, str]:
        return (self.start, self.end, self.type)


@dataclass
class CorpusRecord:
    tokens: list[str]
    entities: list[Entity] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        n = len(self.tokens)
        if n == 0:
            raise DataValidationError("record has no tokens")
        for e in self.entities:
            if not (0 <= e.start <= e.end < n):
                raise DataValidationError(
                    f"entity ({e.start}, {e.end}, {e.type}) out of range for "
                    f"{n} tokens")
            key = e.as_tuple()
            if key in seen:
                raise DataValidationError(f"duplicate entity {key}")
            seen.add(key)

    def entity_tuples(self) -> list[tuple[int, int, str]]:
        return [e.as_tuple() for e in self.entities]

    def to_json(self) -> str:
        return json.dumps({
            "tokens": self.tokens,
            "entities": [{"start": e.start, "end": e.end, "type": e.type}
                         for e in self.entities],
        }, ensure_ascii=False)


_RECORD_KEYS = {"tokens", "entities"}
_ENTITY_KEYS = {"start", "end", "type"}


def parse_record(obj: dict) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise DataValidationError("record is not a JSON object")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise DataValidationError(f"unknown record fields: {sorted(unknown)}")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise DataValidationError("'tokens' must be a list of strings")
    entities = []
    for ent in obj.get("entities", []):
        bad = set(ent) - _ENTITY_KEYS
        if bad:
            raise DataValidationError(f"unknown entity fields: {sorted(bad)}")
        missing = _ENTITY_KEYS - set(ent)
        if missing:
            raise DataValidationError(f"entity missing fields: {sorted(missing)}")
        if not isinstance(ent["start"], int) or not isinstance(ent["end"], int):
            raise DataValidationError("entity start/end must be integers")
        entities.append(Entity(ent["start"], ent["end"], str(ent["type"])))
    return CorpusRecord(tokens, entities)


def load_corpus(path) -> list[CorpusRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(
                    f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                records.append(parse_record(obj))
            except DataValidationError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_corpus(records: list[CorpusRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def corpus_types(records: list[CorpusRecord]) -> list[str]:
    """Sorted entity type inventory of a corpus."""
    return sorted({e.type for r in records for e in r.entities})


def build_vocab(records: list[CorpusRecord]) -> Vocabulary:
    words = sorted({t for r in records for t in r.tokens})
    return Vocabulary(words)


# ---------------------------------------------------------------------------
# synthetic nested corpus
# ---------------------------------------------------------------------------


@dataclass
class SyntheticGrammarConfig:
    vocab_size: int = 500
    types: tuple[str, ...] = ("PER", "ORG", "GPE", "MISC")
    max_depth: int = 3
    max_sentence_len: int = 40
    nesting_prob: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.max_depth < 1:
            raise DataValidationError("max_depth must be >= 1")
        if not (0.0 <= self.nesting_prob <= 1.0):
            raise DataValidationError("nesting_prob must lie in [0, 1]")
        if self.vocab_size < 8 * len(self.types) + 24:
            raise DataValidationError("vocab_size too small for the word pools")


class _Grammar:
    """Template grammar producing recursively nested mentions.

    Every entity slot draws a nesting chain: with probability nesting_prob
    (while depth budget remains) a node expands as
    "the <role> of <child entity>", otherwise it emits a 1-2 token leaf
    name from its type's word pool. Every level of the chain is annotated,
    so a chain of length m contributes m gold mentions that all overlap.
    """

    def __init__(self, cfg: SyntheticGrammarConfig):
        cfg.validate()
        self.cfg = cfg
        n_types = len(cfg.types)
        self.verbs = ["met", "visited", "joined", "praised", "left", "named"]
        self.glue = ["the", "of", "in", "at", "."]
        role_per_type = 4
        # fill the vocabulary exactly: specials + verbs + glue + roles + leaves + fillers
        fixed = 4 + len(self.verbs) + len(self.glue) + n_types * role_per_type
        min_fillers = 8
        leaf_per_type = (cfg.vocab_size - fixed - min_fillers) // n_types
        filler_count = cfg.vocab_size - fixed - n_types * leaf_per_type
        self.leaf_pool = {
            t: [f"{t.lower()}{i:03d}" for i in range(leaf_per_type)]
            for t in cfg.types
        }
        self.role_pool = {
            t: [f"role_{t.lower()}{i}" for i in range(role_per_type)]
            for t in cfg.types
        }
        self.fillers = [f"w{i:03d}" for i in range(filler_count)]

    def vocab_tokens(self) -> list[str]:
        out = []
        for t in self.cfg.types:
            out.extend(self.leaf_pool[t])
            out.extend(self.role_pool[t])
        out.extend(self.verbs)
        out.extend(self.glue)
        out.extend(self.fillers)
        return out

    def entity(self, rng: random.Random, etype: str, depth_left: int):
        """Returns (tokens, entities) with spans relative to the fragment."""
        nest = depth_left > 1 and rng.random() < self.cfg.nesting_prob
        if not nest:
            k = rng.choice((1, 2))
            toks = [rng.choice(self.leaf_pool[etype]) for _ in range(k)]
            return toks, [(0, len(toks) - 1, etype)]
        child_type = rng.choice(self.cfg.types)
        head = ["the", rng.choice(self.role_pool[etype]), "of"]
        child_toks, child_ents = self.entity(rng, child_type, depth_left - 1)
        toks = head + child_toks
        ents = [(0, len(toks) - 1, etype)]
        ents += [(s + len(head), e + len(head), t) for s, e, t in child_ents]
        return toks, ents

    def sentence(self, rng: random.Random) -> CorpusRecord:
        cfg = self.cfg
        tokens: list[str] = []
        entities: list[tuple[int, int, str]] = []

        def fill(k):
            tokens.extend(rng.choice(self.fillers) for _ in range(k))

        def tree():
            etype = rng.choice(cfg.types)
            toks, ents = self.entity(rng, etype, cfg.max_depth)
            base = len(tokens)
            tokens.extend(toks)
            entities.extend((s + base, e + base, t) for s, e, t in ents)

        n_trees = rng.choice((1, 2, 2))
        fill(rng.randint(1, 3))
        tree()
        for _ in range(n_trees - 1):
            tokens.append(rng.choice(self.verbs))
            fill(rng.randint(1, 3))
            tree()
        fill(rng.randint(1, 4))
        tokens.append(".")
        if len(tokens) > cfg.max_sentence_len:
            tokens[:] = tokens[: cfg.max_sentence_len]
            entities[:] = [e for e in entities if e[1] < cfg.max_sentence_len]
        return CorpusRecord(tokens, [Entity(*e) for e in entities])


def gen_synthetic(cfg: SyntheticGrammarConfig, n_sentences: int
                  ) -> tuple[list[CorpusRecord], Vocabulary]:
    """Deterministic nested corpus plus its vocabulary."""
    grammar = _Grammar(cfg)
    rng = random.Random(cfg.seed)
    records = [grammar.sentence(rng) for _ in range(n_sentences)]
    return records, Vocabulary(grammar.vocab_tokens())


def analytic_overlap_ratio(cfg: SyntheticGrammarConfig) -> float:
    """Expected fraction of mentions sharing tokens with another mention.

    Chains have length m with P(m=k) = q^(k-1)(1-q) for k < D and
    P(m=D) = q^(D-1); a chain of length m >= 2 contributes m overlapping
    mentions, a singleton contributes none.
    """
    q, d = cfg.nesting_prob, cfg.max_depth
    probs = [q ** (k - 1) * (1 - q) for k in range(1, d)] + [q ** (d - 1)]
    mean_len = sum(k * p for k, p in zip(range(1, d + 1), probs))
    overlapping = mean_len - probs[0] * 1.0
    return overlapping / mean_len if mean_len else 0.0


def measured_overlap_ratio(records: list[CorpusRecord]) -> float:
    """Brute-force fraction of gold mentions overlapping another mention."""
    total = overlapping = 0
    for r in records:
        ents = r.entity_tuples()
        total += len(ents)
        for i, (s1, e1, _) in enumerate(ents):
            for j, (s2, e2, _) in enumerate(ents):
                if i != j and s1 <= e2 and s2 <= e1:
                    overlapping += 1
                    break
    return overlapping / total if total else 0.0


def truncate_overlong_spans(records: list[CorpusRecord], max_span_len: int) -> int:
    """Count gold spans longer than the enumeration cap (they get warnings)."""
    count = sum(
        1 for r in records for e in r.entities if e.end - e.start + 1 > max_span_len
    )
    if count:
        warnings.warn(f"{count} gold spans exceed max_span_len={max_span_len} "
                      "and will be dropped from tagger labels")
    return count
