"""Phrase inventory and the context-conditioned phrase distribution Q.

Q maps a (left word, right word) context to a categorical distribution
over the inventory phrases observed between exactly those two words in
the training captions, estimated by relative-frequency counting.  The
sentence boundaries act as context words through the reserved markers
``<begin>`` and ``<end>``; captions must not contain them as tokens.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Phrase = tuple[str, ...]
Caption = tuple[str, ...]

BEGIN = "<begin>"
END = "<end>"


def tokenize(text: str) -> Caption:
    """Lowercase, split on whitespace; punctuation stays attached."""
    return tuple(text.lower().split())


@dataclass(frozen=True)
class ContextEntry:
    """Categorical distribution over phrases for one (left, right) context."""

    phrases: tuple[Phrase, ...]   # lexicographic order
    counts: np.ndarray            # int64, >= 1
    probs: np.ndarray             # counts / counts.sum()
    cum: np.ndarray               # cumulative probs, for sampling
    index: Mapping[Phrase, int]

    @classmethod
    def from_counts(cls, counts: Mapping[Phrase, int]) -> "ContextEntry":
        phrases = tuple(sorted(counts))
        c = np.array([counts[p] for p in phrases], dtype=np.int64)
        if np.any(c <= 0):
            raise ValueError("phrase counts must be positive")
        probs = c / c.sum()
        return cls(phrases, c, probs, np.cumsum(probs),
                   {p: k for k, p in enumerate(phrases)})


@dataclass(frozen=True)
class ContextTable:
    entries: Mapping[tuple[str, str], ContextEntry]

    @property
    def num_contexts(self) -> int:
        return len(self.entries)

    @property
    def domain_size(self) -> int:
        """Number of (left, phrase, right) triples."""
        return sum(len(e.phrases) for e in self.entries.values())

    def phrases(self) -> set[Phrase]:
        out: set[Phrase] = set()
        for e in self.entries.values():
            out.update(e.phrases)
        return out


def load_phrase_inventory(path) -> set[Phrase]:
    """Read one phrase per line (space-separated tokens), deduplicated."""
    inventory: set[Phrase] = set()
    with open(path, "r", encoding="utf-8") as fh:
        any_line = False
        for lineno, line in enumerate(fh, start=1):
            any_line = True
            phrase = tokenize(line)
            if not phrase:
                raise ValueError(f"{path}:{lineno}: empty phrase line")
            inventory.add(phrase)
    if not any_line:
        raise ValueError(f"{path}: empty phrase inventory file")
    return inventory


def extract_phrases(corpus: Iterable[Caption], max_len: int) -> set[Phrase]:
    """All contiguous n-grams of length 1..max_len occurring in the corpus."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    out: set[Phrase] = set()
    for caption in corpus:
        n = len(caption)
        for a in range(n):
            for b in range(a + 1, min(a + max_len, n) + 1):
                out.add(tuple(caption[a:b]))
    return out


def estimate_context_table(corpus: Sequence[Caption],
                           inventory: set[Phrase]) -> ContextTable:
    """Relative-frequency estimate of Q(phrase | left, right).

    Every occurrence of an inventory phrase in a caption increments the
    count for the context formed by the word before it (or <begin>) and
    the word after it (or <end>); overlapping occurrences all count.
    """
    if not corpus:
        raise ValueError("empty caption corpus")
    max_len = max((len(p) for p in inventory), default=0)
    counts: dict[tuple[str, str], Counter] = defaultdict(Counter)
    for caption in corpus:
        n = len(caption)
        for a in range(n):
            for b in range(a + 1, min(a + max_len, n) + 1):
                phrase = tuple(caption[a:b])
                if phrase not in inventory:
                    continue
                left = caption[a - 1] if a > 0 else BEGIN
                right = caption[b] if b < n else END
                counts[(left, right)][phrase] += 1
    entries = {ctx: ContextEntry.from_counts(c) for ctx, c in counts.items()}
    return ContextTable(entries)


def sample_phrase(q: ContextTable, left: str, right: str,
                  rng: np.random.Generator) -> Phrase | None:
    """Draw from the context's categorical distribution; None if unseen context."""
    entry = q.entries.get((left, right))
    if entry is None:
        return None
    k = int(np.searchsorted(entry.cum, rng.random(), side="right"))
    return entry.phrases[min(k, len(entry.phrases) - 1)]


def context_prob(q: ContextTable, left: str, right: str,
                 segment: Sequence[str]) -> float:
    """Stored Q(segment | left, right), or 0.0 when context/phrase is absent.

    The segment must match a single inventory phrase listed under the
    context; multi-phrase segmentations are not summed over.
    """
    entry = q.entries.get((left, right))
    if entry is None:
        return 0.0
    k = entry.index.get(tuple(segment))
    if k is None:
        return 0.0
    return float(entry.probs[k])


def save_context_table(q: ContextTable, path) -> None:
    """Write tab-separated "left, phrase, right, count, prob" lines, sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for (left, right) in sorted(q.entries):
            entry = q.entries[(left, right)]
            for k, phrase in enumerate(entry.phrases):
                fh.write(f"{left}\t{' '.join(phrase)}\t{right}\t"
                         f"{int(entry.counts[k])}\t{float(entry.probs[k])!r}\n")


def load_context_table(path, inventory: set[Phrase] | None = None) -> ContextTable:
    """Read the tab-separated format back, re-validating normalization.

    Stored probabilities must equal count / context-total exactly; if an
    inventory is supplied, every phrase must belong to it.
    """
    raw: dict[tuple[str, str], dict[Phrase, int]] = defaultdict(dict)
    stored: dict[tuple[str, str], dict[Phrase, float]] = defaultdict(dict)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields")
            left, phrase_text, right, count_text, prob_text = parts
            phrase = tuple(phrase_text.split(" "))
            if not phrase or phrase == ("",):
                raise ValueError(f"{path}:{lineno}: empty phrase")
            if inventory is not None and phrase not in inventory:
                raise ValueError(f"{path}:{lineno}: phrase not in inventory")
            count = int(count_text)
            if count <= 0:
                raise ValueError(f"{path}:{lineno}: count must be positive")
            if phrase in raw[(left, right)]:
                raise ValueError(f"{path}:{lineno}: duplicate (left, phrase, right)")
            raw[(left, right)][phrase] = count
            stored[(left, right)][phrase] = float(prob_text)
    if not raw:
        raise ValueError(f"{path}: empty context table file")
    entries = {}
    for ctx, counts in raw.items():
        entry = ContextEntry.from_counts(counts)
        for k, phrase in enumerate(entry.phrases):
            if stored[ctx][phrase] != entry.probs[k]:
                raise ValueError(
                    f"{path}: context {ctx}: stored prob for {' '.join(phrase)!r} "
                    f"is not count/total")
        entries[ctx] = entry
    return ContextTable(entries)
