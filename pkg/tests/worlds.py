"""Small enumerable caption worlds for exercising the chain decoder.

Both worlds are built so the corpus is closed under span-replacement
moves: every proposable caption is itself a corpus caption, so forward
and reverse probabilities are positive for every move and the reachable
state space is exactly the corpus.  The product world additionally keeps
every caption the same length, which makes the squared-length factor in
the proposal correction cancel and the fixed-temperature chain exactly
reversible for the exponentiated-score target.
"""

from dataclasses import dataclass

import numpy as np

from ccadecode.cca_model import CcaModel, train
from ccadecode.ingest import TextFeaturizer
from ccadecode.phrase_table import (
    BEGIN,
    END,
    Caption,
    ContextTable,
    estimate_context_table,
    extract_phrases,
)
from ccadecode.sparse_linalg import SparseVec


@dataclass(frozen=True)
class World:
    captions: tuple[Caption, ...]     # the full enumerable space
    corpus: tuple[Caption, ...]       # captions with multiplicities
    q: ContextTable
    model: CcaModel
    featurizer: TextFeaturizer
    vocab: tuple[str, ...]

    def phi(self, caption: Caption) -> SparseVec:
        """Bag-of-words indicator over the world vocabulary."""
        idx = np.array(sorted({self.vocab.index(w) for w in caption}),
                       dtype=np.int64)
        return SparseVec(len(self.vocab), idx, np.ones(idx.size))


def _build(captions: list[Caption], weights: list[int], max_phrase_len: int,
           m: int, seed: int = 0) -> World:
    corpus: list[Caption] = []
    for caption, w in zip(captions, weights):
        corpus.extend([caption] * w)
    inventory = extract_phrases(corpus, max_phrase_len)
    q = estimate_context_table(corpus, inventory)
    featurizer = TextFeaturizer(inventory)
    vocab = tuple(sorted({w for c in captions for w in c}))

    def phi(caption: Caption) -> SparseVec:
        idx = np.array(sorted({vocab.index(w) for w in caption}), dtype=np.int64)
        return SparseVec(len(vocab), idx, np.ones(idx.size))

    pairs = [(phi(c), featurizer(c)) for c in corpus]
    model = train(pairs, m, seed)
    return World(tuple(captions), tuple(corpus), q, model, featurizer, vocab)


def build_product_world(allow_g_after_c: bool = False) -> World:
    """Length-3 captions "x1 x2 x3": x1 in {a,b}, x2 in {c,d}, x3 in {e,f}
    always, plus "g" after d (and after c too when allowed).

    10 captions in the restricted form, 12 when g follows both middles.
    """
    captions = []
    for x1 in ("a", "b"):
        for x2 in ("c", "d"):
            finals = ["e", "f"]
            if x2 == "d" or allow_g_after_c:
                finals.append("g")
            for x3 in finals:
                captions.append((x1, x2, x3))
    weights = [1 + (k % 3) for k in range(len(captions))]
    return _build(captions, weights, max_phrase_len=3, m=3)


def build_tail_world() -> World:
    """Variable-length captions "X M T": X in {a,b}, middle M of 0-2 filler
    words, tail T in {y,z}.  24 captions of lengths 2, 3 and 4.
    """
    middles = [(), ("m",), ("n",), ("m", "n"), ("n", "m"), ("m", "m")]
    captions = []
    for x in ("a", "b"):
        for mid in middles:
            for t in ("y", "z"):
                captions.append((x,) + mid + (t,))
    weights = [1 + (k % 2) for k in range(len(captions))]
    return _build(captions, weights, max_phrase_len=4, m=4)


def enumerate_reachable(q: ContextTable, init: Caption, max_len: int) -> set[Caption]:
    """All captions reachable by span-replacement moves, by brute-force BFS.

    Expands every position pair i < j and every phrase listed under the
    span's context, independent of the library's proposal sampler.
    """
    seen = {tuple(init)}
    frontier = [tuple(init)]
    while frontier:
        y = frontier.pop()
        n = len(y)
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                left = y[i - 2] if i > 1 else BEGIN
                right = y[j] if j < n else END
                entry = q.entries.get((left, right))
                if entry is None:
                    continue
                for phrase in entry.phrases:
                    new = y[:i - 1] + phrase + y[j:]
                    if len(new) > max_len or new in seen:
                        continue
                    seen.add(new)
                    frontier.append(new)
    return seen
