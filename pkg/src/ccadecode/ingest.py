"""Dataset loaders: visual feature vectors, captions, split manifests.

File formats (all tab-separated, UTF-8):

  features   scene_id <TAB> idx:val idx:val ...      (sparse, 0-based idx)
  captions   scene_id <TAB> caption text             (one caption per line)
  manifest   scene_id <TAB> split                    (split in train/dev/test)

Caption text is lowercased and whitespace-tokenized on load; punctuation
stays attached to its word.  Loaders raise on malformed input with the
offending line number; soft issues (a scene with unusually many captions,
captions for unknown scenes) are warnings unless ``strict`` is set.

The upstream scene dataset ships precomputed binary visual features; this
module ingests them as-is rather than rebuilding them from scene geometry.
For reference, the feature classes in that representation are: object
category presence (11), specific object presence (58), category and
instance co-occurrence pairs, absolute location and depth bins per object,
relative object location (plain and facing-directional), proximity of an
object to a child's hand or head, and child pose/expression attributes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .phrase_table import Caption, Phrase, tokenize
from .sparse_linalg import SparseVec

log = logging.getLogger(__name__)

MAX_EXPECTED_CAPTIONS = 8
SPLITS = ("train", "dev", "test")


def _issue(message: str, strict: bool) -> None:
    if strict:
        raise ValueError(message)
    log.warning(message)


def load_visual_features(path, dim: int, strict: bool = False) -> dict[str, SparseVec]:
    """Parse "scene_id <TAB> idx:val ..." lines into validated SparseVecs.

    Zero-valued entries are dropped (sparse vectors never store zeros).
    """
    out: dict[str, SparseVec] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: expected scene_id<TAB>features")
            scene_id, _, feats = line.partition("\t")
            if not scene_id:
                raise ValueError(f"{path}:{lineno}: empty scene_id")
            if scene_id in out:
                raise ValueError(f"{path}:{lineno}: duplicate scene_id {scene_id!r}")
            pairs = []
            for item in feats.split():
                idx_text, sep, val_text = item.partition(":")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: malformed entry {item!r}")
                try:
                    idx = int(idx_text)
                    val = float(val_text)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed entry {item!r}") from exc
                if not 0 <= idx < dim:
                    raise ValueError(
                        f"{path}:{lineno}: index {idx} out of range for dim {dim}")
                pairs.append((idx, val))
            if len({i for i, _ in pairs}) != len(pairs):
                raise ValueError(f"{path}:{lineno}: duplicate feature index")
            out[scene_id] = SparseVec.from_pairs(dim, pairs)
    return out


def write_visual_features(features: Mapping[str, SparseVec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for scene_id in sorted(features):
            vec = features[scene_id]
            body = " ".join(f"{int(i)}:{float(v)!r}" for i, v in zip(vec.indices, vec.values))
            fh.write(f"{scene_id}\t{body}\n")


def load_captions(path, strict: bool = False) -> dict[str, list[Caption]]:
    """Group tokenized captions by scene, reporting the total pair count."""
    out: dict[str, list[Caption]] = {}
    total = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: expected scene_id<TAB>caption")
            scene_id, _, text = line.partition("\t")
            caption = tokenize(text)
            if not scene_id or not caption:
                raise ValueError(f"{path}:{lineno}: empty scene_id or caption")
            out.setdefault(scene_id, []).append(caption)
            total += 1
    for scene_id, captions in out.items():
        if len(captions) > MAX_EXPECTED_CAPTIONS:
            _issue(f"{path}: scene {scene_id!r} has {len(captions)} captions "
                   f"(> {MAX_EXPECTED_CAPTIONS}); keeping all", strict)
    log.info("loaded %d captions for %d scenes from %s", total, len(out), path)
    return out


def write_captions(captions: Mapping[str, Sequence[Caption]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for scene_id in sorted(captions):
            for caption in captions[scene_id]:
                fh.write(f"{scene_id}\t{' '.join(caption)}\n")


@dataclass(frozen=True)
class SplitManifest:
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        sets = [set(self.train), set(self.dev), set(self.test)]
        if sum(len(s) for s in sets) != len(set().union(*sets)):
            raise ValueError("split scene_id lists must be pairwise disjoint")

    def ids(self, split: str) -> tuple[str, ...]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return getattr(self, split)


def load_manifest(path) -> SplitManifest:
    buckets: dict[str, list[str]] = {s: [] for s in SPLITS}
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in SPLITS:
                raise ValueError(f"{path}:{lineno}: expected scene_id<TAB>train|dev|test")
            scene_id, split = parts
            if scene_id in seen:
                raise ValueError(f"{path}:{lineno}: scene {scene_id!r} assigned twice")
            seen.add(scene_id)
            buckets[split].append(scene_id)
    manifest = SplitManifest(*(tuple(buckets[s]) for s in SPLITS))
    log.info("manifest %s: train=%d dev=%d test=%d", path,
             len(manifest.train), len(manifest.dev), len(manifest.test))
    return manifest


def write_manifest(manifest: SplitManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for split in SPLITS:
            for scene_id in manifest.ids(split):
                fh.write(f"{scene_id}\t{split}\n")


class TextFeaturizer:
    """Fixed phrase-index assignment: binary firing vector over an inventory.

    Index i belongs to the i-th phrase of the sorted inventory; a phrase
    fires when it occurs as a contiguous token subsequence of the caption
    (once, regardless of how many positions it occurs at).
    """

    def __init__(self, inventory: set[Phrase]):
        if not inventory:
            raise ValueError("empty phrase inventory")
        self.phrases: tuple[Phrase, ...] = tuple(sorted(inventory))
        self.index: dict[Phrase, int] = {p: k for k, p in enumerate(self.phrases)}
        self.max_phrase_len = max(len(p) for p in self.phrases)
        self.dim = len(self.phrases)

    def __call__(self, caption: Caption) -> SparseVec:
        fired: set[int] = set()
        n = len(caption)
        for a in range(n):
            for b in range(a + 1, min(a + self.max_phrase_len, n) + 1):
                k = self.index.get(tuple(caption[a:b]))
                if k is not None:
                    fired.add(k)
        idx = np.array(sorted(fired), dtype=np.int64)
        return SparseVec(self.dim, idx, np.ones(idx.size))


def text_features(y: Caption, inventory: set[Phrase]) -> SparseVec:
    """One-off binary phrase-firing vector (builds a featurizer per call)."""
    return TextFeaturizer(inventory)(y)


def build_training_pairs(scenes: Mapping[str, SparseVec],
                         captions: Mapping[str, Sequence[Caption]],
                         featurizer: TextFeaturizer,
                         strict: bool = False,
                         ) -> Iterator[tuple[SparseVec, SparseVec]]:
    """One (phi(x), psi(y)) pair per (scene, caption), scene phi repeated.

    Deterministic order: scene_id sort, then caption file order.  Captions
    for scenes absent from the feature map are skipped with a warning.
    """
    unknown = sorted(set(captions) - set(scenes))
    for scene_id in unknown:
        _issue(f"captions for unknown scene {scene_id!r} skipped", strict)
    for scene_id in sorted(captions):
        if scene_id not in scenes:
            continue
        phi = scenes[scene_id]
        for caption in captions[scene_id]:
            yield phi, featurizer(caption)
