"""Corpus BLEU against multi-reference sets, plus diversity diagnostics.

BLEU here is the common corpus-level 4-gram variant: clipped n-gram
precision against the per-scene reference union, geometric mean over
n = 1..4 with no smoothing (a zero corpus-wide match count at any order
zeroes the score), and a brevity penalty driven by the closest reference
length with ties going to the shorter reference.  Tokens are compared
as-is; loaders already lowercase, so scores are uncased.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .phrase_table import Caption

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuReport:
    bleu: float                       # 0..100
    precisions: tuple[float, ...]     # clipped precision per order 1..4
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    scenes: int
    meteor: float | None = None       # reserved; not computed here

    def as_dict(self) -> dict:
        out = {
            "bleu": self.bleu,
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "scenes": self.scenes,
        }
        for n, p in enumerate(self.precisions, start=1):
            out[f"precision_{n}"] = p
        if self.meteor is not None:
            out["meteor"] = self.meteor
        return out


def _ngrams(tokens: Caption, n: int) -> Counter:
    return Counter(tuple(tokens[k:k + n]) for k in range(len(tokens) - n + 1))


def _closest_ref_len(hyp_len: int, refs: Sequence[Caption]) -> int:
    # closest reference length; ties broken toward the shorter reference
    return min((len(r) for r in refs), key=lambda L: (abs(L - hyp_len), L))


def corpus_bleu(hyps: Mapping[str, Caption],
                refs: Mapping[str, Sequence[Caption]]) -> BleuReport:
    """Corpus-level BLEU-4 of one hypothesis per scene vs. its references."""
    missing = sorted(sid for sid in hyps if not refs.get(sid))
    if missing:
        raise ValueError(f"scenes without references: {', '.join(missing)}")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for sid in hyps:
        hyp = hyps[sid]
        scene_refs = refs[sid]
        hyp_len += len(hyp)
        ref_len += _closest_ref_len(len(hyp), scene_refs)
        for n in range(1, MAX_ORDER + 1):
            hyp_counts = _ngrams(hyp, n)
            if not hyp_counts:
                continue
            max_ref = Counter()
            for ref in scene_refs:
                for gram, c in _ngrams(ref, n).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
            totals[n - 1] += sum(hyp_counts.values())
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if all(p > 0 for p in precisions):
        geo = math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
        bleu = 100.0 * bp * geo
    else:
        bleu = 0.0
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len, len(hyps))


def reference_self_bleu(refs: Mapping[str, Sequence[Caption]],
                        batch_index: int) -> tuple[BleuReport, int]:
    """BLEU of reference batch b against each scene's remaining references.

    Scenes lacking caption ``batch_index`` (or with no other reference to
    compare against) are skipped; the skip count is returned alongside.
    """
    if batch_index < 0:
        raise ValueError("batch_index must be >= 0")
    hyps: dict[str, Caption] = {}
    rest: dict[str, list[Caption]] = {}
    skipped = 0
    for sid, captions in refs.items():
        if len(captions) <= batch_index or len(captions) < 2:
            skipped += 1
            continue
        hyps[sid] = captions[batch_index]
        rest[sid] = [c for k, c in enumerate(captions) if k != batch_index]
    if not hyps:
        raise ValueError(f"no scene has a caption at batch index {batch_index}")
    return corpus_bleu(hyps, rest), skipped


def unique_caption_count(hyps: Mapping[str, Caption]) -> int:
    """Number of distinct token sequences among the hypotheses."""
    return len(set(tuple(c) for c in hyps.values()))


def format_report(report: BleuReport, unique: int | None = None) -> str:
    lines = [
        f"BLEU            {report.bleu:.2f}",
        "precisions      " + " ".join(f"{p:.4f}" for p in report.precisions),
        f"brevity penalty {report.brevity_penalty:.4f}",
        f"lengths         hyp={report.hyp_len} ref={report.ref_len}",
        f"scenes          {report.scenes}",
    ]
    if unique is not None:
        lines.append(f"unique captions {unique}")
    return "\n".join(lines)


def write_report_kv(report: BleuReport, path, unique: int | None = None,
                    extra: Mapping[str, object] | None = None) -> None:
    """Machine-readable key=value lines."""
    items = dict(report.as_dict())
    if unique is not None:
        items["unique_captions"] = unique
    if extra:
        items.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(items):
            fh.write(f"{key}={items[key]!r}\n")


def write_scatter(hyps: Mapping[str, Caption],
                  refs: Mapping[str, Sequence[Caption]], path) -> None:
    """Per-scene single-scene BLEU, exported as "scene_id <TAB> score" rows.

    Intended for plotting metric scores against externally collected
    per-scene judgments.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(hyps):
            single = corpus_bleu({sid: hyps[sid]}, {sid: refs[sid]})
            fh.write(f"{sid}\t{single.bleu!r}\n")
