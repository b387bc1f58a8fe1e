"""Annealed Metropolis-Hastings search over captions.

A chain state is a caption.  A move picks two distinct positions i < j
uniformly, looks up the context formed by the words just outside the
span (sentence boundaries supply ``<begin>``/``<end>``), samples a
replacement phrase from Q for that context, and splices it in.  Moves
are accepted with probability

    min(1, alpha0 * alpha1)

where alpha0 exponentiates the score difference by the current inverse
temperature and alpha1 = (|new|^2 * Q(old segment | context)) /
(|old|^2 * Q(phrase | context)) corrects for proposal asymmetry, the
squared lengths standing in for the pair counts.  A move whose replaced
segment is not a single inventory phrase under its context has reverse
probability 0 and is never accepted unless a ``reverse_epsilon`` floor
is configured.  The score is cosine(u(x), v(y)) + eta * |y|; the best
caption seen is tracked over every proposal, accepted or not, and is
what the annealed search returns.

By default the full score is annealed, alpha0 = exp((s_new - s_old)/t).
With ``eta_inside_temperature=False`` only the cosine term is divided
by t and the length bonus stays outside, the other defensible reading
of the acceptance rule.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .cca_model import CcaModel, LatentVec, cosine, project_input, project_output
from .phrase_table import BEGIN, END, Caption, ContextTable, Phrase, context_prob, sample_phrase
from .sparse_linalg import SparseVec

log = logging.getLogger(__name__)

# RNG identity, recorded in run metadata: numpy PCG64 via default_rng.
RNG_KIND = "numpy-pcg64"
# Offset separating the init-choice stream from the chain stream per scene.
INIT_STREAM_SALT = 0x9E3779B97F4A7C15

PsiFn = Callable[[Caption], SparseVec]


@dataclass(frozen=True)
class DecoderConfig:
    eta: float = 0.05
    start_temp: float = 10_000.0
    cooling: float = 0.995
    min_temp: float = 0.1
    seed: int = 0
    max_len: int = 50
    reverse_epsilon: float = 0.0
    eta_inside_temperature: bool = True
    keep_trace: bool = False

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")
        if self.min_temp <= 0 or self.start_temp <= 0:
            raise ValueError("temperatures must be positive")
        if self.min_temp >= self.start_temp:
            raise ValueError("min_temp must be below start_temp")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.reverse_epsilon < 0:
            raise ValueError("reverse_epsilon must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class Proposal:
    i: int                 # 1-based span start, inclusive
    j: int                 # 1-based span end, inclusive, i < j
    phrase: Phrase
    new_caption: Caption
    forward_prob: float    # Q(phrase | context), > 0
    reverse_prob: float    # Q(old segment | context), possibly epsilon-floored


@dataclass(frozen=True)
class TraceStep:
    step: int
    temp: float
    score: float        # current chain score after the step
    best_score: float
    accepted: bool


@dataclass(frozen=True)
class DecodeResult:
    caption: Caption
    score: float
    trace: tuple[TraceStep, ...]
    steps: int
    accepted: int
    proposal_failures: int
    no_proposals: bool  # warning flag: no valid proposal was ever available


def score(ux: LatentVec, model: CcaModel, y: Caption, psi_fn: PsiFn, eta: float) -> float:
    """cosine(u(x), v(y)) + eta * word count of y."""
    return cosine(ux, project_output(model, psi_fn(y))) + eta * len(y)


def propose(y_prime: Caption, q: ContextTable, rng: np.random.Generator,
            max_len: int = 50, reverse_epsilon: float = 0.0) -> Proposal | None:
    """One span-replacement proposal, or None when no move is available.

    None is returned for captions shorter than two words (no position
    pair exists), for contexts absent from Q, and for replacements that
    would push the caption past max_len.
    """
    n = len(y_prime)
    if n < 2:
        return None
    a, b = rng.choice(n, size=2, replace=False)
    i, j = (int(a) + 1, int(b) + 1) if a < b else (int(b) + 1, int(a) + 1)
    left = y_prime[i - 2] if i > 1 else BEGIN
    right = y_prime[j] if j < n else END
    phrase = sample_phrase(q, left, right, rng)
    if phrase is None:
        return None
    new_caption = y_prime[:i - 1] + phrase + y_prime[j:]
    if len(new_caption) > max_len:
        return None
    forward = context_prob(q, left, right, phrase)
    reverse = max(context_prob(q, left, right, y_prime[i - 1:j]), reverse_epsilon)
    return Proposal(i, j, phrase, new_caption, forward, reverse)


def acceptance_ratio(old: Caption, new: Proposal, score_old: float,
                     score_new: float, t: float, eta: float = 0.0,
                     eta_inside_temperature: bool = True) -> float:
    """min(1, alpha0 * alpha1); 0.0 when the reverse probability is zero."""
    if t <= 0:
        raise ValueError("temperature must be positive")
    if new.reverse_prob <= 0.0:
        return 0.0
    len_old, len_new = len(old), len(new.new_caption)
    if eta_inside_temperature:
        delta = (score_new - score_old) / t
    else:
        rho_new = score_new - eta * len_new
        rho_old = score_old - eta * len_old
        delta = (rho_new - rho_old) / t + eta * (len_new - len_old)
    log_alpha1 = (2.0 * (math.log(len_new) - math.log(len_old))
                  + math.log(new.reverse_prob) - math.log(new.forward_prob))
    return math.exp(min(0.0, delta + log_alpha1))


class _CachedScorer:
    """Memoized caption scores for one chain (model/input/eta are fixed)."""

    def __init__(self, model: CcaModel, phi: SparseVec, psi_fn: PsiFn, eta: float):
        self.ux = project_input(model, phi)
        self.model = model
        self.psi_fn = psi_fn
        self.eta = eta
        self._cache: dict[Caption, float] = {}

    def __call__(self, y: Caption) -> float:
        s = self._cache.get(y)
        if s is None:
            s = score(self.ux, self.model, y, self.psi_fn, self.eta)
            self._cache[y] = s
        return s


def decode(model: CcaModel, phi: SparseVec, q: ContextTable, init: Caption,
           config: DecoderConfig, psi_fn: PsiFn) -> DecodeResult:
    """Annealed search: cool from start_temp by `cooling` while t >= min_temp.

    Returns the best-scoring caption seen across all proposals together
    with its score, the optional per-step trace, and chain statistics.
    Deterministic given config.seed.
    """
    if not init:
        raise ValueError("init caption must be nonempty")
    rng = np.random.default_rng(config.seed)
    scorer = _CachedScorer(model, phi, psi_fn, config.eta)
    current = tuple(init)
    s_cur = scorer(current)
    best, s_best = current, s_cur
    t = config.start_temp
    step = accepted = failures = 0
    any_proposal = False
    trace: list[TraceStep] = []
    while t >= config.min_temp:
        prop = propose(current, q, rng,
                       max_len=config.max_len,
                       reverse_epsilon=config.reverse_epsilon)
        step_accepted = False
        if prop is None:
            failures += 1
        else:
            any_proposal = True
            s_new = scorer(prop.new_caption)
            if s_new >= s_best:
                best, s_best = prop.new_caption, s_new
            alpha = acceptance_ratio(current, prop, s_cur, s_new, t,
                                     eta=config.eta,
                                     eta_inside_temperature=config.eta_inside_temperature)
            if rng.random() < alpha:
                current, s_cur = prop.new_caption, s_new
                step_accepted = True
                accepted += 1
        if config.keep_trace:
            trace.append(TraceStep(step, t, s_cur, s_best, step_accepted))
        t *= config.cooling
        step += 1
    if not any_proposal:
        log.warning("decode: no valid proposal was ever available; returning init")
    return DecodeResult(best, s_best, tuple(trace), step, accepted, failures,
                        no_proposals=not any_proposal)


def sample_fixed_temp(model: CcaModel, phi: SparseVec, q: ContextTable,
                      init: Caption, t: float, steps: int, seed: int,
                      psi_fn: PsiFn, eta: float = 0.0, max_len: int = 50,
                      reverse_epsilon: float = 0.0,
                      eta_inside_temperature: bool = True) -> list[Caption]:
    """Constant-temperature chain; returns the visited states (init included).

    No annealing and no best-so-far shortcut: this is the raw sampler,
    kept around to check the chain's stationary distribution on small
    enumerable spaces.
    """
    if t <= 0:
        raise ValueError("temperature must be positive")
    rng = np.random.default_rng(seed)
    scorer = _CachedScorer(model, phi, psi_fn, eta)
    current = tuple(init)
    s_cur = scorer(current)
    visited = [current]
    for _ in range(steps):
        prop = propose(current, q, rng, max_len=max_len,
                       reverse_epsilon=reverse_epsilon)
        if prop is not None:
            s_new = scorer(prop.new_caption)
            alpha = acceptance_ratio(current, prop, s_cur, s_new, t, eta=eta,
                                     eta_inside_temperature=eta_inside_temperature)
            if rng.random() < alpha:
                current, s_cur = prop.new_caption, s_new
        visited.append(current)
    return visited


def stable_id_hash(scene_id: str) -> int:
    """First 8 bytes of sha256, as an unsigned int (reproducible across runs)."""
    return int.from_bytes(hashlib.sha256(scene_id.encode("utf-8")).digest()[:8], "big")


def derive_scene_seed(seed: int, scene_id: str) -> int:
    """Per-scene chain seed: base seed xor a stable hash of the scene id."""
    return (seed ^ stable_id_hash(scene_id)) & (2**63 - 1)


def choose_init(init_pool: Sequence[Caption], seed: int, scene_id: str) -> Caption:
    """Uniform draw from the init pool on a stream separate from the chain's."""
    if not init_pool:
        raise ValueError("init pool is empty")
    rng = np.random.default_rng(derive_scene_seed(seed, scene_id) ^ INIT_STREAM_SALT)
    return tuple(init_pool[int(rng.integers(len(init_pool)))])


def greedy_init(q: ContextTable) -> Caption:
    """Highest-count whole-sentence phrase; deterministic tie-break.

    Falls back to the highest-count phrase in any <begin> context when Q
    never saw a complete sentence short enough to be a phrase.
    """
    def best_of(ctxs: Iterable[tuple[str, str]]) -> Caption | None:
        top: tuple[int, Phrase] | None = None
        for ctx in ctxs:
            entry = q.entries[ctx]
            for k, phrase in enumerate(entry.phrases):
                cand = (int(entry.counts[k]), phrase)
                if top is None or cand[0] > top[0] or (cand[0] == top[0] and cand[1] < top[1]):
                    top = cand
        return top[1] if top else None

    full = best_of([c for c in q.entries if c == (BEGIN, END)])
    if full is not None:
        return full
    partial = best_of([c for c in q.entries if c[0] == BEGIN])
    if partial is None:
        raise ValueError("context table has no <begin> context to seed from")
    return partial


def decode_batch(model: CcaModel, inputs: Sequence[tuple[str, SparseVec]],
                 q: ContextTable, config: DecoderConfig, psi_fn: PsiFn,
                 init_pool: Sequence[Caption] | None = None,
                 init: Caption | None = None,
                 ) -> list[tuple[str, Caption, float]]:
    """Decode each (id, phi) with a per-id derived seed; order-independent.

    Either a fixed ``init`` caption or an ``init_pool`` to draw one per
    scene must be given.  Per-input failures are logged and skipped
    without aborting the batch.
    """
    if (init is None) == (init_pool is None):
        raise ValueError("exactly one of init and init_pool must be given")
    out: list[tuple[str, Caption, float]] = []
    for scene_id, phi in inputs:
        scene_config = replace(config, seed=derive_scene_seed(config.seed, scene_id))
        start = init if init is not None else choose_init(init_pool, config.seed, scene_id)
        try:
            result = decode(model, phi, q, start, scene_config, psi_fn)
        except Exception:
            log.exception("decode failed for scene %r; continuing batch", scene_id)
            continue
        out.append((scene_id, result.caption, result.score))
    return out


def write_decode_output(results: Sequence[tuple[str, Caption, float]], path) -> None:
    """Tab-separated "scene_id, caption, score" lines, sorted by scene_id."""
    with open(path, "w", encoding="utf-8") as fh:
        for scene_id, caption, s in sorted(results):
            fh.write(f"{scene_id}\t{' '.join(caption)}\t{s!r}\n")


def load_decode_output(path) -> list[tuple[str, Caption, float]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            out.append((parts[0], tuple(parts[1].split(" ")), float(parts[2])))
    return out
