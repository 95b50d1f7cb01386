"""N-gram repetition and quality metrics for generated utterances.

Utterances are plain sequences of hashable tokens (surface strings at this
layer). All functions are pure.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

TokenSequence = Sequence[Hashable]


@dataclass(frozen=True)
class DimenConfig:
    n: int = 4
    alpha: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if len(self.alpha) != self.n:
            raise ValueError(f"alpha has {len(self.alpha)} weights, expected n={self.n}")
        if any(a < 0 for a in self.alpha):
            raise ValueError("alpha weights must be non-negative")
        if abs(sum(self.alpha) - 1.0) > 1e-9:
            raise ValueError(f"alpha must sum to 1, got {sum(self.alpha)!r}")


def _default_beta() -> tuple[float, ...]:
    return tuple(round(0.9 - 0.1 * i, 10) for i in range(10))


@dataclass(frozen=True)
class Wl2Config:
    m: int = 10
    beta: tuple[float, ...] = field(default_factory=_default_beta)

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.m < 1:
            raise ValueError(f"m must be positive, got {self.m}")
        if len(self.beta) != self.m:
            raise ValueError(f"beta has {len(self.beta)} weights, expected m={self.m}")
        if any(b < 0 for b in self.beta):
            raise ValueError("beta weights must be non-negative")


def ngrams(seq: TokenSequence, k: int) -> list[tuple]:
    """Contiguous k-grams of ``seq`` in order, duplicates kept."""
    if k < 1:
        raise ValueError(f"n-gram order must be >= 1, got {k}")
    seq = list(seq)
    return [tuple(seq[i:i + k]) for i in range(len(seq) - k + 1)]


def _ratio(unique: int, length: int, k: int) -> float:
    if length < k:
        return 1.0
    return min(1.0, unique / max(length - k, 1))


def distinct(seq: TokenSequence, k: int) -> float:
    """Unique k-gram ratio, clamped to [0, 1]; texts shorter than k score 1."""
    grams = ngrams(seq, k)
    return _ratio(len(set(grams)), len(seq), k)


def u_dimen(seq: TokenSequence, cfg: DimenConfig = DimenConfig()) -> float:
    score = 0.0
    for k, a in enumerate(cfg.alpha, start=1):
        score += a * distinct(seq, k)
    return score


def l_dimen(utterances: Sequence[TokenSequence], cfg: DimenConfig = DimenConfig()) -> float:
    """DIMEN of a whole list of utterances.

    k-grams never cross an utterance boundary; the denominator uses the pooled
    token count, so a single-utterance list scores the same as :func:`u_dimen`.
    """
    total = sum(len(u) for u in utterances)
    score = 0.0
    for k, a in enumerate(cfg.alpha, start=1):
        pooled = set()
        for u in utterances:
            pooled.update(ngrams(u, k))
        score += a * _ratio(len(pooled), total, k)
    return score


def histogram(scores: Sequence[float], cfg: Wl2Config = Wl2Config()) -> list[int]:
    """Equal-width bins over [0, 1]; left-closed, with 1.0 in the last bin."""
    counts = [0] * cfg.m
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"score {s!r} outside [0, 1]")
        counts[min(int(s * cfg.m), cfg.m - 1)] += 1
    return counts


def wl2(hist: Sequence[int], cfg: Wl2Config = Wl2Config()) -> float:
    if len(hist) != cfg.m:
        raise ValueError(f"histogram has {len(hist)} bins, config expects {cfg.m}")
    return math.sqrt(math.fsum(b * c * c for b, c in zip(cfg.beta, hist)))


BLEU_EPSILON = 1e-9


def bleu4(hypotheses: Sequence[TokenSequence], references: Sequence[TokenSequence]) -> float:
    """Corpus BLEU-4 with one reference per hypothesis.

    Clipped n-gram counts and lengths are summed over the corpus before the
    ratios are taken. An order with zero matches contributes ``BLEU_EPSILON``
    in place of the zero count.
    """
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses but {len(references)} references")
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for k in range(1, 5):
            h = Counter(ngrams(hyp, k))
            r = Counter(ngrams(ref, k))
            matches[k - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[k - 1] += sum(h.values())
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        log_p += 0.25 * math.log((m if m > 0 else BLEU_EPSILON) / max(t, 1))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def report(hypotheses: Sequence[TokenSequence],
           references: Sequence[TokenSequence] | None = None,
           dimen_cfg: DimenConfig = DimenConfig(),
           wl2_cfg: Wl2Config = Wl2Config()) -> dict:
    """All repetition metrics for a list of generated utterances.

    ``bleu4`` is included only when references are given.
    """
    scores = [u_dimen(h, dimen_cfg) for h in hypotheses]
    hist = histogram(scores, wl2_cfg)
    out = {
        "wl2": wl2(hist, wl2_cfg),
        "l_dimen": l_dimen(hypotheses, dimen_cfg),
        "mean_u_dimen": math.fsum(scores) / len(scores) if scores else 1.0,
        "hist": hist,
    }
    if references is not None:
        out["bleu4"] = bleu4(hypotheses, references)
    return out


def format_report(rep: dict) -> str:
    lines = []
    for key in ("wl2", "l_dimen", "bleu4", "mean_u_dimen"):
        if key in rep:
            lines.append(f"{key}={rep[key]:.6f}")
    lines.append("hist=[" + ",".join(str(c) for c in rep["hist"]) + "]")
    return "\n".join(lines)
