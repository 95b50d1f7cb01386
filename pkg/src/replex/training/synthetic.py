"""A synthetic dialogue corpus with known easy and hard tokens.

Construction of one dialogue (two turns):

* The message is ``message_length`` filler tokens drawn from a Zipf
  distribution over the filler set, with ``1..max_hard_per_message`` distinct
  hard tokens inserted at random positions.
* The response opens with a filler fixed by the message's last token, then
  for each hard token of the message, in order, emits the marker ``w0 w1``
  followed by that hard token, and closes with ``w2``.

Fillers are frequent and predictable from local context (easy). A hard token
occurs in a response only right after the marker and only when the message
carries it, and each one is rare, so predicting it requires copying it
through attention (hard). A model that has not learned to copy tends to
repeat the marker and a favourite hard token, which shows up as repetition.
With ``hard_tokens == 0`` messages and responses are plain Zipf filler strings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    dialogues: int = 3000
    filler_tokens: int = 5
    hard_tokens: int = 40
    zipf_exponent: float = 0.5
    message_length: tuple[int, int] = (3, 6)
    max_hard_per_message: int = 3
    seed: int = 0

    @property
    def vocab_size(self) -> int:
        return self.filler_tokens + self.hard_tokens

    def __post_init__(self):
        if self.filler_tokens < 3:
            raise ValueError("need at least three fillers (marker pair and closer)")
        lo, hi = self.message_length
        if not 1 <= lo <= hi:
            raise ValueError(f"bad message_length range {self.message_length}")
        if self.hard_tokens and self.max_hard_per_message < 1:
            raise ValueError("max_hard_per_message must be >= 1 when hard tokens exist")


def filler_names(spec: SyntheticCorpusSpec) -> list[str]:
    return [f"w{i}" for i in range(spec.filler_tokens)]


def hard_names(spec: SyntheticCorpusSpec) -> list[str]:
    return [f"h{i:03d}" for i in range(spec.hard_tokens)]


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    fillers = filler_names(spec)
    hard = hard_names(spec)
    F = len(fillers)
    zipf = 1.0 / np.arange(1, F + 1) ** spec.zipf_exponent
    zipf /= zipf.sum()
    lo, hi = spec.message_length
    corpus: Corpus = []
    for _ in range(spec.dialogues):
        msg = [fillers[i] for i in rng.choice(F, size=int(rng.integers(lo, hi + 1)), p=zipf)]
        if not hard:
            n = int(rng.integers(lo, hi + 1))
            resp = [fillers[i] for i in rng.choice(F, size=n, p=zipf)]
            corpus.append([" ".join(msg), " ".join(resp)])
            continue
        count = int(rng.integers(1, spec.max_hard_per_message + 1))
        chosen = [hard[i] for i in rng.choice(len(hard), size=count, replace=False)]
        slots = np.sort(rng.choice(len(msg) + 1, size=count, replace=True))
        for offset, (slot, tok) in enumerate(zip(slots, chosen)):
            msg.insert(int(slot) + offset, tok)
        last = fillers.index(msg[-1]) if msg[-1] in fillers else F - 1
        resp = [fillers[(last + 3) % F]]
        for tok in chosen:
            resp += [fillers[0], fillers[1], tok]
        resp.append(fillers[2])
        corpus.append([" ".join(msg), " ".join(resp)])
    return corpus


def token_frequencies(corpus: Corpus) -> dict[str, float]:
    counts: dict[str, int] = {}
    for dialogue in corpus:
        for turn in dialogue:
            for tok in turn.split():
                counts[tok] = counts.get(tok, 0) + 1
    total = sum(counts.values())
    return {t: c / total for t, c in counts.items()}
