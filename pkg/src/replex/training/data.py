"""Corpus files, tokenization, vocabulary and message/response pairs."""
from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from ..seq2seq import EOS, PAD, RESERVED, SEP, UNK

Dialogue = list[str]
Corpus = list[Dialogue]

_TOKEN = re.compile(r"""(?:[^\s.,!?'"]|(?<=\w)'(?=\w))+|[.,!?'"]""")


def tokenize(utterance: str) -> list[str]:
    """Lowercase, split on whitespace and split off ``. , ! ? ' "``.

    An apostrophe between two word characters stays inside the token, so
    contractions such as ``i've`` survive intact.
    """
    return _TOKEN.findall(utterance.lower())


def read_corpus(path: str | Path) -> Corpus:
    """One dialogue per blank-line-separated block, one turn per line."""
    dialogues: Corpus = []
    current: Dialogue = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.strip():
                current.append(line)
            elif current:
                dialogues.append(current)
                current = []
    if current:
        dialogues.append(current)
    return dialogues


def write_corpus(corpus: Corpus, path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join("\n".join(d) for d in corpus))
        fh.write("\n")


def read_pairs_tsv(path: str | Path) -> Corpus:
    """Convert ``message<TAB>response`` lines into two-turn dialogues."""
    corpus: Corpus = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected message<TAB>response")
            corpus.append(parts)
    return corpus


class Vocabulary:
    """Token/id map with reserved ids for padding, unknown, EOS and turn separator."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, corpus: Corpus, max_size: int = 30000) -> "Vocabulary":
        """Most frequent ``max_size`` tokens; ties broken lexicographically."""
        counts = Counter(tok for d in corpus for turn in d for tok in tokenize(turn))
        for r in RESERVED:
            counts.pop(r, None)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([t for t, _ in ranked[:max_size]])

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids if i not in (PAD, EOS)]


def build_pairs(corpus: Corpus, vocab: Vocabulary, history_turns: int = 3,
                message_truncation: int = 128,
                response_truncation: int = 32) -> list[tuple[list[int], list[int]]]:
    """Every turn after the first becomes a response to its preceding history.

    History turns are joined with the separator id; messages keep their most
    recent ``message_truncation`` ids and responses their first
    ``response_truncation``. Pairs with an empty side are dropped.
    """
    pairs = []
    for dialogue in corpus:
        if len(dialogue) < 2:
            continue
        turns = [vocab.encode(tokenize(t)) for t in dialogue]
        for t in range(1, len(turns)):
            message: list[int] = []
            for prev in turns[max(0, t - history_turns):t]:
                if message:
                    message.append(SEP)
                message.extend(prev)
            message = message[-message_truncation:]
            response = turns[t][:response_truncation]
            if message and response:
                pairs.append((message, response))
    return pairs


__all__ = [
    "Corpus", "Vocabulary", "tokenize", "read_corpus", "write_corpus",
    "read_pairs_tsv", "build_pairs", "PAD", "UNK", "EOS", "SEP",
]
