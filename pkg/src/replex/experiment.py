"""Glue between a RunConfig and the training loop: data, vocabulary, model."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .seq2seq import Seq2Seq
from .training import (Vocabulary, build_pairs, generate_synthetic_corpus, read_corpus,
                       read_pairs_tsv, train)
from .training.trainer import Pair, TrainResult


@dataclass
class Prepared:
    vocab: Vocabulary
    train_pairs: list[Pair]
    valid_pairs: list[Pair]


def _read(path: str):
    if Path(path).suffix == ".tsv":
        return read_pairs_tsv(path)
    return read_corpus(path)


def load_corpora(cfg: RunConfig):
    """(train, valid) dialogue lists, synthetic when no corpus file is configured."""
    if not cfg.train_corpus:
        corpus = generate_synthetic_corpus(cfg.synthetic_spec())
        cut = len(corpus) - cfg.synthetic_valid
        return corpus[:cut], corpus[cut:]
    return _read(cfg.train_corpus), _read(cfg.valid_corpus)


def prepare(cfg: RunConfig) -> Prepared:
    train_corpus, valid_corpus = load_corpora(cfg)
    vocab = Vocabulary.build(train_corpus, cfg.vocab_max)
    kw = dict(history_turns=cfg.history_turns, message_truncation=cfg.message_truncation,
              response_truncation=cfg.response_truncation)
    train_pairs = build_pairs(train_corpus, vocab, **kw)
    valid_pairs = build_pairs(valid_corpus, vocab, **kw)
    if not train_pairs or not valid_pairs:
        raise ValueError("corpus produced no message/response pairs")
    return Prepared(vocab, train_pairs, valid_pairs)


def run(cfg: RunConfig, data: Prepared | None = None, on_validation=None) -> TrainResult:
    data = data or prepare(cfg)
    model = Seq2Seq(cfg.model_config(len(data.vocab)), seed=cfg.seed)
    return train(model, data.train_pairs, data.valid_pairs, cfg.train_config(),
                 cfg.metric_configs(), vocab=data.vocab.itos, on_validation=on_validation)
