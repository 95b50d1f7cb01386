from .checkpoint import Checkpoint, CheckpointError
from .data import (Corpus, Vocabulary, build_pairs, read_corpus, read_pairs_tsv,
                   tokenize, write_corpus)
from .synthetic import SyntheticCorpusSpec, generate_synthetic_corpus
from .trainer import (Adam, MetricConfigs, TrainConfig, TrainingAborted, TrainResult,
                      clip_grad_norm, evaluate, format_log, select_best, train)
