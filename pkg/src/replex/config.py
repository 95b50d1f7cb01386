"""Run configuration: named profiles plus a flat ``key = value`` file format.

Example file::

    # desk run on the synthetic corpus
    profile = desk
    scheme = tldr
    epochs = 20

Unknown keys are rejected. Values given on the command line override the file,
which overrides the profile.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from . import text_metrics as tm
from .loss_weighting import Scheme, WeightingScheme
from .seq2seq import Attention, ModelConfig
from .training.synthetic import SyntheticCorpusSpec
from .training.trainer import MetricConfigs, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data; an empty train_corpus selects the synthetic corpus
    train_corpus: str = ""
    valid_corpus: str = ""
    vocab_max: int = 30000
    synthetic_dialogues: int = 3300
    synthetic_valid: int = 300
    synthetic_fillers: int = 5
    synthetic_hard_tokens: int = 40
    synthetic_zipf: float = 0.5
    synthetic_message_min: int = 3
    synthetic_message_max: int = 6
    synthetic_max_hard: int = 3
    # model
    attention: str = "pre"
    encoder_layers: int = 2
    decoder_layers: int = 2
    hidden_size: int = 512
    embedding_size: int = 200
    dropout: float = 0.1
    tie_embeddings: bool = False
    # optimisation
    scheme: str = "ce"
    gamma: float = 2.0
    uniform_w: float = 2.0
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    clip_norm: float = 5.0
    batch_size: int = 256
    epochs: float = 100.0
    valid_interval: float = 0.5
    message_truncation: int = 128
    response_truncation: int = 32
    history_turns: int = 3
    seed: int = 0
    # metrics
    dimen_n: int = 4
    dimen_alpha: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    wl2_bins: int = 10
    wl2_beta: tuple[float, ...] = tm.Wl2Config().beta
    out: str = "runs"

    def scheme_obj(self) -> WeightingScheme:
        return WeightingScheme(Scheme(self.scheme), gamma=self.gamma, uniform_w=self.uniform_w)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            scheme=self.scheme_obj(), learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2, clip_norm=self.clip_norm,
            batch_size=self.batch_size, epochs=self.epochs,
            validation_interval_epochs=self.valid_interval,
            message_truncation=self.message_truncation,
            response_truncation=self.response_truncation,
            history_turns=self.history_turns, seed=self.seed)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            attention=Attention(self.attention), encoder_layers=self.encoder_layers,
            decoder_layers=self.decoder_layers, hidden_size=self.hidden_size,
            embedding_size=self.embedding_size, vocab_size=vocab_size,
            dropout=self.dropout, tie_embeddings=self.tie_embeddings)

    def metric_configs(self) -> MetricConfigs:
        return MetricConfigs(tm.DimenConfig(self.dimen_n, tuple(self.dimen_alpha)),
                             tm.Wl2Config(self.wl2_bins, tuple(self.wl2_beta)))

    def synthetic_spec(self) -> SyntheticCorpusSpec:
        return SyntheticCorpusSpec(
            dialogues=self.synthetic_dialogues, filler_tokens=self.synthetic_fillers,
            hard_tokens=self.synthetic_hard_tokens, zipf_exponent=self.synthetic_zipf,
            message_length=(self.synthetic_message_min, self.synthetic_message_max),
            max_hard_per_message=self.synthetic_max_hard, seed=self.seed)

    def validate(self) -> "RunConfig":
        """Build every derived object once so bad values surface as ConfigError."""
        try:
            self.train_config()
            self.model_config(8)
            self.metric_configs()
            if not self.train_corpus:
                self.synthetic_spec()
                if not 0 < self.synthetic_valid < self.synthetic_dialogues:
                    raise ValueError("synthetic_valid must be between 0 and synthetic_dialogues")
            elif not self.valid_corpus:
                raise ValueError("valid_corpus is required when train_corpus is set")
            if self.vocab_max < 1:
                raise ValueError("vocab_max must be positive")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


FULL = RunConfig()

DESK = dataclasses.replace(
    FULL, vocab_max=196, attention="post", encoder_layers=1, decoder_layers=1,
    hidden_size=64, embedding_size=32, batch_size=32, epochs=30.0, valid_interval=1.0)

PROFILES = {"desk": DESK, "paper": FULL}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_CHOICES = {
    "scheme": {s.value for s in Scheme},
    "attention": {a.value for a in Attention},
}


def convert(key: str, raw: str):
    """Parse one textual value into the type of field ``key``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            value = low in ("true", "1", "yes")
        elif isinstance(default, int):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        elif isinstance(default, tuple):
            value = tuple(float(x) for x in raw.replace(",", " ").split())
        else:
            value = raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{key} must be one of {sorted(_CHOICES[key])}, got {raw!r}")
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key == "profile":
            if raw.strip() not in PROFILES:
                raise ConfigError(f"{source}:{lineno}: unknown profile {raw.strip()!r}")
            values[key] = raw.strip()
            continue
        try:
            values[key] = convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def build_config(path: str | Path | None = None, profile: str | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Profile, then file, then explicit overrides (later wins)."""
    file_values: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        file_values = parse_config_text(text, str(path))
    base_name = profile or file_values.pop("profile", None) or "paper"
    file_values.pop("profile", None)
    if base_name not in PROFILES:
        raise ConfigError(f"unknown profile {base_name!r}")
    merged = {**file_values, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    unknown = set(merged) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = dataclasses.replace(PROFILES[base_name], **merged)
    # relative corpus paths are resolved against the config file's directory
    if path is not None:
        root = Path(path).parent
        for key in ("train_corpus", "valid_corpus"):
            val = getattr(cfg, key)
            if val and key in file_values and not Path(val).is_absolute():
                setattr(cfg, key, str(root / val))
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
