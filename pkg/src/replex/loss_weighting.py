"""Token- and example-level loss weighting.

Every per-token function accepts a float or a numpy array of probabilities
and clamps probabilities to ``[EPS, 1]`` before taking logs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EPS = 1e-12


class Scheme(str, enum.Enum):
    CE = "ce"
    FL = "fl"
    LDR = "ldr"
    TFL = "tfl"
    TLDR = "tldr"
    UNIFORM = "uniform"


TOKEN_LEVEL = frozenset({Scheme.CE, Scheme.TFL, Scheme.TLDR, Scheme.UNIFORM})


@dataclass(frozen=True)
class WeightingScheme:
    kind: Scheme = Scheme.CE
    gamma: float = 2.0
    uniform_w: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Scheme(self.kind))
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.uniform_w <= 0:
            raise ValueError(f"uniform_w must be > 0, got {self.uniform_w}")

    @property
    def token_level(self) -> bool:
        return self.kind in TOKEN_LEVEL


def _clamp(p):
    return np.clip(p, EPS, 1.0)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def ce(p):
    return _out(-np.log(_clamp(p)))


def cosw(p):
    """Cosine weight mapping [0, 1] onto [2, 0]."""
    return _out(np.cos(np.asarray(p, dtype=np.float64) * np.pi) + 1.0)


def tfl_weight(p, gamma: float):
    return _out((1.0 - _clamp(p)) ** gamma)


def tfl_token(p, gamma: float = 2.0):
    p = _clamp(p)
    return _out((1.0 - p) ** gamma * -np.log(p))


def tldr_token(p):
    p = _clamp(p)
    return _out((np.cos(p * np.pi) + 1.0) * -np.log(p))


def uniform_token(p, w: float = 2.0):
    return _out(w * -np.log(_clamp(p)))


def grad_ce(p):
    return _out(-1.0 / _clamp(p))


def grad_tfl(p, gamma: float = 2.0):
    p = _clamp(p)
    log_p = np.log(p)
    if gamma == 0:
        first = np.zeros_like(p)
    else:
        # the focusing term vanishes with log(p) at p = 1 even when gamma < 1
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.where(log_p == 0.0, 0.0, gamma * (1.0 - p) ** (gamma - 1.0) * log_p)
    return _out(first - (1.0 - p) ** gamma / p)


def grad_tldr(p):
    p = _clamp(p)
    return _out(np.pi * np.sin(p * np.pi) * np.log(p) - (np.cos(p * np.pi) + 1.0) / p)


def _probs(sp: Sequence[float]) -> np.ndarray:
    arr = np.asarray(sp, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("a sequence needs at least one token probability")
    return arr


def sequence_easiness(sp: Sequence[float]) -> float:
    """Mean token probability; low values mark hard examples."""
    return float(np.mean(_probs(sp)))


def sequence_loss_mean(sp: Sequence[float]) -> float:
    return float(np.mean(ce(_probs(sp))))


def fl_example(sp: Sequence[float], gamma: float = 2.0) -> float:
    return (1.0 - sequence_easiness(sp)) ** gamma * sequence_loss_mean(sp)


def ldr_example(sp: Sequence[float]) -> float:
    return cosw(sequence_easiness(sp)) * sequence_loss_mean(sp)


def token_loss(p, scheme: WeightingScheme):
    """Per-token loss of a token-level scheme."""
    kind = scheme.kind
    if kind is Scheme.CE:
        return ce(p)
    if kind is Scheme.TFL:
        return tfl_token(p, scheme.gamma)
    if kind is Scheme.TLDR:
        return tldr_token(p)
    if kind is Scheme.UNIFORM:
        return uniform_token(p, scheme.uniform_w)
    raise ValueError(f"{kind.value} is an example-level scheme")


def token_loss_grad(p, scheme: WeightingScheme):
    """Derivative of :func:`token_loss` with respect to the probability."""
    kind = scheme.kind
    if kind is Scheme.CE:
        return grad_ce(p)
    if kind is Scheme.TFL:
        return grad_tfl(p, scheme.gamma)
    if kind is Scheme.TLDR:
        return grad_tldr(p)
    if kind is Scheme.UNIFORM:
        return scheme.uniform_w * grad_ce(p)
    raise ValueError(f"{kind.value} is an example-level scheme")


def example_weight(sp: Sequence[float], scheme: WeightingScheme) -> float:
    """Per-sequence weight of an example-level scheme, treated as a constant."""
    easiness = sequence_easiness(sp)
    if scheme.kind is Scheme.FL:
        return (1.0 - easiness) ** scheme.gamma
    if scheme.kind is Scheme.LDR:
        return cosw(easiness)
    raise ValueError(f"{scheme.kind.value} is a token-level scheme")


def weighted_batch_loss(sequences: Sequence[Sequence[float]], scheme: WeightingScheme) -> float:
    """Reduce a batch of per-token probabilities to one loss value.

    Token-level schemes average the weighted token losses over every token in
    the batch; FL and LDR average their per-sequence losses over sequences.
    """
    if len(sequences) == 0:
        raise ValueError("empty batch")
    seqs = [_probs(sp) for sp in sequences]
    if scheme.token_level:
        flat = np.concatenate(seqs)
        return float(np.sum(token_loss(flat, scheme)) / flat.size)
    return float(np.mean([example_weight(sp, scheme) * sequence_loss_mean(sp) for sp in seqs]))


def gradient_curves(gamma: float = 2.0, step: float = 0.005) -> np.ndarray:
    """Loss and gradient curves sampled on ``step, 2*step, ..., 1 - step``.

    Columns: p, ce, tfl, tldr, grad_ce, grad_tfl, grad_tldr.
    """
    n = int(round(1.0 / step)) - 1
    p = np.round(np.arange(1, n + 1) * step, 12)
    return np.column_stack([
        p, ce(p), tfl_token(p, gamma), tldr_token(p),
        grad_ce(p), grad_tfl(p, gamma), grad_tldr(p),
    ])


GRADCURVE_HEADER = ("p", "ce", "tfl", "tldr", "grad_ce", "grad_tfl", "grad_tldr")


__all__ = [
    "EPS", "Scheme", "WeightingScheme", "ce", "cosw", "tfl_weight", "tfl_token",
    "tldr_token", "uniform_token", "grad_ce", "grad_tfl", "grad_tldr",
    "sequence_easiness", "sequence_loss_mean", "fl_example", "ldr_example",
    "token_loss", "token_loss_grad", "example_weight", "weighted_batch_loss",
    "gradient_curves", "GRADCURVE_HEADER",
]
