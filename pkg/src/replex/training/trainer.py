"""Training loop, Adam, gradient clipping, validation and checkpoint selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import tensor as T
from .. import text_metrics as tm
from ..loss_weighting import WeightingScheme
from ..seq2seq import Seq2Seq
from .checkpoint import Checkpoint

log = logging.getLogger(__name__)

Pair = tuple[Sequence[int], Sequence[int]]
LOG_COLUMNS = ("epoch", "step", "wl2", "l_dimen", "bleu4", "mean_u_dimen")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    scheme: WeightingScheme = field(default_factory=WeightingScheme)
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 256
    epochs: float = 100.0
    validation_interval_epochs: float = 0.5
    message_truncation: int = 128
    response_truncation: int = 32
    history_turns: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "clip_norm", "batch_size", "epochs",
                     "validation_interval_epochs", "message_truncation",
                     "response_truncation", "history_turns"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.validation_interval_epochs > self.epochs:
            raise ValueError("validation interval is longer than the whole run")


@dataclass(frozen=True)
class MetricConfigs:
    dimen: tm.DimenConfig = tm.DimenConfig()
    wl2: tm.Wl2Config = tm.Wl2Config()


class Adam:
    def __init__(self, params: Sequence[T.Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def global_norm(params: Sequence[T.Tensor]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))


def clip_grad_norm(params: Sequence[T.Tensor], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_norm(params)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def validation_steps(steps_per_epoch: int, epochs: float, interval: float) -> list[int]:
    """Optimizer steps after which validation runs; always includes the last step."""
    total = int(round(epochs * steps_per_epoch))
    points = set()
    k = 1
    while k * interval <= epochs + 1e-9:
        points.add(max(1, int(round(k * interval * steps_per_epoch))))
        k += 1
    points.add(total)
    return sorted(p for p in points if p <= total)


def evaluate(model: Seq2Seq, pairs: Sequence[Pair], metric_cfgs: MetricConfigs = MetricConfigs(),
             max_len: int = 32, batch_size: int = 128) -> dict:
    """Greedy-decode every message and score against the references.

    Returns a dict with keys wl2, l_dimen, bleu4, mean_u_dimen and hist.
    """
    if not pairs:
        raise ValueError("nothing to evaluate")
    hyps: list[list[int]] = []
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i:i + batch_size]
        hyps.extend(model.generate_batch([m for m, _ in chunk], max_len))
    refs = [list(r)[:max_len] for _, r in pairs]
    rep = tm.report(hyps, refs, metric_cfgs.dimen, metric_cfgs.wl2)
    return {k: rep[k] for k in ("wl2", "l_dimen", "bleu4", "mean_u_dimen", "hist")}


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    log: list[dict]
    losses: list[float]
    checkpoints: list[Checkpoint]


def select_best(checkpoints: Sequence[Checkpoint], guard: float = 0.5) -> Checkpoint:
    """Lowest validation WL2 among checkpoints whose l-DIMEN reaches ``guard``
    times the final one; falls back to the last checkpoint."""
    last = checkpoints[-1]
    floor = guard * last.metrics["l_dimen"]
    eligible = [c for c in checkpoints if c.metrics["l_dimen"] >= floor]
    if not eligible:
        return last
    return min(eligible, key=lambda c: (c.valid_wl2, -c.metrics["l_dimen"], -c.step))


def train(model: Seq2Seq, train_pairs: Sequence[Pair], valid_pairs: Sequence[Pair],
          cfg: TrainConfig, metric_cfgs: MetricConfigs = MetricConfigs(),
          vocab: Sequence[str] = (), on_validation=None) -> TrainResult:
    if not train_pairs:
        raise ValueError("empty training split")
    if not valid_pairs:
        raise ValueError("empty validation split")
    rng = np.random.default_rng([cfg.seed, 2])
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    n = len(train_pairs)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    checks = validation_steps(steps_per_epoch, cfg.epochs, cfg.validation_interval_epochs)
    total = checks[-1]
    losses: list[float] = []
    rows: list[dict] = []
    saved: list[Checkpoint] = []
    order = np.array([], dtype=np.int64)
    step = 0
    while step < total:
        if order.size == 0:
            order = rng.permutation(n)
        idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
        batch = [train_pairs[i] for i in idx]
        model.training = True
        model.zero_grad()
        with T.Tape() as tape:
            loss = model.forward_loss([m for m, _ in batch], [r for _, r in batch], cfg.scheme)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingAborted(f"non-finite loss {value} at step {step + 1}")
        T.backward(tape, loss)
        clip_grad_norm(params, cfg.clip_norm)
        opt.step()
        losses.append(value)
        step += 1
        if step in checks:
            model.training = False
            metrics = evaluate(model, valid_pairs, metric_cfgs, cfg.response_truncation)
            epoch = step / steps_per_epoch
            row = {"epoch": epoch, "step": step,
                   **{k: metrics[k] for k in LOG_COLUMNS[2:]}}
            rows.append(row)
            ckpt = Checkpoint.from_model(model, epoch=epoch, step=step,
                                         valid_wl2=metrics["wl2"], vocab=list(vocab),
                                         metrics=metrics)
            saved.append(ckpt)
            log.info("epoch %.2f step %d loss %.4f wl2 %.3f l_dimen %.3f bleu4 %.4f",
                     epoch, step, value, metrics["wl2"], metrics["l_dimen"], metrics["bleu4"])
            if on_validation is not None:
                on_validation(ckpt)
    model.training = False
    return TrainResult(best=select_best(saved), last=saved[-1], log=rows,
                       losses=losses, checkpoints=saved)


def format_log(rows: Sequence[dict]) -> str:
    lines = [",".join(LOG_COLUMNS)]
    for r in rows:
        lines.append(f"{r['epoch']!r},{r['step']},{r['wl2']!r},{r['l_dimen']!r},"
                     f"{r['bleu4']!r},{r['mean_u_dimen']!r}")
    return "\n".join(lines) + "\n"
