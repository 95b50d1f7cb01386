"""Text checkpoint container with bit-exact parameter round-trips.

Layout::

    REPLEX-CHECKPOINT 1
    meta <json: model config, seed, epoch, step, valid_wl2, vocab, extra>
    param <name> <d0,d1,...> <hex of big-endian float64 values>
    ...
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..seq2seq import ModelConfig, Seq2Seq

MAGIC = "REPLEX-CHECKPOINT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    seed: int
    epoch: float = 0.0
    step: int = 0
    valid_wl2: float = float("nan")
    vocab: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: Seq2Seq, **meta) -> "Checkpoint":
        params = {k: v.data.copy() for k, v in model.params.items()}
        return cls(config=model.cfg, params=params, seed=model.seed, **meta)

    def to_model(self) -> Seq2Seq:
        model = Seq2Seq(self.config, seed=self.seed)
        if set(model.params) != set(self.params):
            raise CheckpointError("checkpoint parameters do not match the model config")
        for name, value in self.params.items():
            if model.params[name].shape != value.shape:
                raise CheckpointError(f"shape mismatch for {name}")
            model.params[name].data = value.copy()
        return model

    def save(self, path: str | Path):
        meta = {
            "config": self.config.to_dict(), "seed": self.seed, "epoch": self.epoch,
            "step": self.step, "valid_wl2": self.valid_wl2, "vocab": self.vocab,
            "metrics": self.metrics,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{MAGIC} {VERSION}\n")
            fh.write("meta " + json.dumps(meta, sort_keys=True) + "\n")
            for name, value in self.params.items():
                shape = ",".join(str(d) for d in value.shape)
                fh.write(f"param {name} {shape} {value.astype('>f8').tobytes().hex()}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2 or header[0] != MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            if int(header[1]) != VERSION:
                raise CheckpointError(f"{path}: unsupported version {header[1]}")
            meta = None
            params: dict[str, np.ndarray] = {}
            for line in fh:
                kind, _, rest = line.rstrip("\n").partition(" ")
                if kind == "meta":
                    meta = json.loads(rest)
                elif kind == "param":
                    name, shape, hexdata = rest.split(" ")
                    dims = tuple(int(d) for d in shape.split(",")) if shape else ()
                    arr = np.frombuffer(bytes.fromhex(hexdata), dtype=">f8").astype(np.float64)
                    params[name] = arr.reshape(dims)
                elif kind:
                    raise CheckpointError(f"{path}: unknown record {kind!r}")
        if meta is None:
            raise CheckpointError(f"{path}: missing meta record")
        return cls(config=ModelConfig(**meta["config"]), params=params, seed=meta["seed"],
                   epoch=meta["epoch"], step=meta["step"], valid_wl2=meta["valid_wl2"],
                   vocab=meta["vocab"], metrics=meta.get("metrics", {}))
