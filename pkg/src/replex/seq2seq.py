"""LSTM encoder-decoder with four attention wirings.

``post``          attention reads the decoder output; the output layer sees
                  ``g'(c_t, s_t)``.
``if``            input feeding: the previous attentional vector is appended
                  to the decoder input.
``pre``           pre-attention: the previous context and the input embedding
                  are concatenated and projected back to embedding size before
                  entering the RNN; the output layer sees ``s_t``.
``pre-highway``   pre-attention combined by a gated highway connection.

Attention is Luong's "general" score ``s^T W h``. The end-of-sequence id doubles
as the start symbol of every response.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import loss_weighting as lw
from . import tensor as T
from .tensor import Tensor

PAD, UNK, EOS, SEP = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<eos>", "<sep>")
HIGHWAY_GATE_BIAS = -1.0


class Attention(str, enum.Enum):
    POST = "post"
    INPUT_FEEDING = "if"
    PRE_CONCAT = "pre"
    PRE_HIGHWAY = "pre-highway"


@dataclass
class ModelConfig:
    attention: Attention = Attention.PRE_CONCAT
    encoder_layers: int = 2
    decoder_layers: int = 2
    hidden_size: int = 512
    embedding_size: int = 200
    vocab_size: int = 30004
    dropout: float = 0.1
    tie_embeddings: bool = False
    init_scale: float = 0.08

    def __post_init__(self):
        self.attention = Attention(self.attention)
        for name in ("encoder_layers", "decoder_layers", "hidden_size",
                     "embedding_size", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attention"] = self.attention.value
        return d


def parameter_count(cfg: ModelConfig) -> int:
    V, E, H = cfg.vocab_size, cfg.embedding_size, cfg.hidden_size
    n = V * E if cfg.tie_embeddings else 2 * V * E

    def lstm(first_in: int, layers: int) -> int:
        total = 0
        for k in range(layers):
            total += ((first_in if k == 0 else H) + H) * 4 * H + 4 * H
        return total

    dec_in = E + H if cfg.attention is Attention.INPUT_FEEDING else E
    n += lstm(E, cfg.encoder_layers) + lstm(dec_in, cfg.decoder_layers)
    n += H * H  # attention
    if cfg.attention in (Attention.POST, Attention.INPUT_FEEDING):
        n += 2 * H * H + H
    elif cfg.attention is Attention.PRE_CONCAT:
        n += (H + E) * E + E
    else:
        n += H * E + 2 * E * E + E
    return n + H * V + V


@dataclass
class DecoderStepState:
    hidden: list[tuple[Tensor, Tensor]]
    prev_context: Tensor | None = None
    prev_attentional: Tensor | None = None


@dataclass
class EncoderMemory:
    outputs: Tensor          # [B, S, H]
    keys: Tensor             # outputs projected by the attention matrix
    mask: np.ndarray         # [B, S], 1 for real tokens
    final: list[tuple[Tensor, Tensor]] = field(default_factory=list)

    @property
    def score_bias(self) -> np.ndarray:
        return np.where(self.mask > 0, 0.0, -1e30)


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = PAD) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), width))
    for b, s in enumerate(seqs):
        ids[b, :len(s)] = s
        mask[b, :len(s)] = 1.0
    return ids, mask


class Seq2Seq:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self.training = False
        self.dropout_rng = np.random.default_rng([seed, 1])
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng([seed, 0]))

    # ------------------------------------------------------------ parameters

    def _weight(self, rng, name: str, *shape: int):
        s = self.cfg.init_scale
        self.params[name] = Tensor(rng.uniform(-s, s, size=shape), requires_grad=True, name=name)

    def _bias(self, name: str, size: int, forget: bool = False, fill: float = 0.0):
        b = np.full(size, fill)
        if forget:
            h = size // 4
            b[h:2 * h] = 1.0
        self.params[name] = Tensor(b, requires_grad=True, name=name)

    def _init_params(self, rng):
        c = self.cfg
        V, E, H = c.vocab_size, c.embedding_size, c.hidden_size
        if c.tie_embeddings:
            self._weight(rng, "embed", V, E)
        else:
            self._weight(rng, "enc_embed", V, E)
            self._weight(rng, "dec_embed", V, E)
        for k in range(c.encoder_layers):
            self._weight(rng, f"enc{k}_wx", E if k == 0 else H, 4 * H)
            self._weight(rng, f"enc{k}_wh", H, 4 * H)
            self._bias(f"enc{k}_b", 4 * H, forget=True)
        dec_in = E + H if c.attention is Attention.INPUT_FEEDING else E
        for k in range(c.decoder_layers):
            self._weight(rng, f"dec{k}_wx", dec_in if k == 0 else H, 4 * H)
            self._weight(rng, f"dec{k}_wh", H, 4 * H)
            self._bias(f"dec{k}_b", 4 * H, forget=True)
        self._weight(rng, "attn_w", H, H)
        if c.attention in (Attention.POST, Attention.INPUT_FEEDING):
            self._weight(rng, "readout_w", 2 * H, H)
            self._bias("readout_b", H)
        elif c.attention is Attention.PRE_CONCAT:
            self._weight(rng, "pre_w", H + E, E)
            self._bias("pre_b", E)
        else:
            self._weight(rng, "ctx_proj_w", H, E)
            self._weight(rng, "gate_w", 2 * E, E)
            # negative carry bias: the gate starts mostly passing y through
            self._bias("gate_b", E, fill=HIGHWAY_GATE_BIAS)
        self._weight(rng, "out_w", H, V)
        self._bias("out_b", V)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _embed(self, side: str) -> Tensor:
        return self.params["embed" if self.cfg.tie_embeddings else f"{side}_embed"]

    def _dropout(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.cfg.dropout, self.training, self.dropout_rng)

    # ------------------------------------------------------------ encoder

    def encode(self, message_ids) -> EncoderMemory:
        """Run the encoder over a batch of messages (lists of ids) or a single one."""
        if len(message_ids) == 0:
            raise ValueError("empty message")
        batch = message_ids if isinstance(message_ids[0], (list, tuple, np.ndarray)) else [message_ids]
        if any(len(m) == 0 for m in batch):
            raise ValueError("empty message")
        ids, mask = pad_batch(batch)
        B, S = ids.shape
        H = self.cfg.hidden_size
        x = self._dropout(T.embedding_lookup(self._embed("enc"), ids))
        final = []
        ragged = not mask.all()
        for k in range(self.cfg.encoder_layers):
            p = self.params
            xw = T.linear(x, p[f"enc{k}_wx"], p[f"enc{k}_b"])
            h = Tensor(np.zeros((B, H)))
            c = Tensor(np.zeros((B, H)))
            outs = []
            for t in range(S):
                gates = T.add(_select_time(xw, t), T.linear(h, p[f"enc{k}_wh"]))
                h_new, c_new = T.lstm_cell(gates, c)
                if ragged and not mask[:, t].all():
                    m = mask[:, t:t + 1]
                    h, c = T.blend(m, h_new, h), T.blend(m, c_new, c)
                else:
                    h, c = h_new, c_new
                outs.append(h)
            final.append((h, c))
            x = T.stack(outs, axis=1)
        keys = T.linear(x, self.params["attn_w"])
        return EncoderMemory(outputs=x, keys=keys, mask=mask, final=final)

    # ------------------------------------------------------------ attention pieces

    def attend(self, query: Tensor, memory: EncoderMemory | Tensor) -> tuple[Tensor, Tensor]:
        """General attention; returns the context vector and the distribution."""
        if isinstance(memory, Tensor):
            outputs = memory if memory.data.ndim == 3 else T.reshape(memory, (1,) + memory.shape)
            memory = EncoderMemory(outputs=outputs, keys=T.linear(outputs, self.params["attn_w"]),
                                   mask=np.ones(outputs.shape[:2]))
        squeeze = query.data.ndim == 1
        if squeeze:
            query = T.reshape(query, (1, -1))
        B, H = query.shape
        scores = T.reshape(T.matmul(memory.keys, T.reshape(query, (B, H, 1))), (B, -1))
        if not memory.mask.all():
            scores = T.add(scores, Tensor(memory.score_bias))
        dist = T.softmax(scores)
        ctx = T.reshape(T.matmul(T.reshape(dist, (B, 1, -1)), memory.outputs), (B, H))
        if squeeze:
            ctx, dist = T.reshape(ctx, (H,)), T.reshape(dist, (dist.shape[1],))
        return ctx, dist

    def highway(self, context: Tensor, y: Tensor) -> Tensor:
        """Gated combination ``z * c' + (1 - z) * y`` with c' the projected context."""
        p = self.params
        cp = T.linear(context, p["ctx_proj_w"])
        z = T.sigmoid(T.linear(T.concat([cp, y]), p["gate_w"], p["gate_b"]))
        return T.add(y, T.mul(z, T.sub(cp, y)))

    # ------------------------------------------------------------ decoder

    def initial_state(self, memory: EncoderMemory) -> DecoderStepState:
        B = memory.mask.shape[0]
        H = self.cfg.hidden_size
        hidden = []
        for k in range(self.cfg.decoder_layers):
            if k < len(memory.final):
                hidden.append(memory.final[k])
            else:
                hidden.append((Tensor(np.zeros((B, H))), Tensor(np.zeros((B, H)))))
        state = DecoderStepState(hidden=hidden)
        variant = self.cfg.attention
        if variant in (Attention.PRE_CONCAT, Attention.PRE_HIGHWAY):
            state.prev_context = Tensor(np.zeros((B, H)))
        elif variant is Attention.INPUT_FEEDING:
            state.prev_attentional = Tensor(np.zeros((B, H)))
        return state

    def _step(self, state: DecoderStepState, y: Tensor,
              memory: EncoderMemory) -> tuple[Tensor, DecoderStepState, Tensor]:
        """One decoder step from an embedded input; returns (readout, new state, attention)."""
        p = self.params
        variant = self.cfg.attention
        if variant is Attention.INPUT_FEEDING:
            x = T.concat([y, state.prev_attentional])
        elif variant is Attention.PRE_CONCAT:
            x = T.linear(T.concat([state.prev_context, y]), p["pre_w"], p["pre_b"])
        elif variant is Attention.PRE_HIGHWAY:
            x = self.highway(state.prev_context, y)
        elif variant is Attention.POST:
            x = y
        else:
            raise ValueError(f"unknown attention variant {variant!r}")
        hidden = []
        for k, (h, c) in enumerate(state.hidden):
            gates = T.add(T.linear(x, p[f"dec{k}_wx"], p[f"dec{k}_b"]), T.linear(h, p[f"dec{k}_wh"]))
            h, c = T.lstm_cell(gates, c)
            hidden.append((h, c))
            x = h
        s = x
        ctx, dist = self.attend(s, memory)
        new = DecoderStepState(hidden=hidden)
        if variant in (Attention.POST, Attention.INPUT_FEEDING):
            readout = T.linear(T.concat([ctx, s]), p["readout_w"], p["readout_b"])
            if variant is Attention.INPUT_FEEDING:
                new.prev_attentional = readout
        else:
            readout = s
            new.prev_context = ctx
        return readout, new, dist

    def logits(self, readout: Tensor) -> Tensor:
        return T.linear(self._dropout(readout), self.params["out_w"], self.params["out_b"])

    def decode_step(self, state: DecoderStepState, prev_ids,
                    memory: EncoderMemory) -> tuple[Tensor, np.ndarray, DecoderStepState]:
        """Advance every sequence in the batch by one token.

        Returns the logits, the next-token distribution and the new state.
        """
        y = self._dropout(T.embedding_lookup(self._embed("dec"), np.atleast_1d(prev_ids)))
        readout, new, _ = self._step(state, y, memory)
        logits = self.logits(readout)
        probs = T.softmax(Tensor(logits.data)).data
        return logits, probs, new

    # ------------------------------------------------------------ training objective

    def token_nll(self, messages: Sequence[Sequence[int]],
                  responses: Sequence[Sequence[int]]) -> tuple[Tensor, np.ndarray, np.ndarray]:
        """Teacher-forced per-token NLL over all ``B*T`` target slots.

        Returns the NLL tensor, the matching probabilities and the 0/1 target
        mask (both flattened to ``[B*T]``). Targets are each response plus EOS.
        """
        if len(messages) == 0 or len(messages) != len(responses):
            raise ValueError("need a non-empty batch of (message, response) pairs")
        if any(len(r) == 0 for r in responses):
            raise ValueError("responses must be non-empty")
        memory = self.encode(list(messages))
        targets, tmask = pad_batch([list(r) + [EOS] for r in responses])
        inputs = np.concatenate([np.full((len(responses), 1), EOS), targets[:, :-1]], axis=1)
        B, Tn = targets.shape
        emb = self._dropout(T.embedding_lookup(self._embed("dec"), inputs))
        state = self.initial_state(memory)
        readouts = []
        for t in range(Tn):
            readout, state, _ = self._step(state, _select_time(emb, t), memory)
            readouts.append(readout)
        flat = T.reshape(T.stack(readouts, axis=1), (B * Tn, -1))
        nll, prob = T.log_softmax_nll(self.logits(flat), targets.reshape(-1))
        return nll, prob, tmask.reshape(-1)

    def forward_loss(self, messages, responses, scheme: lw.WeightingScheme) -> Tensor:
        nll, prob, mask = self.token_nll(messages, responses)
        return weighted_loss(nll, prob, mask.reshape(len(responses), -1), scheme)

    # ------------------------------------------------------------ generation

    def generate_batch(self, messages: Sequence[Sequence[int]], max_len: int = 32) -> list[list[int]]:
        """Greedy decoding; each output stops before EOS or at ``max_len`` tokens."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        was_training, self.training = self.training, False
        try:
            memory = self.encode(list(messages))
            state = self.initial_state(memory)
            B = len(messages)
            prev = np.full(B, EOS)
            out: list[list[int]] = [[] for _ in range(B)]
            done = np.zeros(B, dtype=bool)
            for _ in range(max_len):
                logits, _, state = self.decode_step(state, prev, memory)
                prev = logits.data.argmax(axis=1)
                for b in np.flatnonzero(~done):
                    if prev[b] == EOS:
                        done[b] = True
                    else:
                        out[b].append(int(prev[b]))
                if done.all():
                    break
        finally:
            self.training = was_training
        return out

    def generate(self, message_ids: Sequence[int], max_len: int = 32) -> list[int]:
        return self.generate_batch([message_ids], max_len)[0]


def _select_time(x: Tensor, t: int) -> Tensor:
    """``x[:, t]`` as a recorded op."""
    tape = T._active(x)
    out = T._result(x.data[:, t], tape)
    if tape is not None:
        def node():
            if out.grad is not None and x.requires_grad:
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[:, t] += out.grad
        tape.nodes.append(node)
    return out


def weighted_loss(nll: Tensor, prob: np.ndarray, mask: np.ndarray,
                  scheme: lw.WeightingScheme) -> Tensor:
    """Scalar training loss from per-token NLL laid out as ``[B, T]`` under ``mask``.

    Matches :func:`loss_weighting.weighted_batch_loss` on the masked
    probabilities. Token-level weights are differentiated through; FL and LDR
    sequence weights are constants.
    """
    mask = np.asarray(mask, dtype=np.float64)
    flat_mask = mask.reshape(-1)
    kind = scheme.kind
    if scheme.token_level:
        coef = flat_mask / flat_mask.sum()
        if kind is lw.Scheme.CE:
            return T.weighted_sum(nll, coef)
        if kind is lw.Scheme.UNIFORM:
            return T.weighted_sum(nll, scheme.uniform_w * coef)

        def fn(L):
            return lw.token_loss(np.exp(-L), scheme)

        def dfn(L):
            q = np.exp(-L)
            return lw.token_loss_grad(q, scheme) * -q

        return T.weighted_sum(T.pointwise(nll, fn, dfn), coef)
    p = prob.reshape(mask.shape)
    lengths = mask.sum(axis=1)
    weights = np.array([lw.example_weight(p[b, mask[b] > 0], scheme) for b in range(mask.shape[0])])
    coef = (mask * (weights / (lengths * mask.shape[0]))[:, None]).reshape(-1)
    return T.weighted_sum(nll, coef)
