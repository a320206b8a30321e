"""Whitespace-token vocabulary and the shared contextual encoder.

The encoder is deliberately small: learned token + position embeddings,
one multi-head scaled-dot-product self-attention layer with a residual
connection and layer normalization, then dropout. One encoder instance is
shared by every task head of a model. Reading (train=False) is safe from
multiple threads; training updates are single-writer.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from clner import numcore as nc

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class Vocab:
    """Token<->id maps with reserved padding/unknown entries at ids 0/1.

    Serialized as a line-per-token text file, ids implied by line order
    (the two reserved tokens occupy the first two lines).
    """

    def __init__(self, tokens: Iterable[str]):
        self._id_to_token = [PAD_TOKEN, UNK_TOKEN]
        seen = set(self._id_to_token)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                self._id_to_token.append(tok)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}

    pad_id = 0
    unk_id = 1

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, self.unk_id)

    def token_of(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def save(self, path) -> None:
        Path(path).write_text(
            "".join(t + "\n" for t in self._id_to_token), encoding="utf-8"
        )

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError(f"{path}: vocabulary file lacks the reserved header")
        return cls(lines[2:])


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_heads: int = 4
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)


class TransformerEncoder:
    """Single attention layer producing one contextual vector per token."""

    def __init__(self, vocab_size: int, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        d = config.d_model
        self.tok_emb = nc.parameter(0.02 * rng.standard_normal((vocab_size, d)))
        self.pos_emb = nc.parameter(0.02 * rng.standard_normal((config.max_len, d)))
        self.w_q = nc.parameter(fan_in_uniform(rng, (d, d)))
        self.b_q = nc.parameter(np.zeros(d))
        self.w_k = nc.parameter(fan_in_uniform(rng, (d, d)))
        self.b_k = nc.parameter(np.zeros(d))
        self.w_v = nc.parameter(fan_in_uniform(rng, (d, d)))
        self.b_v = nc.parameter(np.zeros(d))
        self.w_o = nc.parameter(fan_in_uniform(rng, (d, d)))
        self.b_o = nc.parameter(np.zeros(d))
        self.ln_gain = nc.parameter(np.ones(d))
        self.ln_bias = nc.parameter(np.zeros(d))

    def named_parameters(self) -> dict[str, nc.Tensor]:
        return {
            "encoder.tok_emb": self.tok_emb,
            "encoder.pos_emb": self.pos_emb,
            "encoder.w_q": self.w_q,
            "encoder.b_q": self.b_q,
            "encoder.w_k": self.w_k,
            "encoder.b_k": self.b_k,
            "encoder.w_v": self.w_v,
            "encoder.b_v": self.b_v,
            "encoder.w_o": self.w_o,
            "encoder.b_o": self.b_o,
            "encoder.ln_gain": self.ln_gain,
            "encoder.ln_bias": self.ln_bias,
        }

    def parameters(self) -> list[nc.Tensor]:
        return list(self.named_parameters().values())

    def encode(
        self,
        token_ids: Sequence[int],
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> nc.Tensor:
        """Token ids -> (n, d_model) contextual vectors. Deterministic when
        train is off; train mode applies dropout from the given rng."""
        n = len(token_ids)
        if n == 0:
            raise ValueError("cannot encode an empty sentence")
        if n > self.config.max_len:
            raise ValueError(
                f"sentence length {n} exceeds max_len {self.config.max_len}"
            )
        cfg = self.config
        d, heads = cfg.d_model, cfg.n_heads
        dk = d // heads
        e = nc.gather_rows(self.tok_emb, token_ids) + self.pos_emb[0:n]
        q = nc.matmul(e, self.w_q) + self.b_q
        k = nc.matmul(e, self.w_k) + self.b_k
        v = nc.matmul(e, self.w_v) + self.b_v
        outputs = []
        scale = dk**-0.5
        for h in range(heads):
            cols = slice(h * dk, (h + 1) * dk)
            scores = nc.matmul(q[:, cols], nc.transpose(k[:, cols])) * scale
            attn = nc.softmax(scores, axis=1)
            outputs.append(nc.matmul(attn, v[:, cols]))
        attended = nc.matmul(nc.concat(outputs, axis=1), self.w_o) + self.b_o
        hidden = nc.layer_norm(e + attended, self.ln_gain, self.ln_bias)
        return nc.dropout(hidden, cfg.dropout, train, rng)
