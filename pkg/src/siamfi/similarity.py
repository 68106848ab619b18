"""Similarity heads and the full twin-network similarity model.

The learned head projects query and key embeddings through independent
per-head linear maps, averages the raw attention logits over heads,
scales by a temperature, and squashes with a sigmoid:

    S = sigmoid( (1/h) * sum_i (q Wq_i + bq_i)(k Wk_i + bk_i)^T / temperature )

There is no value projection and no softmax: each score depends only on
its own (query, key) pair.
"""

from __future__ import annotations

import logging
import math

import torch
import torch.nn as nn

from .encoder import EncoderConfig, build_encoder
from .errors import DimensionError

logger = logging.getLogger(__name__)


class AttentionHead(nn.Module):
    """Multi-head attention-score similarity with independent query/key
    projections (the key branch specializes on templates)."""

    def __init__(self, d1: int, h: int = 4, d2: int = 64, temperature: float | None = None):
        super().__init__()
        if h < 1:
            raise ValueError(f"head count must be >= 1, got {h}")
        if temperature is None:
            temperature = math.sqrt(d2)
        if temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {temperature}")
        self.h, self.d1, self.d2 = h, d1, d2
        self.w_q = nn.Parameter(torch.empty(h, d1, d2))
        self.b_q = nn.Parameter(torch.zeros(h, d2))
        self.w_k = nn.Parameter(torch.empty(h, d1, d2))
        self.b_k = nn.Parameter(torch.zeros(h, d2))
        nn.init.kaiming_uniform_(self.w_q, a=math.sqrt(5))
        nn.init.kaiming_uniform_(self.w_k, a=math.sqrt(5))
        self.register_buffer("temperature", torch.tensor(float(temperature)))

    def forward(self, q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        if q.shape[-1] != self.d1 or k.shape[-1] != self.d1:
            raise DimensionError(
                f"embeddings must have dimension {self.d1}, got q:{q.shape[-1]} k:{k.shape[-1]}"
            )
        qh = torch.einsum("bd,hde->hbe", q, self.w_q) + self.b_q[:, None, :]
        kh = torch.einsum("bd,hde->hbe", k, self.w_k) + self.b_k[:, None, :]
        logits = torch.einsum("hbe,hce->hbc", qh, kh).mean(dim=0) / self.temperature
        return torch.sigmoid(logits)


def attention_similarity(q: torch.Tensor, k: torch.Tensor, head: AttentionHead) -> torch.Tensor:
    """Score matrix (b1, b2) in (0, 1)."""
    return head(q, k)


def gaussian_similarity(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """S_ij = exp(-||q_i - k_j||^2 / d1): 1 at zero distance, monotonically
    decreasing in squared distance."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"embedding dims differ: {q.shape[-1]} vs {k.shape[-1]}")
    d1 = q.shape[-1]
    sq = (q[:, None, :] - k[None, :, :]).pow(2).sum(-1)
    return torch.exp(-sq / d1)


def cosine_similarity(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """(cos + 1)/2 in [0, 1]; zero-norm rows score 0.5 against everything."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"embedding dims differ: {q.shape[-1]} vs {k.shape[-1]}")
    qn = q.norm(dim=-1)
    kn = k.norm(dim=-1)
    zero_q, zero_k = qn == 0, kn == 0
    if bool(zero_q.any()) or bool(zero_k.any()):
        logger.warning("zero-norm embedding rows scored as 0.5 in cosine similarity")
    cos = (q @ k.T) / (qn[:, None].clamp_min(1e-30) * kn[None, :].clamp_min(1e-30))
    cos = torch.where(zero_q[:, None] | zero_k[None, :], torch.zeros_like(cos), cos)
    return (cos + 1) / 2


class CsiNet(nn.Module):
    """Siamese similarity network: one shared twin encoder feeding a
    selectable similarity head. Real samples go through the query branch;
    templates go through the key branch."""

    def __init__(
        self,
        encoder_config: EncoderConfig | None = None,
        heads: int = 4,
        head_dim: int = 64,
        temperature: float | None = None,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        encoder_config = encoder_config or EncoderConfig()
        self.encoder_config = encoder_config
        self.encoder = build_encoder(encoder_config, generator=generator)
        self.attention = AttentionHead(encoder_config.d1, h=heads, d2=head_dim, temperature=temperature)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def head(self, q_emb: torch.Tensor, k_emb: torch.Tensor, metric: str) -> torch.Tensor:
        if metric == "attention":
            return self.attention(q_emb, k_emb)
        if metric == "gaussian":
            return gaussian_similarity(q_emb, k_emb)
        if metric == "cosine":
            return cosine_similarity(q_emb, k_emb)
        raise ValueError(f"unknown metric {metric!r}")

    def forward(self, x_q: torch.Tensor, x_k: torch.Tensor, metric: str = "attention") -> torch.Tensor:
        return self.head(self.encode(x_q), self.encode(x_k), metric)

    similarity = forward
