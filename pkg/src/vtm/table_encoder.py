"""Record embeddings and max-pooled table vectors."""

from __future__ import annotations

import math

import torch
from torch import nn

MAX_POSITION = 30


class TableEncoder(nn.Module):
    """``h_i = tanh(W [e_f; e_p; e_v] + b)``, pooled by an elementwise max over records.

    ``to_content`` is a learned linear map from the pooled table vector to the
    content-latent dimension, so ``c = to_content(h)`` even when ``d_t != d_c``.
    """

    def __init__(self, n_fields: int, n_words: int, d: int = 300, d_t: int = 300,
                 d_c: int = 100, max_position: int = MAX_POSITION):
        super().__init__()
        self.max_position = max_position
        self.field_emb = nn.Embedding(n_fields, d)
        self.pos_emb = nn.Embedding(max_position + 1, d)
        self.value_emb = nn.Embedding(n_words, d)
        self.proj = nn.Linear(3 * d, d_t)
        self.to_content = nn.Linear(d_t, d_c)
        self.reset_parameters()

    def reset_parameters(self):
        for emb in (self.field_emb, self.pos_emb, self.value_emb):
            nn.init.uniform_(emb.weight, -0.1, 0.1)
        for lin in (self.proj, self.to_content):
            bound = 1.0 / math.sqrt(lin.in_features)
            nn.init.uniform_(lin.weight, -bound, bound)
            nn.init.zeros_(lin.bias)

    def encode_records(self, fields: torch.Tensor, positions: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
        """(..., K) id tensors -> (..., K, d_t) record vectors."""
        positions = positions.clamp(0, self.max_position)
        x = torch.cat([self.field_emb(fields), self.pos_emb(positions), self.value_emb(values)], dim=-1)
        return torch.tanh(self.proj(x))

    def pool(self, records: torch.Tensor, record_mask: torch.Tensor | None = None) -> torch.Tensor:
        if record_mask is not None:
            if not bool(record_mask.any(-1).all()):
                raise ValueError("cannot encode an empty table")
            records = records.masked_fill(~record_mask.unsqueeze(-1), float("-inf"))
        elif records.shape[-2] == 0:
            raise ValueError("cannot encode an empty table")
        return records.max(dim=-2).values

    def forward(self, fields, positions, values, record_mask=None):
        """Return ``(record_vectors, h)``; padded records are excluded from the max."""
        records = self.encode_records(fields, positions, values)
        return records, self.pool(records, record_mask)

    def content(self, h: torch.Tensor) -> torch.Tensor:
        return self.to_content(h)
