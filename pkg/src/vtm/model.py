"""The assembled model: table encoder, posteriors, sentence and template decoders."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from .corpus import Batch
from .generator import SentenceDecoder, TemplateDecoder
from .inference import DiagonalGaussian, PosteriorNetwork
from .table_encoder import TableEncoder

GROUPS = ("table_encoder", "inference", "generator", "template")

_PREFIX_GROUP = {
    "embedding.": "generator",
    "decoder.": "generator",
    "table_encoder.": "table_encoder",
    "posterior.": "inference",
    "template_decoder.": "template",
}


@dataclass(frozen=True)
class ModelDims:
    n_words: int
    n_fields: int
    emb_dim: int = 300
    hidden: int = 300
    d_t: int = 300
    d_z: int = 64
    d_c: int = 100
    dropout: float = 0.0


class VTM(nn.Module):
    def __init__(self, dims: ModelDims):
        super().__init__()
        self.dims = dims
        self.embedding = nn.Embedding(dims.n_words, dims.emb_dim)
        nn.init.uniform_(self.embedding.weight, -0.1, 0.1)
        self.table_encoder = TableEncoder(dims.n_fields, dims.n_words, dims.emb_dim, dims.d_t, dims.d_c)
        self.posterior = PosteriorNetwork(self.embedding, dims.hidden // 2, dims.d_z, dims.d_c)
        self.decoder = SentenceDecoder(self.embedding, dims.d_z, dims.d_c, dims.d_t, dims.hidden, dims.dropout)
        self.template_decoder = TemplateDecoder(dims.n_words, dims.emb_dim, dims.d_z, dims.hidden, dims.dropout)

    def dims_dict(self) -> dict:
        return asdict(self.dims)

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """Named parameters split into table_encoder / inference (phi) / generator (theta) / template (eta).

        The word embedding is shared by the posterior encoder and the decoder
        and is counted once, in the generator group.
        """
        groups: dict[str, list] = {g: [] for g in GROUPS}
        for name, p in self.named_parameters():
            for prefix, group in _PREFIX_GROUP.items():
                if name.startswith(prefix):
                    groups[group].append((name, p))
                    break
            else:
                raise AssertionError(f"parameter {name} belongs to no group")
        return groups

    def encode_table(self, batch: Batch):
        """Record vectors (B, K, d_t), pooled h (B, d_t) and projected content (B, d_c)."""
        records, h = self.table_encoder(batch.fields, batch.positions, batch.values, batch.record_mask)
        return records, h, self.table_encoder.content(h)

    def posteriors(self, batch: Batch) -> tuple[DiagonalGaussian, DiagonalGaussian]:
        return self.posterior(batch.tokens, batch.lengths)

    def posterior_z(self, tokens: torch.Tensor, lengths: torch.Tensor) -> DiagonalGaussian:
        return self.posterior(tokens, lengths)[0]

    def posterior_c(self, tokens: torch.Tensor, lengths: torch.Tensor) -> DiagonalGaussian:
        return self.posterior(tokens, lengths)[1]
