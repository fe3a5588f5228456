"""Gaussian posteriors over the template latent z and the content latent c."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
_LOG_2PI = math.log(2 * math.pi)


@dataclass
class DiagonalGaussian:
    mean: torch.Tensor
    log_variance: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_variance.shape:
            raise ValueError(f"mean {tuple(self.mean.shape)} and log-variance "
                             f"{tuple(self.log_variance.shape)} differ in shape")

    @property
    def variance(self) -> torch.Tensor:
        return self.log_variance.exp()

    @classmethod
    def standard(cls, *shape, dtype=torch.float64) -> "DiagonalGaussian":
        return cls(torch.zeros(shape, dtype=dtype), torch.zeros(shape, dtype=dtype))

    def log_density(self, v: torch.Tensor) -> torch.Tensor:
        """log N(v; mean, diag(variance)), summed over the last axis."""
        return -0.5 * (_LOG_2PI + self.log_variance + (v - self.mean) ** 2 / self.variance).sum(-1)

    def __getitem__(self, idx) -> "DiagonalGaussian":
        return DiagonalGaussian(self.mean[idx], self.log_variance[idx])


def reparameterize(g: DiagonalGaussian, eps: torch.Tensor | None = None) -> torch.Tensor:
    if eps is None:
        eps = torch.randn_like(g.mean)
    if eps.shape != g.mean.shape:
        raise ValueError(f"noise shape {tuple(eps.shape)} does not match {tuple(g.mean.shape)}")
    return g.mean + torch.exp(0.5 * g.log_variance) * eps


def kl_to_standard_normal(g: DiagonalGaussian) -> torch.Tensor:
    """KL(g || N(0, I)) summed over the last axis."""
    return 0.5 * (g.variance + g.mean ** 2 - 1.0 - g.log_variance).sum(-1)


def standard_normal_log_density(v: torch.Tensor) -> torch.Tensor:
    return -0.5 * (_LOG_2PI + v ** 2).sum(-1)


class PosteriorNetwork(nn.Module):
    """Shared bidirectional LSTM over the sentence with separate heads for z and c.

    The word embedding is passed in so the encoder can share the generator's
    table. Packed sequences keep padding from leaking into the final states.
    """

    def __init__(self, embedding: nn.Embedding, hidden: int, d_z: int, d_c: int):
        super().__init__()
        self.embedding = embedding
        self.rnn = nn.LSTM(embedding.embedding_dim, hidden, batch_first=True, bidirectional=True)
        self.mu_z = nn.Linear(2 * hidden, d_z)
        self.logvar_z = nn.Linear(2 * hidden, d_z)
        self.mu_c = nn.Linear(2 * hidden, d_c)
        self.logvar_c = nn.Linear(2 * hidden, d_c)

    def heads(self):
        return (self.mu_z, self.logvar_z, self.mu_c, self.logvar_c)

    def features(self, tokens: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if bool((lengths < 1).any()):
            raise ValueError("posterior needs non-empty sentences")
        packed = pack_padded_sequence(self.embedding(tokens), lengths.cpu(), batch_first=True,
                                      enforce_sorted=False)
        _, (h_n, _) = self.rnn(packed)
        return torch.cat([h_n[0], h_n[1]], dim=-1)

    def forward(self, tokens: torch.Tensor, lengths: torch.Tensor) -> tuple[DiagonalGaussian, DiagonalGaussian]:
        feats = self.features(tokens, lengths)
        qz = DiagonalGaussian(self.mu_z(feats), self.logvar_z(feats).clamp(LOGVAR_MIN, LOGVAR_MAX))
        qc = DiagonalGaussian(self.mu_c(feats), self.logvar_c(feats).clamp(LOGVAR_MIN, LOGVAR_MAX))
        return qz, qc
