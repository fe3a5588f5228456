"""Sentence decoder p(y | z, c, x) and template decoder p(y~ | z)."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import BOS_ID

State = tuple[torch.Tensor, torch.Tensor]


def shift_right(tokens: torch.Tensor) -> torch.Tensor:
    """Teacher-forcing inputs: BOS followed by all but the last target token."""
    bos = torch.full_like(tokens[:, :1], BOS_ID)
    return torch.cat([bos, tokens[:, :-1]], dim=1)


def masked_token_log_prob(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    logp = F.log_softmax(logits, dim=-1).gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return (logp * mask.to(logp.dtype)).sum(-1)


class _ConditionedLSTM(nn.Module):
    """LSTM whose initial state is tanh(Linear(cond)) and whose every input carries cond."""

    def __init__(self, embedding: nn.Embedding, cond_dim: int, hidden: int, dropout: float = 0.0):
        super().__init__()
        self.embedding = embedding
        self.hidden = hidden
        self.drop = nn.Dropout(dropout)
        self.init = nn.Linear(cond_dim, 2 * hidden)
        self.rnn = nn.LSTM(embedding.embedding_dim + cond_dim, hidden, batch_first=True)

    def initial_state(self, cond: torch.Tensor) -> State:
        h0, c0 = torch.tanh(self.init(cond)).chunk(2, dim=-1)
        return h0.unsqueeze(0).contiguous(), c0.unsqueeze(0).contiguous()

    def run(self, inputs: torch.Tensor, cond: torch.Tensor, state: State | None = None):
        if state is None:
            state = self.initial_state(cond)
        emb = self.drop(self.embedding(inputs))
        x = torch.cat([emb, cond.unsqueeze(1).expand(-1, inputs.shape[1], -1)], dim=-1)
        return self.rnn(x, state)


class SentenceDecoder(nn.Module):
    """LSTM decoder over ``[z; c]`` with bilinear attention over record vectors.

    Without record vectors (raw sentences) the attention context is zero and
    the decoder is conditioned through ``c`` alone.
    """

    def __init__(self, embedding: nn.Embedding, d_z: int, d_c: int, d_t: int, hidden: int,
                 dropout: float = 0.0):
        super().__init__()
        self.d_z, self.d_c, self.d_t = d_z, d_c, d_t
        self.lstm = _ConditionedLSTM(embedding, d_z + d_c, hidden, dropout)
        self.attn = nn.Parameter(torch.empty(hidden, d_t))
        self.out = nn.Linear(hidden + d_t, embedding.num_embeddings)
        nn.init.uniform_(self.attn, -0.1, 0.1)

    @property
    def embedding(self) -> nn.Embedding:
        return self.lstm.embedding

    def _cond(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.d_z or c.shape[-1] != self.d_c:
            raise ValueError(f"expected z of dim {self.d_z} and c of dim {self.d_c}, "
                             f"got {z.shape[-1]} and {c.shape[-1]}")
        return torch.cat([z, c], dim=-1)

    def attention(self, outputs: torch.Tensor, records: torch.Tensor | None,
                  record_mask: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Context vectors (B, T, d_t) and weights (B, T, K) for decoder outputs (B, T, H)."""
        if records is None:
            return outputs.new_zeros(*outputs.shape[:2], self.d_t), None
        scores = torch.einsum("bth,hd,bkd->btk", outputs, self.attn, records)
        if record_mask is not None:
            scores = scores.masked_fill(~record_mask.unsqueeze(1), float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        return torch.einsum("btk,bkd->btd", weights, records), weights

    def initial_state(self, z, c) -> State:
        return self.lstm.initial_state(self._cond(z, c))

    def logits(self, inputs, z, c, records=None, record_mask=None, state=None):
        """Vocabulary logits (B, T, V) for input tokens (B, T) and the next state."""
        outputs, state = self.lstm.run(inputs, self._cond(z, c), state)
        ctx, _ = self.attention(outputs, records, record_mask)
        return self.out(self.lstm.drop(torch.cat([outputs, ctx], dim=-1))), state

    def step(self, prev: torch.Tensor, state: State, z, c, records=None, record_mask=None):
        """One decoding step from previous tokens (B,) -> logits (B, V), next state."""
        logits, state = self.logits(prev.unsqueeze(1), z, c, records, record_mask, state)
        return logits.squeeze(1), state

    def sequence_log_prob(self, tokens, mask, z, c, records=None, record_mask=None) -> torch.Tensor:
        """Per-example sum of log p(y_t | y_<t, z, c, x) over unmasked positions."""
        logits, _ = self.logits(shift_right(tokens), z, c, records, record_mask)
        return masked_token_log_prob(logits, tokens, mask)


class TemplateDecoder(nn.Module):
    """Auxiliary LSTM generating the delexicalized template from z only."""

    def __init__(self, n_words: int, emb_dim: int, d_z: int, hidden: int, dropout: float = 0.0):
        super().__init__()
        self.d_z = d_z
        self.lstm = _ConditionedLSTM(nn.Embedding(n_words, emb_dim), d_z, hidden, dropout)
        self.out = nn.Linear(hidden, n_words)
        nn.init.uniform_(self.lstm.embedding.weight, -0.1, 0.1)

    def logits(self, inputs, z, state=None):
        outputs, state = self.lstm.run(inputs, z, state)
        return self.out(self.lstm.drop(outputs)), state

    def template_log_prob(self, templates, mask, z) -> torch.Tensor:
        logits, _ = self.logits(shift_right(templates), z)
        return masked_token_log_prob(logits, templates, mask)
