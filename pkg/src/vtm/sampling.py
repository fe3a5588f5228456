"""Decoding: latent-sampled generation, temperature sampling, greedy and beam search."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import torch
import torch.nn.functional as F

from .checkpoint import Checkpoint
from .corpus import BOS_ID, EOS_ID, PAD_ID, Table, encode_table, serialize_table

STRATEGIES = ("greedy", "temperature", "beam")
MAX_DECODE_LEN = 60


@dataclass(frozen=True)
class DecodeSpec:
    """How to decode.

    For ``beam`` the k-th output (0-based) uses width ``k % beam_width + 1``, so
    five outputs with ``beam_width=5`` cover widths one to five.
    """

    strategy: str = "greedy"
    temperature: float = 1.0
    beam_width: int = 5
    max_len: int = MAX_DECODE_LEN
    n: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.beam_width < 1 or self.max_len < 1 or self.n < 1:
            raise ValueError("beam_width, max_len and n must be >= 1")


def temperature_distribution(u: torch.Tensor, tau: float) -> torch.Tensor:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return torch.softmax(u / tau, dim=-1)


def _seed(seed: int, k: int) -> int:
    return (seed * 1_000_003 + k) % (2 ** 63)


# -- table tensors ---------------------------------------------------------

def table_tensors(tables: Sequence[Table], ckpt: Checkpoint):
    """Padded (B, K) field/position/value ids and record mask for a list of tables."""
    encoded = [encode_table(t, ckpt.vocab, ckpt.field_vocab) for t in tables]
    k = max(len(e[0]) for e in encoded)
    out = [torch.full((len(tables), k), PAD_ID, dtype=torch.long) for _ in range(3)]
    for i, e in enumerate(encoded):
        for j in range(3):
            out[j][i, :len(e[j])] = torch.tensor(e[j])
    fields, positions, values = out
    return fields, positions, values, positions > 0


def _condition(ckpt: Checkpoint, tables: Sequence[Table], seeds: Sequence[int]):
    """Record vectors, z and c for one decode row per (table, seed)."""
    model = ckpt.model
    fields, positions, values, mask = table_tensors(tables, ckpt)
    records, h = model.table_encoder(fields, positions, values, mask)
    c = model.table_encoder.content(h)
    dtype = c.dtype
    if ckpt.config.latent:
        z = torch.stack([torch.randn(model.dims.d_z, generator=torch.Generator().manual_seed(s), dtype=dtype)
                         for s in seeds])
    else:
        z = c.new_zeros(len(tables), model.dims.d_z)
    return records, mask, z, c


@torch.no_grad()
def decode(ckpt: Checkpoint, tables: Sequence[Table], seeds: Sequence[int], strategy: str = "greedy",
           temperature: float = 1.0, max_len: int = MAX_DECODE_LEN) -> list[list[int]]:
    """Greedy or temperature decoding, one row per (table, seed); returns ids without EOS."""
    if strategy not in ("greedy", "temperature"):
        raise ValueError(f"batched decoding supports greedy and temperature, not {strategy!r}")
    model = ckpt.model
    model.eval()
    records, mask, z, c = _condition(ckpt, tables, seeds)
    gens = [torch.Generator().manual_seed(_seed(s, 1)) for s in seeds]
    n = len(tables)
    state = model.decoder.initial_state(z, c)
    prev = torch.full((n,), BOS_ID, dtype=torch.long)
    out: list[list[int]] = [[] for _ in range(n)]
    done = [False] * n
    for _ in range(max_len):
        logits, state = model.decoder.step(prev, state, z, c, records, mask)
        if strategy == "greedy":
            nxt = logits.argmax(-1)
        else:
            probs = temperature_distribution(logits.double(), temperature)
            nxt = torch.stack([torch.multinomial(probs[i], 1, generator=gens[i])[0] for i in range(n)])
        for i in range(n):
            if done[i]:
                continue
            tok = int(nxt[i])
            if tok == EOS_ID:
                done[i] = True
            else:
                out[i].append(tok)
        if all(done):
            break
        prev = nxt
    return out


# -- beam search -----------------------------------------------------------

StepFn = Callable[[torch.Tensor, object], tuple[torch.Tensor, object]]


def beam_search_core(step: StepFn, state, width: int, max_len: int,
                     reorder: Callable[[object, torch.Tensor], object],
                     bos: int = BOS_ID, eos: int = EOS_ID) -> tuple[list[int], float]:
    """Length-normalized beam search over an abstract step function.

    ``step(prev_tokens (A,), state) -> (log_probs (A, V), state)``. Expansion
    keeps the ``width`` best candidates by cumulative log-probability;
    candidates ending in EOS retire, so width 1 is exactly greedy. The result
    is the retired (or length-capped) hypothesis with the best mean per-token
    log-probability, EOS included. Returns ``(tokens including EOS if any, score)``.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    alive: list[tuple[list[int], float]] = [([], 0.0)]
    prev = torch.tensor([bos])
    finished: list[tuple[list[int], float]] = []
    for _ in range(max_len):
        logp, state = step(prev, state)
        cum = torch.tensor([s for _, s in alive], dtype=logp.dtype).unsqueeze(1) + logp
        k = min(width, cum.numel())
        top = torch.topk(cum.flatten(), k)
        vocab = logp.shape[1]
        keep_rows, keep_tokens, nxt_alive = [], [], []
        for score, flat in zip(top.values.tolist(), top.indices.tolist()):
            row, tok = divmod(flat, vocab)
            toks = alive[row][0] + [tok]
            if tok == eos:
                finished.append((toks, score))
            else:
                nxt_alive.append((toks, score))
                keep_rows.append(row)
                keep_tokens.append(tok)
        if not nxt_alive:
            break
        alive = nxt_alive
        state = reorder(state, torch.tensor(keep_rows))
        prev = torch.tensor(keep_tokens)
    else:
        finished.extend(alive)
    best = max(finished, key=lambda h: h[1] / len(h[0]))
    return best[0], best[1] / len(best[0])


@torch.no_grad()
def beam_search(table: Table, width: int, ckpt: Checkpoint, seed: int = 0,
                max_len: int = MAX_DECODE_LEN) -> list[int]:
    """Best beam hypothesis for ``table`` (ids without EOS); z is drawn from ``seed``."""
    model = ckpt.model
    model.eval()
    records, mask, z, c = _condition(ckpt, [table], [seed])

    def step(prev, st):
        h, cell = st
        a = prev.shape[0]
        logits, new = model.decoder.step(prev, (h, cell), z.expand(a, -1), c.expand(a, -1),
                                         records.expand(a, -1, -1), mask.expand(a, -1))
        return F.log_softmax(logits, -1), new

    def reorder(st, rows):
        return tuple(s.index_select(1, rows) for s in st)

    tokens, _ = beam_search_core(step, model.decoder.initial_state(z, c), width, max_len, reorder)
    return [t for t in tokens if t != EOS_ID]


@torch.no_grad()
def sequence_score(ckpt: Checkpoint, table: Table, tokens: Sequence[int], seed: int = 0) -> float:
    """Mean per-token log-probability of ``tokens`` + EOS, as ranked by beam search."""
    model = ckpt.model
    model.eval()
    records, mask, z, c = _condition(ckpt, [table], [seed])
    y = torch.tensor([list(tokens) + [EOS_ID]])
    lp = model.decoder.sequence_log_prob(y, torch.ones_like(y, dtype=torch.bool), z, c, records, mask)
    return float(lp[0]) / y.shape[1]


# -- generation ------------------------------------------------------------

def generate_ids(tables: Sequence[Table], spec: DecodeSpec, ckpt: Checkpoint) -> list[list[list[int]]]:
    """``spec.n`` outputs per table, as id lists. Output k of table i uses seed (spec.seed, i, k)."""
    if not tables:
        return []
    seeds = [[_seed(_seed(spec.seed, i), k) for k in range(spec.n)] for i in range(len(tables))]
    if spec.strategy == "beam":
        return [[beam_search(t, k % spec.beam_width + 1, ckpt, seeds[i][k], spec.max_len)
                 for k in range(spec.n)] for i, t in enumerate(tables)]
    flat_tables = [t for t in tables for _ in range(spec.n)]
    flat_seeds = [s for row in seeds for s in row]
    ids = decode(ckpt, flat_tables, flat_seeds, spec.strategy, spec.temperature, spec.max_len)
    return [ids[i * spec.n:(i + 1) * spec.n] for i in range(len(tables))]


def generate_many(tables: Sequence[Table], spec: DecodeSpec, ckpt: Checkpoint) -> list[list[str]]:
    return [[" ".join(ckpt.vocab.decode(x)) for x in row] for row in generate_ids(tables, spec, ckpt)]


def generate(table: Table, n: int, spec: DecodeSpec, ckpt: Checkpoint) -> list[str]:
    """n sentences for one table: z ~ N(0, I) per output, c from the table."""
    if len(table) == 0:
        raise ValueError("cannot generate from an empty table")
    return generate_many([table], DecodeSpec(spec.strategy, spec.temperature, spec.beam_width,
                                             spec.max_len, n, spec.seed), ckpt)[0]


def write_generations(path: str | Path, tables: Sequence[Table], outputs: Sequence[Sequence[str]],
                      spec: DecodeSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t, outs in zip(tables, outputs):
            obj = {"table": serialize_table(t), "outputs": list(outs), "strategy": spec.strategy,
                   "seed": spec.seed}
            if spec.strategy == "temperature":
                obj["temperature"] = spec.temperature
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
