"""Tables, sentences, vocabularies and batching.

A table is a list of field-position-value records, serialized WikiBio-style
as tab-separated ``field_position:value`` entries. Sentences are tokenized by
lowercasing and detaching punctuation, then whitespace splitting.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import torch

PAD, BOS, EOS, UNK, ENT = "<pad>", "<bos>", "<eos>", "<unk>", "<ent>"
RESERVED = (PAD, BOS, EOS, UNK, ENT)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, ENT_ID = range(5)

MAX_SENTENCE_LEN = 60

_TOKEN_RE = re.compile(r"<[a-z_]+>|\w+|[^\w\s]")


class TableParseError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Record:
    field: str
    position: int
    value: str

    def __post_init__(self):
        if self.position < 1:
            raise ValueError(f"position must be >= 1, got {self.position}")
        if not self.field or not self.value:
            raise ValueError("field and value must be non-empty")


@dataclass(frozen=True)
class Table:
    records: tuple[Record, ...]

    def __post_init__(self):
        if not self.records:
            raise ValueError("a table needs at least one record")
        positions: dict[str, list[int]] = {}
        for r in self.records:
            positions.setdefault(r.field, []).append(r.position)
        for name, pos in positions.items():
            if sorted(pos) != list(range(1, len(pos) + 1)):
                raise ValueError(f"positions of field {name!r} are not contiguous from 1: {pos}")

    @classmethod
    def from_fields(cls, fields: dict[str, str] | Sequence[tuple[str, str]]) -> "Table":
        """Build a table from ``{field: value text}``; values are tokenized into positions."""
        items = fields.items() if isinstance(fields, dict) else fields
        records = []
        for name, text in items:
            for i, tok in enumerate(tokenize(text), start=1):
                records.append(Record(name, i, tok))
        return cls(tuple(records))

    def field_values(self) -> dict[str, list[str]]:
        """Ordered value tokens per field, fields in order of first appearance."""
        out: dict[str, list[tuple[int, str]]] = {}
        for r in self.records:
            out.setdefault(r.field, []).append((r.position, r.value))
        return {k: [t for _, v in sorted(vs) for t in tokenize(v)] for k, vs in out.items()}

    def __len__(self):
        return len(self.records)


def parse_table(line: str) -> Table:
    records = []
    for entry in line.rstrip("\n").split("\t"):
        if not entry:
            continue
        key, sep, value = entry.partition(":")
        if not sep:
            raise TableParseError(f"entry {entry!r} has no ':' separator")
        name, us, pos = key.rpartition("_")
        if not us or not name:
            raise TableParseError(f"entry {entry!r} is not of the form field_position:value")
        try:
            position = int(pos)
        except ValueError:
            raise TableParseError(f"entry {entry!r} has a non-integer position") from None
        if position < 1:
            raise TableParseError(f"entry {entry!r} has position {position} < 1")
        value = value.strip()
        if not value:
            raise TableParseError(f"entry {entry!r} has an empty value")
        records.append(Record(name, position, value))
    if not records:
        raise TableParseError("empty table line")
    try:
        return Table(tuple(records))
    except ValueError as exc:
        raise TableParseError(str(exc)) from None


def serialize_table(table: Table) -> str:
    return "\t".join(f"{r.field}_{r.position}:{r.value}" for r in table.records)


# -- delexicalization ------------------------------------------------------

@dataclass(frozen=True)
class Span:
    start: int
    length: int
    field: str


def align(table: Table, sentence: Sequence[str]) -> list[Span]:
    """Exact-match value spans, longest first, ties broken by field order then start."""
    values = table.field_values()
    candidates = []
    for f_idx, (name, toks) in enumerate(values.items()):
        n = len(toks)
        for start in range(len(sentence) - n + 1):
            if list(sentence[start:start + n]) == toks:
                candidates.append((-n, f_idx, start, name))
    candidates.sort()
    taken = [False] * len(sentence)
    spans = []
    for neg_n, _, start, name in candidates:
        n = -neg_n
        if any(taken[start:start + n]):
            continue
        for i in range(start, start + n):
            taken[i] = True
        spans.append(Span(start, n, name))
    return sorted(spans, key=lambda s: s.start)


def delexicalize(table: Table, sentence: Sequence[str], typed: bool = False,
                 return_alignment: bool = False):
    """Replace table-value spans in ``sentence`` with ENT.

    With ``typed=True`` each replaced token becomes ``<field>`` instead, which
    the toy oracle uses to recover template identities.
    """
    spans = align(table, sentence)
    out = list(sentence)
    for s in spans:
        for i in range(s.start, s.start + s.length):
            out[i] = f"<{s.field}>" if typed else ENT
    if return_alignment:
        return out, spans
    return out


def relexicalize(template: Sequence[str], table: Table, alignment: Sequence[Span]) -> list[str]:
    values = table.field_values()
    out = list(template)
    for s in alignment:
        if s.field not in values:
            raise KeyError(f"alignment refers to field {s.field!r} which is not in the table")
        toks = values[s.field]
        if len(toks) != s.length:
            raise ValueError(f"span of length {s.length} cannot hold value {toks} of field {s.field!r}")
        out[s.start:s.start + s.length] = toks
    return out


# -- vocabulary ------------------------------------------------------------

class Vocabulary:
    """Token/id bijection with the five reserved tokens at ids 0-4."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str], eos: bool = False) -> list[int]:
        ids = [self.id(t) for t in tokens]
        if eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS_ID:
                break
            if strip and i in (PAD_ID, BOS_ID):
                continue
            out.append(self.itos[i])
        return out

    def to_json(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_json(cls, itos: list[str]) -> "Vocabulary":
        if tuple(itos[:5]) != RESERVED:
            raise ValueError("serialized vocabulary does not start with the reserved tokens")
        return cls(itos[5:])


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 2) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n = 0
    for sent in corpus:
        n += 1
        counts.update(t for t in sent if t not in RESERVED)
    if n == 0 or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


# -- examples --------------------------------------------------------------

@dataclass(frozen=True)
class PairedExample:
    table: Table
    sentence: tuple[int, ...]
    template: tuple[int, ...]
    record_fields: tuple[int, ...]
    record_values: tuple[int, ...]

    def __post_init__(self):
        if len(self.sentence) != len(self.template):
            raise ValueError("sentence and template lengths differ")


@dataclass(frozen=True)
class RawExample:
    sentence: tuple[int, ...]

    def __post_init__(self):
        if len(self.sentence) < 1 or self.sentence[-1] != EOS_ID:
            raise ValueError("raw sentence must be non-empty and end with EOS")


def encode_paired(table: Table, tokens: Sequence[str], vocab: Vocabulary,
                  field_vocab: Vocabulary, max_len: int = MAX_SENTENCE_LEN) -> PairedExample:
    tokens = list(tokens)[:max_len]
    template = delexicalize(table, tokens)
    return PairedExample(
        table=table,
        sentence=tuple(vocab.encode(tokens, eos=True)),
        template=tuple(vocab.encode(template, eos=True)),
        record_fields=tuple(field_vocab.id(r.field) for r in table.records),
        record_values=tuple(vocab.id(value_token(r.value)) for r in table.records),
    )


def encode_raw(tokens: Sequence[str], vocab: Vocabulary, max_len: int = MAX_SENTENCE_LEN) -> RawExample:
    return RawExample(tuple(vocab.encode(list(tokens)[:max_len], eos=True)))


def value_token(value: str) -> str:
    """Vocabulary key of a record value (multi-token values fall back to UNK)."""
    return " ".join(tokenize(value))


def encode_table(table: Table, vocab: Vocabulary, field_vocab: Vocabulary) -> tuple[list[int], list[int], list[int]]:
    return ([field_vocab.id(r.field) for r in table.records],
            [r.position for r in table.records],
            [vocab.id(value_token(r.value)) for r in table.records])


# -- batching --------------------------------------------------------------

@dataclass
class Batch:
    """Padded tensors for one minibatch. Table tensors are None for raw data."""

    tokens: torch.Tensor          # (B, T) sentence ids ending in EOS
    mask: torch.Tensor            # (B, T) bool, True on real tokens
    templates: torch.Tensor | None = None
    template_mask: torch.Tensor | None = None
    fields: torch.Tensor | None = None       # (B, K)
    positions: torch.Tensor | None = None
    values: torch.Tensor | None = None
    record_mask: torch.Tensor | None = None
    examples: list = field(default_factory=list, repr=False)

    @property
    def paired(self) -> bool:
        return self.fields is not None

    @property
    def lengths(self) -> torch.Tensor:
        return self.mask.sum(1)

    def __len__(self):
        return self.tokens.shape[0]


def _pad(seqs: Sequence[Sequence[int]], value: int = PAD_ID) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), value, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def collate(examples: Sequence[PairedExample | RawExample]) -> Batch:
    tokens = _pad([e.sentence for e in examples])
    batch = Batch(tokens=tokens, mask=tokens != PAD_ID, examples=list(examples))
    if isinstance(examples[0], PairedExample):
        batch.templates = _pad([e.template for e in examples])
        batch.template_mask = batch.templates != PAD_ID
        batch.fields = _pad([e.record_fields for e in examples])
        batch.values = _pad([e.record_values for e in examples])
        batch.positions = _pad([[r.position for r in e.table.records] for e in examples], 0)
        batch.record_mask = batch.positions > 0
    return batch


def make_batches(examples: Sequence, batch_size: int, seed: int, shuffle: bool = True) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = list(range(len(examples)))
    if shuffle:
        random.Random(seed).shuffle(order)
    return [collate([examples[i] for i in order[k:k + batch_size]])
            for k in range(0, len(order), batch_size)]


# -- files -----------------------------------------------------------------

@dataclass
class PairedLine:
    table: Table
    sentence: list[str]
    references: list[list[str]]


def read_paired(path: str | Path) -> list[PairedLine]:
    """Read a JSONL paired file; an optional ``references`` list adds extra references."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                table = parse_table(obj["table"])
            except TableParseError as exc:
                raise TableParseError(f"{path}:{lineno}: {exc}") from None
            sent = tokenize(obj["sentence"])
            refs = [tokenize(r) for r in obj.get("references", [])] or [sent]
            out.append(PairedLine(table, sent, refs))
    return out


def read_raw(path: str | Path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [toks for toks in (tokenize(line) for line in fh) if toks]


def write_paired(path: str | Path, rows: Iterable[tuple[Table, str] | tuple[Table, str, list[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            obj = {"table": serialize_table(row[0]), "sentence": row[1]}
            if len(row) > 2:
                obj["references"] = list(row[2])
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_raw(path: str | Path, sentences: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(s + "\n")


@dataclass
class Dataset:
    """Encoded training data plus the vocabularies it was encoded with."""

    vocab: Vocabulary
    field_vocab: Vocabulary
    paired: list[PairedExample]
    raw: list[RawExample]


def build_dataset(paired: Sequence[PairedLine], raw: Sequence[Sequence[str]], min_count: int = 5,
                  max_len: int = MAX_SENTENCE_LEN, vocab: Vocabulary | None = None,
                  field_vocab: Vocabulary | None = None) -> Dataset:
    """Encode paired lines and raw token lists; vocabularies are built here unless given.

    The word vocabulary counts sentence tokens from both data kinds plus table
    value tokens; the field vocabulary keeps every field name seen.
    """
    if vocab is None:
        corpus = [p.sentence[:max_len] for p in paired] + [list(r)[:max_len] for r in raw]
        corpus += [[value_token(r.value) for r in p.table.records] for p in paired]
        vocab = build_vocab(corpus, min_count)
    if field_vocab is None:
        field_vocab = build_vocab(([r.field for r in p.table.records] for p in paired), 1)
    return Dataset(
        vocab=vocab,
        field_vocab=field_vocab,
        paired=[encode_paired(p.table, p.sentence, vocab, field_vocab, max_len) for p in paired],
        raw=[encode_raw(r, vocab, max_len) for r in raw],
    )
