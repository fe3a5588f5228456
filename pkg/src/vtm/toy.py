"""Synthetic restaurant corpus with a known template for every sentence.

Each table fills all six fields from small closed value sets; each sentence
slot-fills one of up to eight frames. Because the frame id is recorded, the
template a model produced can be recovered exactly by delexicalizing with
field-typed placeholders (see :func:`template_id`).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Dataset, PairedLine, Table, build_dataset, delexicalize, tokenize, write_paired, write_raw

FIELDS = ("name", "eattype", "food", "area", "price", "rating")

VALUES = {
    "name": ("aromi", "bibimbap", "cotto", "giraffe", "zizzi", "wildwood", "alimentum",
             "strada", "cocum", "loch fyne", "the punter", "blue spice"),
    "eattype": ("pub", "coffee shop", "bistro", "diner"),
    "food": ("french", "italian", "japanese", "chinese", "indian", "english", "thai"),
    "area": ("riverside", "city centre", "new york", "downtown", "old town"),
    "price": ("cheap", "moderate", "expensive", "20 - 25"),
    "rating": ("low", "average", "excellent", "5 out of 5"),
}

FRAMES = (
    "{name} is a {food} {eattype} in {area} . it has a {price} price range and a {rating} rating .",
    "{name} is a {eattype} in {area} that serves {food} food . prices are {price} and customers rate it {rating} .",
    "located in {area} , {name} is a {eattype} offering {food} cuisine with {price} prices and a {rating} customer rating .",
    "for {price} prices , try {name} , a {food} {eattype} near {area} rated {rating} by customers .",
    "{name} serves {food} food in {area} . this {eattype} is {price} and has a {rating} rating .",
    "with a {rating} rating , the {eattype} {name} offers {food} dishes at {price} prices in {area} .",
    "if you want {food} food , {name} is a new {eattype} in {area} with {price} prices . rating : {rating} .",
    "{name} , a {rating} rated {eattype} in {area} , has {food} food and {price} prices .",
)

RAW_TEMPLATE_MODES = ("same", "superset", "disjoint")


@dataclass
class ToyExample:
    table: Table
    sentence: str
    template_id: int
    references: list[str] = field(default_factory=list)


@dataclass
class ToyCorpus:
    paired: list[ToyExample]
    raw: list[ToyExample]
    heldout: list[ToyExample]
    valid_paired: list[ToyExample]
    valid_raw: list[ToyExample]
    n_templates: int
    paired_templates: tuple[int, ...]
    raw_templates: tuple[int, ...]


def realize(values: dict[str, str], template_id: int) -> str:
    return FRAMES[template_id].format(**values)


def _skeleton(tokens: list[str]) -> tuple[str, ...]:
    out: list[str] = []
    for t in tokens:
        if t.startswith("<") and out and out[-1] == t:
            continue
        out.append(t)
    return tuple(out)


def frame_skeletons(n_templates: int = len(FRAMES)) -> dict[tuple[str, ...], int]:
    """Collapsed typed-placeholder skeleton of each frame."""
    out = {}
    for tid in range(n_templates):
        toks = tokenize(FRAMES[tid].format(**{f: f"<{f}>" for f in FIELDS}))
        out[_skeleton(toks)] = tid
    return out


def template_id(table: Table, sentence: list[str] | str, n_templates: int = len(FRAMES)) -> int | None:
    """Recover which frame produced ``sentence`` for ``table``, or None."""
    tokens = tokenize(sentence) if isinstance(sentence, str) else list(sentence)
    typed = delexicalize(table, tokens, typed=True)
    return frame_skeletons(n_templates).get(_skeleton(typed))


def template_split(n_templates: int, mode: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Frames available to paired and raw data under ``mode``."""
    if mode not in RAW_TEMPLATE_MODES:
        raise ValueError(f"unknown raw template mode {mode!r}")
    every = tuple(range(n_templates))
    if mode == "same" or n_templates < 2:
        return every, every
    half = tuple(range(max(1, n_templates // 2)))
    if mode == "superset":
        return half, every
    return half, tuple(range(len(half), n_templates))


def generate_toy_corpus(n_paired: int, n_raw: int, n_templates: int, seed: int,
                        n_heldout: int = 200, n_valid: int = 200,
                        raw_templates: str = "superset") -> ToyCorpus:
    """Sample a toy corpus.

    ``raw_templates`` controls which frames the raw sentences use: ``same``
    (every frame everywhere), ``superset`` (paired data sees the first half of
    the frames, raw data sees all) or ``disjoint`` (raw data sees only the
    second half). Held-out examples carry every frame's realization as
    references.
    """
    if not 1 <= n_templates <= len(FRAMES):
        raise ValueError(f"n_templates must be in 1..{len(FRAMES)}")
    rng = random.Random(seed)
    paired_t, raw_t = template_split(n_templates, raw_templates)

    def draw(templates) -> ToyExample:
        values = {f: rng.choice(VALUES[f]) for f in FIELDS}
        tid = rng.choice(templates)
        table = Table.from_fields(values)
        refs = [realize(values, t) for t in range(n_templates)]
        return ToyExample(table, realize(values, tid), tid, refs)

    paired = [draw(paired_t) for _ in range(n_paired)]
    raw = [draw(raw_t) for _ in range(n_raw)]
    valid_paired = [draw(paired_t) for _ in range(n_valid)]
    valid_raw = [draw(raw_t) for _ in range(n_valid)]
    heldout = [draw(tuple(range(n_templates))) for _ in range(n_heldout)]
    return ToyCorpus(paired, raw, heldout, valid_paired, valid_raw, n_templates, paired_t, raw_t)


def write_toy_corpus(corpus: ToyCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write the corpus in the standard paired/raw file formats plus template-id sidecars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_paired": out / "train.paired.jsonl",
        "train_raw": out / "train.raw.txt",
        "valid_paired": out / "valid.paired.jsonl",
        "valid_raw": out / "valid.raw.txt",
        "test_paired": out / "test.paired.jsonl",
    }
    write_paired(paths["train_paired"], ((e.table, e.sentence) for e in corpus.paired))
    write_raw(paths["train_raw"], (e.sentence for e in corpus.raw))
    write_paired(paths["valid_paired"], ((e.table, e.sentence) for e in corpus.valid_paired))
    write_raw(paths["valid_raw"], (e.sentence for e in corpus.valid_raw))
    write_paired(paths["test_paired"], ((e.table, e.sentence, e.references) for e in corpus.heldout))
    sidecar = out / "template_ids.json"
    sidecar.write_text(json.dumps({
        "n_templates": corpus.n_templates,
        "paired_templates": list(corpus.paired_templates),
        "raw_templates": list(corpus.raw_templates),
        "train_paired": [e.template_id for e in corpus.paired],
        "train_raw": [e.template_id for e in corpus.raw],
        "valid_paired": [e.template_id for e in corpus.valid_paired],
        "valid_raw": [e.template_id for e in corpus.valid_raw],
        "test_paired": [e.template_id for e in corpus.heldout],
    }) + "\n")
    paths["template_ids"] = sidecar
    return paths


def toy_datasets(corpus: ToyCorpus, min_count: int = 2, max_len: int = 60) -> tuple[Dataset, Dataset]:
    """Index a toy corpus in memory: (training set, validation set sharing its vocabularies)."""
    def line(e: ToyExample) -> PairedLine:
        return PairedLine(e.table, tokenize(e.sentence), [tokenize(r) for r in e.references] or [tokenize(e.sentence)])

    train = build_dataset([line(e) for e in corpus.paired], [tokenize(e.sentence) for e in corpus.raw],
                          min_count=min_count, max_len=max_len)
    valid = build_dataset([line(e) for e in corpus.valid_paired], [tokenize(e.sentence) for e in corpus.valid_raw],
                          max_len=max_len, vocab=train.vocab, field_vocab=train.field_vocab)
    return train, valid
