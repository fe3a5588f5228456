"""Corpus BLEU-4, self-BLEU, ROUGE-L and the temperature trade-off sweep.

Scores are on a 0-100 scale. Zero n-gram match counts are floored at
``SMOOTH_EPS`` so short sampled sentences without 4-gram matches still get a
finite, near-zero score.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

SMOOTH_EPS = 1e-9
DEFAULT_TAUS = (0.1, 0.2, 0.3, 0.5, 0.6, 0.9, 1.0)
REPORT_HEADER = ("tau", "bleu4", "self_bleu", "rouge_l", "n_tables", "n_per_table")

Tokens = Sequence[str]


def _toks(s: str | Tokens) -> list[str]:
    return s.split() if isinstance(s, str) else list(s)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(candidate: Tokens, references: Sequence[Tokens], max_n: int = 4):
    """Clipped matches and totals per order, candidate length, closest reference length."""
    cand = list(candidate)
    refs = [list(r) for r in references]
    matches, totals = [], []
    for n in range(1, max_n + 1):
        c = _ngrams(cand, n)
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= _ngrams(r, n)
        matches.append(sum(min(k, max_ref[g]) for g, k in c.items()))
        totals.append(max(len(cand) - n + 1, 0))
    ref_len = min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
    return matches, totals, len(cand), ref_len


def _bleu_from_stats(matches, totals, cand_len, ref_len) -> float:
    if cand_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        log_p += math.log((m if m > 0 else SMOOTH_EPS) / (t if t > 0 else 1))
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return 100.0 * bp * math.exp(log_p / len(matches))


def bleu4(candidates: Sequence[str | Tokens], references: Sequence[Sequence[str | Tokens]]) -> float:
    """Corpus BLEU-4; ``references[i]`` is the list of references for ``candidates[i]``."""
    if not candidates:
        raise ValueError("no candidates")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} reference groups")
    matches, totals = [0] * 4, [0] * 4
    c_len = r_len = 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("empty reference group")
        m, t, cl, rl = bleu_stats(_toks(cand), [_toks(r) for r in refs])
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c_len += cl
        r_len += rl
    return _bleu_from_stats(matches, totals, c_len, r_len)


def self_bleu(sentences: Sequence[str | Tokens]) -> float:
    """Mean BLEU-4 of each sentence against all the others."""
    if len(sentences) < 2:
        raise ValueError("self-BLEU needs at least two sentences")
    toks = [_toks(s) for s in sentences]
    scores = [bleu4([s], [toks[:i] + toks[i + 1:]]) for i, s in enumerate(toks)]
    return sum(scores) / len(scores)


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_pair(candidate: Tokens, reference: Tokens) -> float:
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(candidate), lcs / len(reference)
    return 2 * p * r / (p + r)


def rouge_l_f(candidates: Sequence[str | Tokens], references: Sequence[Sequence[str | Tokens]]) -> float:
    """ROUGE-L F1 averaged over candidates; multiple references take the best."""
    if not candidates or len(candidates) != len(references):
        raise ValueError("need equally many (non-zero) candidates and reference groups")
    total = 0.0
    for cand, refs in zip(candidates, references):
        c = _toks(cand)
        total += max(rouge_l_pair(c, _toks(r)) for r in refs)
    return 100.0 * total / len(candidates)


@dataclass
class EvalReport:
    bleu4: float
    self_bleu: float | None
    rouge_l: float
    n_tables: int
    n_per_table: int
    tau: float | None = None

    def row(self) -> dict:
        def fmt(x):
            return "" if x is None else f"{x:.4f}"
        return {"tau": "" if self.tau is None else f"{self.tau:g}", "bleu4": fmt(self.bleu4),
                "self_bleu": fmt(self.self_bleu), "rouge_l": fmt(self.rouge_l),
                "n_tables": self.n_tables, "n_per_table": self.n_per_table}


def evaluate_outputs(outputs: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                     tau: float | None = None) -> EvalReport:
    """BLEU/ROUGE-L of each table's first output; self-BLEU averaged over per-table sets."""
    firsts = [o[0] for o in outputs]
    n = len(outputs[0]) if outputs else 0
    sb = sum(self_bleu(o) for o in outputs) / len(outputs) if n >= 2 else None
    return EvalReport(bleu4=bleu4(firsts, references), self_bleu=sb, rouge_l=rouge_l_f(firsts, references),
                      n_tables=len(outputs), n_per_table=n, tau=tau)


def write_report(path: str | Path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_HEADER, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def tradeoff_sweep(ckpt, tables, references, taus: Sequence[float] = DEFAULT_TAUS, n_per_table: int = 5,
                   seed: int = 0, max_len: int = 60) -> list[EvalReport]:
    """One report per temperature: token-level temperature sampling with z drawn per output."""
    from .sampling import DecodeSpec, generate_many

    rows = []
    for tau in taus:
        spec = DecodeSpec("temperature", temperature=tau, n=n_per_table, seed=seed, max_len=max_len)
        rows.append(evaluate_outputs(generate_many(tables, spec, ckpt), references, tau=tau))
    return rows


# -- content accuracy ------------------------------------------------------

def _contains(tokens: list[str], span: Sequence[str]) -> bool:
    n = len(span)
    return any(tokens[i:i + n] == list(span) for i in range(len(tokens) - n + 1))


def content_correct(table, sentence: str | Tokens, inventory: Sequence[Sequence[str]] = ()) -> bool:
    """True when every field value of ``table`` is realized in ``sentence`` and no
    value from ``inventory`` that is absent from the table shows up."""
    from .corpus import align, tokenize

    tokens = tokenize(sentence) if isinstance(sentence, str) else list(sentence)
    values = table.field_values()
    if {s.field for s in align(table, tokens)} != set(values):
        return False
    own = {tuple(v) for v in values.values()}
    return not any(_contains(tokens, v) for v in inventory if tuple(v) not in own)


def content_accuracy(tables, sentences, inventory: Sequence[Sequence[str]] = ()) -> float:
    if not tables or len(tables) != len(sentences):
        raise ValueError("need equally many (non-zero) tables and sentences")
    return 100.0 * sum(content_correct(t, s, inventory) for t, s in zip(tables, sentences)) / len(tables)


# -- hand-checked examples -------------------------------------------------
# (candidates, reference groups, expected score), each worked out by hand.

_E = SMOOTH_EPS
HAND_EXAMPLES = {
    "bleu4": [
        # precisions 3/3, 2/2, 1/1, eps/1; candidate 3 tokens vs reference 4
        (["the cat sat"], [["the cat sat down"]], 100.0 * math.exp(1 - 4 / 3) * _E ** 0.25),
        (["a b c d"], [["a b c d"]], 100.0),
        # unigram 2/4 clipped ("a" appears once in the reference), bigram 1/3, tri 0/2, four 0/1
        (["a a b c"], [["a b d e"]], 100.0 * ((2 / 4) * (1 / 3) * (_E / 2) * _E) ** 0.25),
        # closest reference length 2 is shorter than the 3-token candidate: no brevity penalty
        (["x y z"], [["x y", "q r s t u"]], 100.0 * ((2 / 3) * (1 / 2) * _E * _E) ** 0.25),
    ],
    "rouge_l_f": [
        (["a b c d"], [["a c d"]], 100.0 * 2 * 0.75 / 1.75),
        (["a b"], [["a b"]], 100.0),
        (["a b"], [["c d"]], 0.0),
        # LCS("a b c", "c b a") = 1: P = R = 1/3
        (["a b c"], [["c b a"]], 100.0 / 3),
    ],
}
