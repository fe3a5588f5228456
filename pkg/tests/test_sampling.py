import itertools
import json
import math

import pytest
import torch
from hypothesis import assume, given
from hypothesis import strategies as st

from vtm.checkpoint import Checkpoint
from vtm.corpus import Table, parse_table
from vtm.sampling import (
    DecodeSpec, _seed, beam_search, beam_search_core, decode, generate, generate_ids, generate_many,
    sequence_score, temperature_distribution, write_generations,
)

from conftest import tiny_config, tiny_data, tiny_model


@pytest.fixture(scope="module")
def ckpt():
    data = tiny_data()
    model = tiny_model(len(data.vocab), len(data.field_vocab), seed=5)
    return Checkpoint(model=model, config=tiny_config(), vocab=data.vocab, field_vocab=data.field_vocab)


@pytest.fixture(scope="module")
def tables():
    return [Table.from_fields({"name": "aromi", "food": "thai"}), Table.from_fields({"area": "riverside"})]


# -- temperature ------------------------------------------------------------

def test_tau_one_is_softmax():
    u = torch.tensor([2.0, 1.0, 0.0, -3.5], dtype=torch.float64)
    torch.testing.assert_close(temperature_distribution(u, 1.0), torch.softmax(u, -1), rtol=0, atol=1e-15)


def test_small_tau_approaches_greedy():
    p = temperature_distribution(torch.tensor([2.0, 1.0, 0.0], dtype=torch.float64), 0.01)
    assert p[0].item() > 1 - 1e-10


@given(st.floats(1e-3, 1e3))
def test_uniform_logits_uniform_distribution(tau):
    p = temperature_distribution(torch.full((7,), 0.3, dtype=torch.float64), tau)
    assert torch.equal(p, torch.full((7,), 1 / 7, dtype=torch.float64))


@given(st.lists(st.integers(-50, 50), min_size=2, max_size=10), st.integers(-1000, 1000),
       st.sampled_from([0.1, 0.25, 0.5, 1.0, 2.0, 4.0]))
def test_shift_invariance_exact(logits, shift, tau):
    u = torch.tensor(logits, dtype=torch.float64)
    assert torch.equal(temperature_distribution(u + shift, tau), temperature_distribution(u, tau))


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=10, unique=True), st.floats(1e-2, 1e2))
def test_argmax_preserved(logits, tau):
    u = torch.tensor(logits, dtype=torch.float64)
    top2 = torch.topk(u, 2).values
    assume(float(top2[0] - top2[1]) > 1e-6)
    p = temperature_distribution(u, tau)
    assert int(p.argmax()) == int(u.argmax())
    assert abs(p.sum().item() - 1) < 1e-12


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_nonpositive_tau_rejected(tau):
    with pytest.raises(ValueError):
        temperature_distribution(torch.zeros(3), tau)


@pytest.mark.parametrize("kw", [dict(strategy="nucleus"), dict(temperature=0), dict(beam_width=0),
                                dict(max_len=0), dict(n=0)])
def test_decode_spec_invariants(kw):
    with pytest.raises(ValueError):
        DecodeSpec(**kw)


# -- beam search core -------------------------------------------------------

class TableModel:
    """Fixed-length-3 model over 5 tokens whose next-token log-probs are looked up by prefix."""

    V = 5

    def __init__(self, logp):
        self.logp = logp  # prefix tuple -> (V,) log-probs

    def run(self, width):
        return beam_search_core(self._step_with_prefix, [()], width, 3, self._reorder, bos=-1, eos=99)

    def _step_with_prefix(self, prev, state):
        # state holds the prefixes before ``prev`` was appended
        prefixes = state
        if prev.numel() and prev[0].item() != -1:
            prefixes = [p + (int(t),) for p, t in zip(prefixes, prev.tolist())]
        return torch.stack([self.logp[p] for p in prefixes]), prefixes

    def _reorder(self, state, rows):
        return [state[r] for r in rows.tolist()]

    def score(self, seq):
        return sum(self.logp[seq[:i]][t].item() for i, t in enumerate(seq))


def random_model(seed):
    g = torch.Generator().manual_seed(seed)
    logp = {}
    for n in range(3):
        for prefix in itertools.product(range(5), repeat=n):
            logp[prefix] = torch.log_softmax(torch.randn(5, generator=g, dtype=torch.float64) * 2, -1)
    return TableModel(logp)


def exhaustive(m):
    seqs = list(itertools.product(range(5), repeat=3))
    assert len(seqs) == 125
    return max(seqs, key=m.score)


def planted_model():
    """Greedy takes token 0 first (p=.4) and then faces flat continuations;
    token 1 (p=.35) leads to near-deterministic continuations and wins overall."""
    flat = torch.full((5,), math.log(0.2), dtype=torch.float64)
    logp = {}
    first = torch.tensor([0.4, 0.35, 0.1, 0.1, 0.05], dtype=torch.float64).log()
    logp[()] = first
    for a in range(5):
        logp[(a,)] = flat if a != 1 else torch.tensor([0.96, 0.01, 0.01, 0.01, 0.01], dtype=torch.float64).log()
        for b in range(5):
            logp[(a, b)] = flat if a != 1 else torch.tensor([0.01, 0.01, 0.96, 0.01, 0.01],
                                                            dtype=torch.float64).log()
    return TableModel(logp)


def test_planted_width3_matches_exhaustive_and_beats_greedy():
    m = planted_model()
    best = exhaustive(m)
    tokens, score = m.run(3)
    assert tuple(tokens) == best == (1, 0, 2)
    greedy, _ = m.run(1)
    assert greedy[0] == 0 and m.score(tuple(greedy)) < m.score(best)
    assert abs(score - m.score(best) / 3) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_wide_beam_matches_exhaustive(seed):
    m = random_model(seed)
    tokens, _ = m.run(25)
    assert m.score(tuple(tokens)) == pytest.approx(m.score(exhaustive(m)), abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_width_one_is_greedy(seed):
    m = random_model(seed)
    tokens, _ = m.run(1)
    prefix = ()
    for _ in range(3):
        prefix += (int(m.logp[prefix].argmax()),)
    assert tuple(tokens) == prefix


def test_eos_retires_hypotheses():
    """Hypotheses ending in EOS stop growing; the best mean log-prob wins."""
    first = torch.tensor([0.6, 0.4], dtype=torch.float64).log()  # token 1 is EOS
    after_zero = torch.tensor([0.01, 0.99], dtype=torch.float64).log()

    def step(prev, state):
        return torch.stack([first if t == -1 else after_zero for t in prev.tolist()]), state

    tokens, score = beam_search_core(step, None, 2, 10, lambda s, r: s, bos=-1, eos=1)
    assert tokens == [0, 1]
    assert score == pytest.approx((math.log(0.6) + math.log(0.99)) / 2)


# -- checkpoint-backed decoding ---------------------------------------------

def test_beam_width_one_equals_greedy_decode(ckpt, tables):
    for seed in range(5):
        greedy = decode(ckpt, [tables[0]], [seed], "greedy", max_len=12)[0]
        assert beam_search(tables[0], 1, ckpt, seed, max_len=12) == greedy


def test_beam_score_at_least_greedy(ckpt, tables):
    for seed in range(5):
        for t in tables:
            greedy = decode(ckpt, [t], [seed], "greedy", max_len=60)[0]
            for w in (2, 3, 5):
                beam = beam_search(t, w, ckpt, seed)
                assert sequence_score(ckpt, t, beam, seed) >= sequence_score(ckpt, t, greedy, seed) - 1e-12


def test_generate_reproducible(ckpt, tables):
    for strategy in ("greedy", "temperature", "beam"):
        spec = DecodeSpec(strategy, n=3, seed=11, max_len=10)
        assert generate_many(tables, spec, ckpt) == generate_many(tables, spec, ckpt)


def test_generate_seed_changes_samples(ckpt, tables):
    a = generate_ids(tables, DecodeSpec("temperature", n=4, seed=1, max_len=10), ckpt)
    b = generate_ids(tables, DecodeSpec("temperature", n=4, seed=2, max_len=10), ckpt)
    assert a != b


def test_batched_decode_matches_single(ckpt, tables):
    spec = DecodeSpec("temperature", n=2, seed=3, max_len=10)
    both = generate_ids(tables, spec, ckpt)
    single = decode(ckpt, [tables[0]], [_seed(_seed(3, 0), 0)], "temperature", 1.0, 10)
    assert single[0] == both[0][0]


def test_beam_outputs_use_widths_one_to_five(ckpt, tables):
    out = generate_ids(tables[:1], DecodeSpec("beam", n=5, beam_width=5, seed=0, max_len=10), ckpt)[0]
    assert len(out) == 5


def test_generate_n_and_max_len(ckpt, tables):
    outs = generate(tables[0], 4, DecodeSpec("temperature", max_len=7), ckpt)
    assert len(outs) == 4 and all(len(o.split()) <= 7 for o in outs)


def test_table2seq_ignores_seed_under_greedy(ckpt, tables):
    t2s = Checkpoint(model=ckpt.model, config=tiny_config(mode="table2seq"), vocab=ckpt.vocab,
                     field_vocab=ckpt.field_vocab)
    outs = generate(tables[0], 3, DecodeSpec("greedy", max_len=10), t2s)
    assert len(set(outs)) == 1


def test_write_generations(tmp_path, ckpt, tables):
    spec = DecodeSpec("temperature", temperature=0.5, n=2, seed=4, max_len=5)
    outs = generate_many(tables, spec, ckpt)
    write_generations(tmp_path / "g.jsonl", tables, outs, spec)
    rows = [json.loads(x) for x in open(tmp_path / "g.jsonl")]
    assert rows[0]["outputs"] == outs[0] and rows[0]["strategy"] == "temperature" and rows[0]["seed"] == 4
    assert parse_table(rows[1]["table"]) == tables[1]
