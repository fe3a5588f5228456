import itertools

import pytest
import torch
from torch import nn

from vtm.corpus import BOS_ID, EOS_ID, PAD_ID
from vtm.generator import SentenceDecoder, TemplateDecoder, shift_right

V, DZ, DC, DT, H = 5, 2, 3, 4, 6


def decoder(seed=0):
    torch.manual_seed(seed)
    return SentenceDecoder(nn.Embedding(V, 3), DZ, DC, DT, H).double()


def latents(b=1, seed=0):
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(b, DZ, generator=g, dtype=torch.float64),
            torch.randn(b, DC, generator=g, dtype=torch.float64),
            torch.rand(b, 3, DT, generator=g, dtype=torch.float64) * 2 - 1)


def test_zero_parameters_uniform_logits():
    dec = decoder()
    with torch.no_grad():
        for p in dec.parameters():
            p.zero_()
    z, c, rec = latents()
    logits, _ = dec.step(torch.tensor([BOS_ID]), dec.initial_state(z, c), z, c, rec)
    assert bool((logits == logits[0, 0]).all())


def test_step_distribution_normalized():
    dec = decoder()
    z, c, rec = latents(4)
    logits, _ = dec.step(torch.full((4,), BOS_ID), dec.initial_state(z, c), z, c, rec)
    torch.testing.assert_close(torch.softmax(logits, -1).sum(-1), torch.ones(4, dtype=torch.float64),
                               atol=1e-6, rtol=0)


def test_raw_and_paired_coincide_on_zero_record():
    dec = decoder()
    z, c, _ = latents()
    zero_rec = torch.zeros(1, 1, DT, dtype=torch.float64)
    s = dec.initial_state(z, c)
    a, _ = dec.step(torch.tensor([BOS_ID]), s, z, c, zero_rec)
    b, _ = dec.step(torch.tensor([BOS_ID]), s, z, c, None)
    assert torch.equal(a, b)


def test_raw_and_paired_differ_only_through_context():
    dec = decoder()
    z, c, rec = latents()
    out, _ = dec.lstm.run(torch.tensor([[BOS_ID]]), dec._cond(z, c))
    ctx, _ = dec.attention(out, rec)
    paired, _ = dec.logits(torch.tensor([[BOS_ID]]), z, c, rec)
    raw, _ = dec.logits(torch.tensor([[BOS_ID]]), z, c, None)
    w_ctx = dec.out.weight[:, H:]
    torch.testing.assert_close(paired - raw, ctx @ w_ctx.T, rtol=1e-12, atol=1e-12)


def test_attention_weights_match_hand_softmax():
    dec = decoder()
    z, c, rec = latents()
    out, _ = dec.lstm.run(torch.tensor([[BOS_ID]]), dec._cond(z, c))
    _, w = dec.attention(out, rec)
    o = out[0, 0].tolist()
    a = dec.attn.tolist()
    scores = []
    for k in range(3):
        r = rec[0, k].tolist()
        scores.append(sum(o[i] * a[i][j] * r[j] for i in range(H) for j in range(DT)))
    m = max(scores)
    ex = [pow(2.718281828459045, s - m) for s in scores]
    expected = torch.tensor([e / sum(ex) for e in ex], dtype=torch.float64)
    torch.testing.assert_close(w[0, 0], expected, rtol=1e-9, atol=1e-12)
    assert abs(w.sum().item() - 1) < 1e-12


def test_masked_records_get_no_weight():
    dec = decoder()
    z, c, rec = latents()
    out, _ = dec.lstm.run(torch.tensor([[BOS_ID]]), dec._cond(z, c))
    _, w = dec.attention(out, rec, torch.tensor([[True, False, True]]))
    assert w[0, 0, 1].item() == 0.0


def test_dimension_mismatch_raises():
    dec = decoder()
    z, c, rec = latents()
    with pytest.raises(ValueError):
        dec.initial_state(torch.zeros(1, DZ + 1, dtype=torch.float64), c)


def test_sequence_log_prob_matches_chain_rule_enumeration():
    """Exhaustively enumerate length-3 sequences; the step-by-step chain rule is the oracle."""
    dec = decoder(1)
    z, c, rec = latents(seed=2)
    total = 0.0
    for seq in itertools.product(range(V), repeat=2):
        y = torch.tensor([[seq[0], seq[1], EOS_ID]])
        lp = dec.sequence_log_prob(y, torch.ones_like(y, dtype=torch.bool), z, c, rec).item()
        state = dec.initial_state(z, c)
        prev = torch.tensor([BOS_ID])
        manual = 0.0
        for tok in y[0].tolist():
            logits, state = dec.step(prev, state, z, c, rec)
            manual += torch.log_softmax(logits, -1)[0, tok].item()
            prev = torch.tensor([tok])
        assert abs(lp - manual) < 1e-10
        assert lp <= 0
        total += torch.tensor(lp).exp().item()
    assert 0 < total < 1


def test_padding_beyond_eos_ignored():
    dec = decoder()
    z, c, rec = latents()
    y = torch.tensor([[3, 1, EOS_ID]])
    y_pad = torch.tensor([[3, 1, EOS_ID, PAD_ID, PAD_ID]])
    a = dec.sequence_log_prob(y, y != PAD_ID, z, c, rec)
    b = dec.sequence_log_prob(y_pad, y_pad != PAD_ID, z, c, rec)
    assert torch.equal(a, b)


def test_shift_right():
    assert shift_right(torch.tensor([[7, 8, 9]])).tolist() == [[BOS_ID, 7, 8]]


def test_sequence_log_prob_gradient_matches_finite_differences():
    dec = decoder(3)
    z, c, rec = latents(seed=4)
    z.requires_grad_(True)
    c.requires_grad_(True)
    y = torch.tensor([[3, 4, EOS_ID]])
    mask = torch.ones_like(y, dtype=torch.bool)
    params = [z, c, dec.attn, dec.out.weight, dec.lstm.init.weight]

    def f():
        return dec.sequence_log_prob(y, mask, z, c, rec).sum()

    grads = torch.autograd.grad(f(), params)
    for p, g in zip(params, grads):
        fd = torch.zeros_like(p)
        with torch.no_grad():
            flat, fdf = p.view(-1), fd.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + 1e-6
                up = f().item()
                flat[i] = old - 1e-6
                down = f().item()
                flat[i] = old
                fdf[i] = (up - down) / 2e-6
        assert ((g - fd).norm() / fd.norm()).item() < 1e-3


# -- template decoder -------------------------------------------------------

def tdecoder():
    torch.manual_seed(0)
    return TemplateDecoder(V, 3, DZ, H).double()


def test_template_prefix_monotone():
    dec = tdecoder()
    z = torch.randn(1, DZ, dtype=torch.float64)
    y = torch.tensor([[2, 3, 4, EOS_ID]])
    full = dec.template_log_prob(y, torch.ones_like(y, dtype=torch.bool), z).item()
    prefix_mask = torch.tensor([[True, True, True, False]])
    prefix = dec.template_log_prob(y, prefix_mask, z).item()
    assert full <= prefix <= 0


def test_template_chain_rule():
    dec = tdecoder()
    z = torch.randn(1, DZ, dtype=torch.float64)
    y = torch.tensor([[2, 4, EOS_ID]])
    lp = dec.template_log_prob(y, torch.ones_like(y, dtype=torch.bool), z).item()
    state = dec.lstm.initial_state(z)
    manual, prev = 0.0, BOS_ID
    for tok in y[0].tolist():
        logits, state = dec.logits(torch.tensor([[prev]]), z, state)
        manual += torch.log_softmax(logits[0, 0], -1)[tok].item()
        prev = tok
    assert abs(lp - manual) < 1e-10


def test_template_padding_invariance():
    dec = tdecoder()
    z = torch.randn(2, DZ, dtype=torch.float64)
    y = torch.tensor([[2, EOS_ID, PAD_ID], [3, 4, EOS_ID]])
    both = dec.template_log_prob(y, y != PAD_ID, z)
    first = dec.template_log_prob(y[:1, :2], y[:1, :2] != PAD_ID, z[:1])
    assert torch.equal(both[:1], first)
