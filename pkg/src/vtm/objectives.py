"""Training losses.

Every loss is a mean over the batch of per-example sums over time steps.
Noise can be passed explicitly (``eps_*`` tensors) so that a loss is a
deterministic function of the parameters; otherwise it is drawn from the
global torch RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch

from .config import TrainConfig
from .corpus import Batch
from .inference import DiagonalGaussian, kl_to_standard_normal, reparameterize
from .model import VTM


def _zero(model: VTM) -> torch.Tensor:
    return model.embedding.weight.new_zeros(())


@dataclass
class LossBreakdown:
    elbo_p: torch.Tensor
    elbo_r: torch.Tensor
    rec_p: torch.Tensor
    rec_r: torch.Tensor
    kl_z_p: torch.Tensor
    kl_z_r: torch.Tensor
    kl_c: torch.Tensor
    l_pt: torch.Tensor
    l_pc: torch.Tensor
    l_mi_z: torch.Tensor
    l_mi_c: torch.Tensor
    l_mi: torch.Tensor
    total: torch.Tensor

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# -- MI estimator ----------------------------------------------------------

def mutual_information(q: DiagonalGaussian, v: torch.Tensor) -> torch.Tensor:
    """Minibatch estimate of I(v, y).

    ``v[i]`` is a sample from ``q[i] = q(v | y_i)``; the aggregate posterior is
    the uniform mixture of the B posteriors in the batch.
    """
    b = v.shape[0]
    if b < 2:
        raise ValueError("the mutual-information estimator needs a batch of at least 2")
    # log_q[i, j] = log q(v_i | y_j)
    pairwise = DiagonalGaussian(q.mean.unsqueeze(0), q.log_variance.unsqueeze(0))
    log_q = pairwise.log_density(v.unsqueeze(1))
    log_mix = torch.logsumexp(log_q, dim=1) - math.log(b)
    return (log_q.diagonal() - log_mix).mean()


def mutual_information_loss(model: VTM, batch: Batch, eps_z=None, eps_c=None) -> torch.Tensor:
    qz, qc = model.posteriors(batch)
    z = reparameterize(qz, eps_z)
    c = reparameterize(qc, eps_c)
    return -mutual_information(qz, z) - mutual_information(qc, c)


# -- single terms ----------------------------------------------------------

def elbo_paired(model: VTM, batch: Batch, eps_z=None) -> torch.Tensor:
    qz, _ = model.posteriors(batch)
    records, _, content = model.encode_table(batch)
    z = reparameterize(qz, eps_z)
    rec = -model.decoder.sequence_log_prob(batch.tokens, batch.mask, z, content, records, batch.record_mask)
    return (rec + kl_to_standard_normal(qz)).mean()


def elbo_raw(model: VTM, batch: Batch, eps_z=None, eps_c=None) -> torch.Tensor:
    qz, qc = model.posteriors(batch)
    z = reparameterize(qz, eps_z)
    c = reparameterize(qc, eps_c)
    rec = -model.decoder.sequence_log_prob(batch.tokens, batch.mask, z, c)
    return (rec + kl_to_standard_normal(qz) + kl_to_standard_normal(qc)).mean()


def preserving_template_loss(model: VTM, batch: Batch, eps_z=None, z=None) -> torch.Tensor:
    if z is None:
        qz, _ = model.posteriors(batch)
        z = reparameterize(qz, eps_z)
    return -model.template_decoder.template_log_prob(batch.templates, batch.template_mask, z).mean()


def expected_squared_distance(q: DiagonalGaussian, h: torch.Tensor) -> torch.Tensor:
    """E_q ||c - h||^2 in closed form: ||mean - h||^2 + trace of the covariance."""
    return ((q.mean - h) ** 2).sum(-1) + q.variance.sum(-1)


def preserving_content_loss(model: VTM, batch: Batch) -> torch.Tensor:
    _, qc = model.posteriors(batch)
    _, _, content = model.encode_table(batch)
    return (expected_squared_distance(qc, content) + kl_to_standard_normal(qc)).mean()


# -- combined --------------------------------------------------------------

def _paired_terms(model, batch, config, noise):
    records, _, content = model.encode_table(batch)
    zero = _zero(model)
    if not config.latent:
        z = content.new_zeros(len(batch), model.dims.d_z)
        rec = -model.decoder.sequence_log_prob(batch.tokens, batch.mask, z, content, records, batch.record_mask)
        return dict(rec_p=rec.mean(), kl_z_p=zero, l_pt=zero, l_pc=zero, mi_z=zero, mi_c=zero)
    lam_mi, lam_pt, lam_pc = config.lambdas()
    qz, qc = model.posteriors(batch)
    z = reparameterize(qz, noise.get("eps_z_p"))
    rec = -model.decoder.sequence_log_prob(batch.tokens, batch.mask, z, content, records, batch.record_mask)
    out = dict(rec_p=rec.mean(), kl_z_p=kl_to_standard_normal(qz).mean())
    out["l_pt"] = preserving_template_loss(model, batch, z=z) if lam_pt else zero
    out["l_pc"] = (expected_squared_distance(qc, content) + kl_to_standard_normal(qc)).mean() if lam_pc else zero
    if lam_mi:
        c = reparameterize(qc, noise.get("eps_c_p"))
        out["mi_z"] = -mutual_information(qz, z)
        out["mi_c"] = -mutual_information(qc, c)
    else:
        out["mi_z"] = out["mi_c"] = zero
    return out


def _raw_terms(model, batch, config, noise):
    lam_mi, _, _ = config.lambdas()
    zero = _zero(model)
    qz, qc = model.posteriors(batch)
    z = reparameterize(qz, noise.get("eps_z_r"))
    c = reparameterize(qc, noise.get("eps_c_r"))
    rec = -model.decoder.sequence_log_prob(batch.tokens, batch.mask, z, c)
    out = dict(rec_r=rec.mean(), kl_z_r=kl_to_standard_normal(qz).mean(), kl_c=kl_to_standard_normal(qc).mean())
    if lam_mi:
        out["mi_z"] = -mutual_information(qz, z)
        out["mi_c"] = -mutual_information(qc, c)
    else:
        out["mi_z"] = out["mi_c"] = zero
    return out


def compute_losses(model: VTM, paired: Batch | None, raw: Batch | None, config: TrainConfig,
                   noise: dict | None = None, kl_weight: float = 1.0) -> LossBreakdown:
    """Weighted loss over whichever of the paired and raw batches is given.

    With both batches this is the full total loss; with one it is the loss of
    the corresponding single-data-kind update.
    """
    noise = noise or {}
    zero = _zero(model)
    lam_mi, lam_pt, lam_pc = config.lambdas()
    p = _paired_terms(model, paired, config, noise) if paired is not None else {}
    r = _raw_terms(model, raw, config, noise) if raw is not None else {}
    rec_p, kl_z_p = p.get("rec_p", zero), p.get("kl_z_p", zero)
    rec_r, kl_z_r, kl_c = r.get("rec_r", zero), r.get("kl_z_r", zero), r.get("kl_c", zero)
    elbo_p = rec_p + kl_weight * kl_z_p
    elbo_r = rec_r + kl_weight * (kl_z_r + kl_c)
    l_mi_z = p.get("mi_z", zero) + r.get("mi_z", zero)
    l_mi_c = p.get("mi_c", zero) + r.get("mi_c", zero)
    l_mi = l_mi_z + l_mi_c
    l_pt, l_pc = p.get("l_pt", zero), p.get("l_pc", zero)
    total = elbo_p + elbo_r + lam_mi * l_mi + lam_pt * l_pt + lam_pc * l_pc
    return LossBreakdown(elbo_p=elbo_p, elbo_r=elbo_r, rec_p=rec_p, rec_r=rec_r, kl_z_p=kl_z_p,
                         kl_z_r=kl_z_r, kl_c=kl_c, l_pt=l_pt, l_pc=l_pc, l_mi_z=l_mi_z,
                         l_mi_c=l_mi_c, l_mi=l_mi, total=total)


def total_loss(model: VTM, paired: Batch, raw: Batch | None, config: TrainConfig,
               noise: dict | None = None, kl_weight: float = 1.0) -> LossBreakdown:
    if paired is None:
        raise ValueError("total loss needs a paired batch")
    if config.uses_raw and raw is None:
        raise ValueError(f"mode {config.mode!r} needs a raw batch")
    if not config.uses_raw:
        raw = None
    return compute_losses(model, paired, raw, config, noise, kl_weight)


def draw_noise(model: VTM, paired: Batch | None, raw: Batch | None,
               generator: torch.Generator | None = None) -> dict[str, torch.Tensor]:
    """Standard-normal noise for every reparameterized sample in a loss evaluation."""
    d = model.dims
    dtype = model.embedding.weight.dtype
    out = {}
    if paired is not None:
        b = len(paired)
        out["eps_z_p"] = torch.randn(b, d.d_z, generator=generator, dtype=dtype)
        out["eps_c_p"] = torch.randn(b, d.d_c, generator=generator, dtype=dtype)
    if raw is not None:
        b = len(raw)
        out["eps_z_r"] = torch.randn(b, d.d_z, generator=generator, dtype=dtype)
        out["eps_c_r"] = torch.randn(b, d.d_c, generator=generator, dtype=dtype)
    return out
