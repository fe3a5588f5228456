"""Three-phase training loop, model selection and logging.

Each round of an epoch runs three updates on fresh batches:

1. paired batch: ELBO_p + MI + L_pt + L_pc, updating every parameter group;
2. raw batch: ELBO_r + MI, updating the posterior and the sentence generator
   only (the template decoder and table encoder are left untouched);
3. paired + raw batch: the full total loss, updating every group.

Modes without raw data skip line 2 and run line 1 in place of line 3;
``table2seq`` runs plain maximum-likelihood steps.
"""

from __future__ import annotations

import copy
import csv
import logging
from pathlib import Path
from typing import Iterator, Sequence

import torch

from .checkpoint import Checkpoint
from .config import TrainConfig
from .corpus import Batch, Dataset, PairedExample, RawExample, collate, make_batches
from .model import GROUPS, VTM, ModelDims
from .objectives import LossBreakdown, compute_losses, draw_noise

log = logging.getLogger(__name__)

PAIRED_GROUPS = GROUPS
RAW_GROUPS = ("inference", "generator")


class TrainingDivergence(RuntimeError):
    def __init__(self, phase: str, step: int, breakdown: dict[str, float]):
        terms = ", ".join(f"{k}={v:.6g}" for k, v in breakdown.items())
        super().__init__(f"non-finite loss in {phase} step {step}: {terms}")
        self.breakdown = breakdown


def build_model(config: TrainConfig, n_words: int, n_fields: int) -> VTM:
    torch.manual_seed(config.seed)
    return VTM(ModelDims(n_words=n_words, n_fields=n_fields, emb_dim=config.emb_dim, hidden=config.hidden,
                         d_t=config.d_t, d_z=config.d_z, d_c=config.d_c,
                         dropout=config.dropout))


def batches(examples: Sequence, batch_size: int, seed: int) -> list[Batch]:
    """Shuffled batches; a trailing singleton is folded into the previous batch."""
    out = make_batches(examples, batch_size, seed)
    if len(out) > 1 and len(out[-1]) == 1:
        last = out.pop()
        out[-1] = collate(out[-1].examples + last.examples)
    return out


def _cycle(examples: Sequence, batch_size: int, seed: int) -> Iterator[Batch]:
    k = 0
    while True:
        yield from batches(examples, batch_size, seed * 7919 + k)
        k += 1


class Trainer:
    """Owns the model, one Adam optimizer over all parameters, and the noise stream."""

    def __init__(self, model: VTM, config: TrainConfig):
        self.model = model
        self.config = config
        self.groups = model.parameter_groups()
        self.names = {p: n for g in self.groups.values() for n, p in g}
        self.optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
        self.noise = torch.Generator().manual_seed(config.seed + 1)
        self.step = 0
        self.step_log: list[dict] = []

    def kl_weight(self) -> float:
        if self.config.kl_warmup_steps <= 0:
            return 1.0
        return min(1.0, (self.step + 1) / self.config.kl_warmup_steps)

    def _update(self, phase: str, paired: Batch | None, raw: Batch | None, groups: Sequence[str],
                noise: dict | None = None) -> LossBreakdown:
        self.model.train()
        if noise is None:
            noise = draw_noise(self.model, paired, raw, self.noise)
        losses = compute_losses(self.model, paired, raw, self.config, noise, self.kl_weight())
        if not torch.isfinite(losses.total):
            raise TrainingDivergence(phase, self.step, losses.as_dict())
        self.optimizer.zero_grad(set_to_none=True)
        losses.total.backward()
        keep = [p for g in groups for _, p in self.groups[g]]
        keep_ids = {id(p) for p in keep}
        for p in self.model.parameters():
            if id(p) not in keep_ids:
                p.grad = None
        torch.nn.utils.clip_grad_norm_([p for p in keep if p.grad is not None], self.config.grad_clip)
        self.optimizer.step()
        self.step += 1
        self.step_log.append({"step": self.step, "phase": phase, **losses.as_dict()})
        return losses

    def train_step_paired(self, batch: Batch, noise: dict | None = None) -> LossBreakdown:
        return self._update("paired", batch, None, PAIRED_GROUPS, noise)

    def train_step_raw(self, batch: Batch, noise: dict | None = None) -> LossBreakdown:
        if not self.config.uses_raw:
            raise ValueError(f"mode {self.config.mode!r} does not train on raw data")
        return self._update("raw", None, batch, RAW_GROUPS, noise)

    def train_step_joint(self, paired: Batch, raw: Batch | None, noise: dict | None = None) -> LossBreakdown:
        if not self.config.uses_raw:
            return self._update("joint", paired, None, PAIRED_GROUPS, noise)
        if raw is None:
            raise ValueError(f"mode {self.config.mode!r} needs a raw batch for the joint step")
        return self._update("joint", paired, raw, PAIRED_GROUPS, noise)

    # -- checkpoint support --------------------------------------------

    def named_optimizer_state(self) -> dict:
        sd = self.optimizer.state_dict()
        params = list(self.model.parameters())
        group = sd["param_groups"][0]
        hyper = {k: (list(v) if isinstance(v, tuple) else v) for k, v in group.items() if k != "params"}
        state = {self.names[params[i]]: s for i, s in sd["state"].items()}
        return {"param_groups": [hyper], "state": copy.deepcopy(state)}

    def load_named_optimizer_state(self, named: dict) -> None:
        params = list(self.model.parameters())
        index = {self.names[p]: i for i, p in enumerate(params)}
        group = dict(named["param_groups"][0])
        if "betas" in group:
            group["betas"] = tuple(group["betas"])
        group["params"] = list(range(len(params)))
        self.optimizer.load_state_dict({
            "param_groups": [group],
            "state": {index[n]: s for n, s in named["state"].items()},
        })


@torch.no_grad()
def validation_score(model: VTM, config: TrainConfig, valid_paired: Sequence[PairedExample],
                     valid_raw: Sequence[RawExample] = ()) -> float:
    """Selection metric: mean ELBO_p, plus mean ELBO_r when the mode trains on raw data.

    Noise is drawn from a fixed-seed stream so scores are comparable across epochs.
    """
    model.eval()
    gen = torch.Generator().manual_seed(config.seed + 2)
    bs = max(config.batch_size, 2)
    total_p = 0.0
    for b in batches(valid_paired, bs, 0):
        losses = compute_losses(model, b, None, config, draw_noise(model, b, None, gen))
        total_p += float(losses.elbo_p) * len(b)
    score = total_p / len(valid_paired)
    if config.uses_raw and valid_raw:
        total_r = 0.0
        for b in batches(valid_raw, max(config.raw_batch_size, 2), 0):
            losses = compute_losses(model, None, b, config, draw_noise(model, None, b, gen))
            total_r += float(losses.elbo_r) * len(b)
        score += total_r / len(valid_raw)
    return score


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})


def fit(data: Dataset, valid_paired: Sequence[PairedExample], valid_raw: Sequence[RawExample],
        config: TrainConfig, log_dir: str | Path | None = None) -> Checkpoint:
    """Train with early stopping on the validation score and return the best checkpoint.

    Epoch 0 in the history is the untrained model. One epoch is one pass over
    the paired batches; raw batches are drawn from an independently cycled
    iterator.
    """
    if not data.paired:
        raise ValueError("no paired training data")
    if config.uses_raw and not data.raw:
        raise ValueError(f"mode {config.mode!r} needs raw training data")
    if not valid_paired:
        raise ValueError("no validation data")
    torch.use_deterministic_algorithms(True)
    model = build_model(config, len(data.vocab), len(data.field_vocab))
    trainer = Trainer(model, config)
    raw_iter = _cycle(data.raw, config.raw_batch_size, config.seed) if config.uses_raw else None

    history = [validation_score(model, config, valid_paired, valid_raw)]
    best = Checkpoint(model=copy.deepcopy(model), config=config, vocab=data.vocab,
                      field_vocab=data.field_vocab, optimizer_state=None,
                      best_score=history[0], best_epoch=0, history=list(history))
    log.info("epoch 0 validation %.4f", history[0])
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        paired = batches(data.paired, config.batch_size, config.seed * 1000 + epoch)
        i = 0
        while i < len(paired):
            trainer.train_step_paired(paired[i])
            i += 1
            if not config.latent:
                continue
            if raw_iter is not None:
                trainer.train_step_raw(next(raw_iter))
            if i < len(paired):
                trainer.train_step_joint(paired[i], next(raw_iter) if raw_iter is not None else None)
                i += 1
        score = validation_score(model, config, valid_paired, valid_raw)
        history.append(score)
        improved = score < best.best_score
        log.info("epoch %d validation %.4f%s", epoch, score, " *" if improved else "")
        if improved:
            best = Checkpoint(model=copy.deepcopy(model), config=config, vocab=data.vocab,
                              field_vocab=data.field_vocab,
                              optimizer_state=trainer.named_optimizer_state(),
                              best_score=score, best_epoch=epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("stopping after %d epochs without improvement", stale)
                break
    best.history = history
    best.rng_state = torch.get_rng_state()
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(log_dir / "steps.csv", trainer.step_log)
        _write_csv(log_dir / "epochs.csv", [{"epoch": e, "valid_score": s, "best": int(e == best.best_epoch)}
                                            for e, s in enumerate(history)])
    return best
