"""Single-file checkpoint archive.

A checkpoint is a zip of ``.npy`` arrays (parameters, Adam moments, RNG
state) and JSON documents (config, vocabularies, training metadata). Entries
are written in sorted order with a fixed timestamp so identical contents give
identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .corpus import Vocabulary
from .model import VTM, ModelDims

_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    model: VTM
    config: TrainConfig
    vocab: Vocabulary
    field_vocab: Vocabulary
    optimizer_state: dict | None = None
    best_score: float = float("inf")
    best_epoch: int = -1
    history: list[float] = field(default_factory=list)
    rng_state: torch.Tensor | None = None


def _npy(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode()


def _write_zip(path: Path, entries: dict[str, bytes]) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, entries[name])


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    entries: dict[str, bytes] = {}
    for name, t in ckpt.model.state_dict().items():
        entries[f"params/{name}.npy"] = _npy(t.detach().cpu().numpy())
    if ckpt.optimizer_state is not None:
        state = ckpt.optimizer_state
        meta = {"param_groups": state["param_groups"], "step": {}}
        for name, s in state["state"].items():
            meta["step"][name] = float(s["step"])
            entries[f"optim/{name}/exp_avg.npy"] = _npy(s["exp_avg"].cpu().numpy())
            entries[f"optim/{name}/exp_avg_sq.npy"] = _npy(s["exp_avg_sq"].cpu().numpy())
        entries["optim/meta.json"] = _json(meta)
    if ckpt.rng_state is not None:
        entries["rng/torch.npy"] = _npy(ckpt.rng_state.cpu().numpy())
    entries["config.json"] = _json(ckpt.config.to_dict())
    entries["dims.json"] = _json(ckpt.model.dims_dict())
    entries["vocab.json"] = _json(ckpt.vocab.to_json())
    entries["fields.json"] = _json(ckpt.field_vocab.to_json())
    entries["meta.json"] = _json({"best_score": ckpt.best_score, "best_epoch": ckpt.best_epoch,
                                  "history": ckpt.history,
                                  "dtype": str(next(ckpt.model.parameters()).dtype)})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_zip(path, entries)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with zipfile.ZipFile(path) as zf:
        names = zf.namelist()

        def arr(name):
            return np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)

        def js(name):
            return json.loads(zf.read(name))

        config = TrainConfig.from_dict(js("config.json"))
        meta = js("meta.json")
        model = VTM(ModelDims(**js("dims.json")))
        if meta.get("dtype") == "torch.float64":
            model.double()
        state = {n[len("params/"):-len(".npy")]: torch.from_numpy(arr(n).copy())
                 for n in names if n.startswith("params/")}
        model.load_state_dict(state)
        opt_state = None
        if "optim/meta.json" in names:
            om = js("optim/meta.json")
            opt_state = {"param_groups": om["param_groups"], "state": {}}
            for pname, step in om["step"].items():
                opt_state["state"][pname] = {
                    "step": torch.tensor(step),
                    "exp_avg": torch.from_numpy(arr(f"optim/{pname}/exp_avg.npy").copy()),
                    "exp_avg_sq": torch.from_numpy(arr(f"optim/{pname}/exp_avg_sq.npy").copy()),
                }
        rng = torch.from_numpy(arr("rng/torch.npy").copy()) if "rng/torch.npy" in names else None
        return Checkpoint(
            model=model,
            config=config,
            vocab=Vocabulary.from_json(js("vocab.json")),
            field_vocab=Vocabulary.from_json(js("fields.json")),
            optimizer_state=opt_state,
            best_score=meta["best_score"],
            best_epoch=meta["best_epoch"],
            history=meta["history"],
            rng_state=rng,
        )
