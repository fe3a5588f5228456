"""Training configuration and the ablation/baseline modes."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODES = ("vtm", "vtm-noraw", "vtm-noraw-noMI", "vtm-noraw-noMI-noPT", "vtm-noPC", "table2seq")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    mode: str = "vtm"
    emb_dim: int = 300
    hidden: int = 300
    d_t: int = 300
    d_z: int = 64
    d_c: int = 100
    dropout: float = 0.0
    lambda_mi: float = 1.0
    lambda_pt: float = 1.0
    lambda_pc: float = 1.0
    lr: float = 1e-3
    grad_clip: float = 5.0
    kl_warmup_steps: int = 0
    batch_size: int = 32
    raw_batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    min_count: int = 5
    max_len: int = 60
    train_paired: str = ""
    train_raw: str = ""
    valid_paired: str = ""
    valid_raw: str = ""
    out_dir: str = "runs/vtm"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        for name in ("emb_dim", "hidden", "d_t", "d_z", "d_c", "batch_size", "raw_batch_size", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.hidden % 2:
            raise ConfigError("hidden must be even (the posterior encoder is bidirectional)")

    @property
    def uses_raw(self) -> bool:
        return self.mode in ("vtm", "vtm-noPC")

    @property
    def latent(self) -> bool:
        return self.mode != "table2seq"

    def lambdas(self) -> tuple[float, float, float]:
        """(lambda_mi, lambda_pt, lambda_pc) with the mode's ablated terms zeroed."""
        if self.mode == "table2seq":
            return 0.0, 0.0, 0.0
        mi, pt, pc = self.lambda_mi, self.lambda_pt, self.lambda_pc
        if self.mode in ("vtm-noraw-noMI", "vtm-noraw-noMI-noPT"):
            mi = 0.0
        if self.mode == "vtm-noraw-noMI-noPT":
            pt = 0.0
        if self.mode == "vtm-noPC":
            pc = 0.0
        return mi, pt, pc

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "TrainConfig":
        """Read a flat TOML file; non-None ``overrides`` win over file values."""
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        nested = [k for k, v in data.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"{path}: config must be flat, found tables {nested}")
        base = Path(path).parent
        for key in ("train_paired", "train_raw", "valid_paired", "valid_raw", "out_dir"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> None:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            elif isinstance(v, bool):
                lines.append(f"{k} = {str(v).lower()}")
            else:
                lines.append(f"{k} = {v!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def spnlg_config(**kw) -> TrainConfig:
    return TrainConfig(d_z=64, d_c=100, lambda_mi=1.0, lambda_pt=1.0, lambda_pc=1.0, **kw)


def wiki_config(**kw) -> TrainConfig:
    return TrainConfig(d_z=100, d_c=200, lambda_mi=0.5, lambda_pt=1.0, lambda_pc=0.5, **kw)


def toy_config(**kw) -> TrainConfig:
    """Desk-scale settings for the synthetic corpus.

    The KL warmup keeps q(c|y) from collapsing before it has learned the slot
    values; without it L_pc pulls the table encoder toward a value-blind
    posterior and pairs of values become indistinguishable.
    """
    base = dict(emb_dim=64, hidden=128, d_t=64, d_z=4, d_c=32, min_count=2, dropout=0.3,
                lambda_mi=1.0, lambda_pt=1.0, lambda_pc=1.0, lr=2e-3, kl_warmup_steps=3000,
                max_epochs=250, patience=60)
    base.update(kw)
    return TrainConfig(**base)
