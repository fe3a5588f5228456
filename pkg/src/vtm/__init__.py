"""Variational template machine: table-to-text generation with a template latent z and a content latent c."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import MODES, TrainConfig, spnlg_config, toy_config, wiki_config
from .corpus import Table, Vocabulary, build_dataset, delexicalize, parse_table, tokenize
from .metrics import bleu4, rouge_l_f, self_bleu, tradeoff_sweep
from .model import VTM, ModelDims
from .sampling import DecodeSpec, beam_search, generate, temperature_distribution
from .trainer import Trainer, fit

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint", "MODES", "TrainConfig", "spnlg_config",
    "toy_config", "wiki_config", "Table", "Vocabulary", "build_dataset", "delexicalize", "parse_table",
    "tokenize", "bleu4", "rouge_l_f", "self_bleu", "tradeoff_sweep", "VTM", "ModelDims", "DecodeSpec",
    "beam_search", "generate", "temperature_distribution", "Trainer", "fit",
]
