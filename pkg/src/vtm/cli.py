"""Command-line entry point.

    vtm make-toy --paired 1000 --raw 10000 --templates 8 --seed 7 --out data/toy
    vtm train --config data/toy/toy.toml [--mode vtm-noraw] [--seed 3]
    vtm generate --checkpoint runs/vtm/model.ckpt --out gen.jsonl
    vtm evaluate --checkpoint runs/vtm/model.ckpt --out report.csv
    vtm sweep --checkpoint runs/vtm/model.ckpt --out sweep.csv

Flags override config-file values, which override built-in defaults. Paths
not given default to files under ``$VTM_DATA_DIR`` (``data/toy`` if unset).
Logs go to stderr; results go to files only.

Exit status: 0 success, 2 usage/input error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import MODES, ConfigError, TrainConfig, spnlg_config, toy_config, wiki_config
from .corpus import TableParseError, build_dataset, delexicalize, read_paired, read_raw
from .metrics import DEFAULT_TAUS, content_accuracy, evaluate_outputs, tradeoff_sweep, write_report

log = logging.getLogger("vtm")

PRESETS = {"default": TrainConfig, "toy": toy_config, "spnlg": spnlg_config, "wiki": wiki_config}


class UsageError(Exception):
    pass


def data_dir() -> Path:
    return Path(os.environ.get("VTM_DATA_DIR", "data/toy"))


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


# -- commands --------------------------------------------------------------

def cmd_make_toy(args) -> None:
    from .toy import generate_toy_corpus, write_toy_corpus

    out = Path(args.out) if args.out else data_dir()
    corpus = generate_toy_corpus(args.paired, args.raw, args.templates, args.seed,
                                 n_heldout=args.heldout, n_valid=args.valid, raw_templates=args.raw_templates)
    paths = write_toy_corpus(corpus, out)
    cfg = toy_config(seed=args.seed, train_paired=paths["train_paired"].name, train_raw=paths["train_raw"].name,
                     valid_paired=paths["valid_paired"].name, valid_raw=paths["valid_raw"].name,
                     out_dir="run")
    cfg.dump(out / "toy.toml")
    log.info("wrote toy corpus (%d paired, %d raw, %d templates) to %s", args.paired, args.raw,
             args.templates, out)


def cmd_prepare(args) -> None:
    paired = read_paired(_existing(args.paired, "paired file"))
    raw = read_raw(_existing(args.raw, "raw file")) if args.raw else []
    data = build_dataset(paired, raw, min_count=args.min_count, max_len=args.max_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "vocab.json").write_text(json.dumps(data.vocab.to_json()) + "\n")
    (out / "fields.json").write_text(json.dumps(data.field_vocab.to_json()) + "\n")
    with open(out / "paired.ids.jsonl", "w") as fh:
        for line, ex in zip(paired, data.paired):
            fh.write(json.dumps({
                "fields": ex.record_fields, "positions": [r.position for r in ex.table.records],
                "values": ex.record_values, "tokens": ex.sentence, "template": ex.template,
                "delexicalized": " ".join(delexicalize(line.table, line.sentence[:args.max_len])),
            }) + "\n")
    with open(out / "raw.ids.jsonl", "w") as fh:
        for ex in data.raw:
            fh.write(json.dumps({"tokens": ex.sentence}) + "\n")
    log.info("vocabulary %d words, %d fields; %d paired, %d raw", len(data.vocab), len(data.field_vocab),
             len(data.paired), len(data.raw))


def load_train_config(args) -> TrainConfig:
    overrides = {"mode": args.mode, "seed": args.seed, "max_epochs": args.max_epochs, "out_dir": args.out,
                 "train_paired": args.train_paired, "train_raw": args.train_raw,
                 "valid_paired": args.valid_paired, "valid_raw": args.valid_raw}
    if args.config:
        cfg = TrainConfig.load(_existing(args.config, "config file"), **overrides)
    else:
        d = data_dir()
        defaults = {"train_paired": str(d / "train.paired.jsonl"), "train_raw": str(d / "train.raw.txt"),
                    "valid_paired": str(d / "valid.paired.jsonl"), "valid_raw": str(d / "valid.raw.txt")}
        defaults.update({k: v for k, v in overrides.items() if v is not None})
        cfg = PRESETS[args.preset](**defaults)
    return cfg


def portable_config(cfg: TrainConfig, out: Path) -> TrainConfig:
    """``cfg`` with file paths relative to the run directory ``out``.

    Saved runs then do not depend on where they were made, and the written
    config still loads, since relative paths resolve against its directory.
    """
    base = out.resolve()
    paths = {k: os.path.relpath(Path(v).resolve(), base)
             for k in ("train_paired", "train_raw", "valid_paired", "valid_raw") if (v := getattr(cfg, k))}
    return cfg.replace(out_dir=".", **paths)


def cmd_train(args) -> None:
    from .checkpoint import save_checkpoint
    from .trainer import fit

    cfg = load_train_config(args)
    paired = read_paired(_existing(cfg.train_paired, "train_paired"))
    raw = read_raw(_existing(cfg.train_raw, "train_raw")) if cfg.uses_raw else []
    data = build_dataset(paired, raw, min_count=cfg.min_count, max_len=cfg.max_len)
    valid = build_dataset(read_paired(_existing(cfg.valid_paired, "valid_paired")),
                          read_raw(_existing(cfg.valid_raw, "valid_raw")) if cfg.uses_raw and cfg.valid_raw else [],
                          max_len=cfg.max_len, vocab=data.vocab, field_vocab=data.field_vocab)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info("training %s: %d paired, %d raw, vocabulary %d", cfg.mode, len(data.paired), len(data.raw),
             len(data.vocab))
    ckpt = fit(data, valid.paired, valid.raw, cfg, log_dir=out)
    ckpt.config = portable_config(cfg, out)
    ckpt.config.dump(out / "config.toml")
    save_checkpoint(ckpt, out / "model.ckpt")
    log.info("best epoch %d (validation %.4f); checkpoint %s", ckpt.best_epoch, ckpt.best_score,
             out / "model.ckpt")


def _checkpoint(args):
    from .checkpoint import load_checkpoint

    return load_checkpoint(_existing(args.checkpoint, "checkpoint"))


def _test_lines(args):
    path = args.test or data_dir() / "test.paired.jsonl"
    lines = read_paired(_existing(path, "test file"))
    if args.limit:
        lines = lines[:args.limit]
    if not lines:
        raise UsageError(f"no examples in {path}")
    return lines


def _spec(args, n: int):
    from .sampling import DecodeSpec

    try:
        return DecodeSpec(args.strategy, temperature=args.temperature, beam_width=args.beam_width,
                          max_len=args.max_len, n=n, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_generate(args) -> None:
    from .sampling import generate_many, write_generations

    ckpt = _checkpoint(args)
    tables = [ln.table for ln in _test_lines(args)]
    spec = _spec(args, args.n)
    write_generations(args.out, tables, generate_many(tables, spec, ckpt), spec)
    log.info("wrote %d x %d outputs to %s", len(tables), args.n, args.out)


def cmd_evaluate(args) -> None:
    lines = _test_lines(args)
    refs = [[" ".join(r) for r in ln.references] for ln in lines]
    tables = [ln.table for ln in lines]
    if args.generations:
        with open(_existing(args.generations, "generations file"), encoding="utf-8") as fh:
            outputs = [json.loads(x)["outputs"] for x in fh if x.strip()]
        if len(outputs) != len(lines):
            raise UsageError(f"{len(outputs)} generated rows but {len(lines)} test examples")
    else:
        from .sampling import generate_many

        ckpt = _checkpoint(args)
        outputs = generate_many(tables, _spec(args, args.n), ckpt)
    report = evaluate_outputs(outputs, refs)
    write_report(args.out, [report])
    inventory = sorted({tuple(v) for t in tables for v in t.field_values().values()})
    acc = content_accuracy(tables, [o[0] for o in outputs], inventory)
    log.info("BLEU-4 %.2f  self-BLEU %s  ROUGE-L %.2f  content accuracy %.1f%%", report.bleu4,
             "n/a" if report.self_bleu is None else f"{report.self_bleu:.2f}", report.rouge_l, acc)


def cmd_sweep(args) -> None:
    ckpt = _checkpoint(args)
    lines = _test_lines(args)
    refs = [[" ".join(r) for r in ln.references] for ln in lines]
    taus = args.taus or list(DEFAULT_TAUS)
    if any(t <= 0 for t in taus):
        raise UsageError("temperatures must be positive")
    rows = tradeoff_sweep(ckpt, [ln.table for ln in lines], refs, taus, args.n_per_table, args.seed,
                          args.max_len)
    write_report(args.out, rows)
    log.info("wrote %d sweep rows to %s", len(rows), args.out)


# -- parser ----------------------------------------------------------------

def _decode_flags(p, n_default: int = 5):
    p.add_argument("--checkpoint", required=True, help="checkpoint written by `train`")
    p.add_argument("--test", help="paired JSONL with tables (default: $VTM_DATA_DIR/test.paired.jsonl)")
    p.add_argument("--limit", type=int, default=0, help="use only the first N test tables")
    p.add_argument("--strategy", choices=("greedy", "temperature", "beam"), default="greedy")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("-n", type=int, default=n_default, help="outputs per table")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vtm", description="Variational template machine for table-to-text.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("make-toy", help="write a synthetic corpus with known templates")
    p.add_argument("--paired", type=int, default=1000)
    p.add_argument("--raw", type=int, default=10000)
    p.add_argument("--templates", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--heldout", type=int, default=200)
    p.add_argument("--valid", type=int, default=200)
    p.add_argument("--raw-templates", choices=("same", "superset", "disjoint"), default="superset")
    p.add_argument("--out", help="output directory (default: $VTM_DATA_DIR)")
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("prepare", help="tokenize, delexicalize and index a corpus")
    p.add_argument("--paired", required=True)
    p.add_argument("--raw")
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--max-len", type=int, default=60)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", help="flat TOML config; flags below override it")
    p.add_argument("--preset", choices=sorted(PRESETS), default="toy",
                   help="built-in defaults when no --config is given")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--out", help="output directory (config key out_dir)")
    p.add_argument("--train-paired")
    p.add_argument("--train-raw")
    p.add_argument("--valid-paired")
    p.add_argument("--valid-raw")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode sentences for test tables")
    _decode_flags(p)
    p.add_argument("--out", required=True, help="output JSONL")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="BLEU-4 / self-BLEU / ROUGE-L report")
    p.add_argument("--checkpoint", help="decode with this checkpoint")
    p.add_argument("--generations", help="score an existing generation file instead")
    p.add_argument("--test")
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--strategy", choices=("greedy", "temperature", "beam"), default="greedy")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("-n", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="quality/diversity trade-off over temperatures")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test")
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--taus", type=float, nargs="+", help=f"default: {' '.join(map(str, DEFAULT_TAUS))}")
    p.add_argument("--n-per-table", type=int, default=5)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="sweep CSV")
    p.set_defaults(func=cmd_sweep)
    return ap


def run(argv: list[str] | None = None) -> int:
    from .trainer import TrainingDivergence

    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.command == "evaluate" and not (args.checkpoint or args.generations):
        print("vtm evaluate: one of --checkpoint or --generations is required", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except TrainingDivergence as exc:
        log.error("%s", exc)
        return 3
    except (UsageError, ConfigError, TableParseError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"vtm {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
