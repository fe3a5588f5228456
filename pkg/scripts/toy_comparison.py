"""Train VTM, VTM-noraw and Table2seq on the toy corpus and compare quality and diversity.

VTM outputs are five z samples per table decoded greedily; Table2seq outputs
are the results of beam widths 1 to 5. Checkpoints go under --out so a second
run only re-scores.

    python3 scripts/toy_comparison.py --out runs/compare --seeds 0 1 2
"""
import argparse
import csv
import logging
import sys
from pathlib import Path

from vtm.checkpoint import load_checkpoint, save_checkpoint
from vtm.config import toy_config
from vtm.metrics import bleu4, content_accuracy, rouge_l_f, self_bleu
from vtm.sampling import DecodeSpec, generate_many
from vtm.toy import generate_toy_corpus, toy_datasets
from vtm.trainer import fit

MODES = ("vtm", "vtm-noraw", "table2seq")


def train_or_load(path: Path, data, valid, mode: str, seed: int):
    if path.is_file():
        return load_checkpoint(path)
    cfg = toy_config(mode=mode, seed=seed)
    ck = fit(data, valid.paired, valid.raw if cfg.uses_raw else [], cfg, log_dir=path.parent)
    save_checkpoint(ck, path)
    return ck


def score(ck, tables, refs):
    if ck.config.mode == "table2seq":
        outs = generate_many(tables, DecodeSpec("beam", n=5, beam_width=5), ck)
    else:
        outs = generate_many(tables, DecodeSpec("greedy", n=5, seed=0), ck)
    firsts = [o[0] for o in outs]
    inventory = sorted({tuple(v) for t in tables for v in t.field_values().values()})
    return {"bleu4": bleu4(firsts, refs), "self_bleu": sum(self_bleu(o) for o in outs) / len(outs),
            "rouge_l": rouge_l_f(firsts, refs), "content_acc": content_accuracy(tables, firsts, inventory)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    ap.add_argument("--corpus-seed", type=int, default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(message)s")

    corpus = generate_toy_corpus(1000, 10_000, 8, seed=args.corpus_seed)
    data, valid = toy_datasets(corpus)
    tables = [e.table for e in corpus.heldout]
    refs = [e.references for e in corpus.heldout]
    out = Path(args.out)
    rows = []
    for mode in args.modes:
        for seed in args.seeds:
            ck = train_or_load(out / f"{mode}-{seed}" / "model.ckpt", data, valid, mode, seed)
            rows.append({"mode": mode, "seed": seed, "best_epoch": ck.best_epoch, **score(ck, tables, refs)})
            print("{mode:10s} seed {seed}  BLEU {bleu4:6.2f}  self-BLEU {self_bleu:6.2f}  ROUGE-L {rouge_l:6.2f}  "
                  "content {content_acc:5.1f}%".format(**rows[-1]), flush=True)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
