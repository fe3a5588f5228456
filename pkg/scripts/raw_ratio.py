"""Diversity as a function of the amount of raw text.

Trains VTM with the paired set fixed at 1k and 0, 500, 1k, 2.5k, 5k or 10k raw
sentences (0 means VTM-noraw), then reports self-BLEU and BLEU of five z
samples per held-out table.

    python3 scripts/raw_ratio.py --out runs/raw_ratio
"""
import argparse
import csv
import logging
import sys
from pathlib import Path

from vtm.config import toy_config
from vtm.metrics import bleu4, self_bleu
from vtm.sampling import DecodeSpec, generate_many
from vtm.toy import generate_toy_corpus, toy_datasets
from vtm.trainer import fit


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/raw_ratio")
    ap.add_argument("--raw", type=int, nargs="+", default=[0, 500, 1000, 2500, 5000, 10_000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(message)s")

    corpus = generate_toy_corpus(1000, max(args.raw), 8, seed=0)
    tables = [e.table for e in corpus.heldout]
    refs = [e.references for e in corpus.heldout]
    full_raw = corpus.raw
    rows = []
    for n_raw in args.raw:
        corpus.raw = full_raw[:n_raw]
        cfg = toy_config(mode="vtm" if n_raw else "vtm-noraw", seed=args.seed)
        data, valid = toy_datasets(corpus)
        ck = fit(data, valid.paired, valid.raw if cfg.uses_raw else [], cfg)
        outs = generate_many(tables, DecodeSpec("greedy", n=5, seed=0), ck)
        rows.append({"n_raw": n_raw, "bleu4": bleu4([o[0] for o in outs], refs),
                     "self_bleu": sum(self_bleu(o) for o in outs) / len(outs)})
        print("raw {n_raw:6d}  BLEU {bleu4:6.2f}  self-BLEU {self_bleu:6.2f}".format(**rows[-1]), flush=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "raw_ratio.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
