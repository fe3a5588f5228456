"""Quality/diversity curves: temperature sweep for trained checkpoints.

Writes one CSV per checkpoint with a row per temperature (BLEU-4 of the first
sample, self-BLEU of the samples for each table).

    python3 scripts/tradeoff_sweep.py runs/compare/vtm-0/model.ckpt runs/compare/table2seq-0/model.ckpt
"""
import argparse
from pathlib import Path

from vtm.checkpoint import load_checkpoint
from vtm.metrics import DEFAULT_TAUS, tradeoff_sweep, write_report
from vtm.toy import generate_toy_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoints", nargs="+")
    ap.add_argument("--taus", type=float, nargs="+", default=list(DEFAULT_TAUS))
    ap.add_argument("--n-per-table", type=int, default=5)
    ap.add_argument("--tables", type=int, default=200, help="held-out tables to score")
    ap.add_argument("--corpus-seed", type=int, default=0)
    args = ap.parse_args(argv)

    held = generate_toy_corpus(1000, 10_000, 8, seed=args.corpus_seed).heldout[:args.tables]
    tables, refs = [e.table for e in held], [e.references for e in held]
    for path in map(Path, args.checkpoints):
        ck = load_checkpoint(path)
        rows = tradeoff_sweep(ck, tables, refs, args.taus, args.n_per_table)
        write_report(path.with_name("sweep.csv"), rows)
        print(f"{path} ({ck.config.mode})")
        for r in rows:
            print(f"  tau {r.tau:<4g} BLEU {r.bleu4:6.2f}  self-BLEU {r.self_bleu:6.2f}")


if __name__ == "__main__":
    main()
