#!/usr/bin/env python3
"""Fast end-to-end sanity run: a 10-action corpus, five folds, toy model
dimensions.  Completes in well under two minutes and exercises every
pipeline stage (datagen, segmentation, training, scoring, reports)."""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from actioncap.datagen import gen_corpus, save_dataset
from actioncap.harness import ExperimentConfig, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/smoke")
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    dataset = os.path.join(args.out_dir, "corpus.jsonl")
    save_dataset(gen_corpus(n_actions=10, captions_per_action=6,
                            master_seed=9), dataset)

    cfg = ExperimentConfig(
        k=12, bpe_vocab=40, hidden=12, batch_size=16, max_epochs=3,
        patience=2, folds=5, seed=4, dataset=dataset, out_dir=args.out_dir)
    t0 = time.time()
    result = run_experiment(cfg)
    dt = time.time() - t0

    print(f"smoke run finished in {dt:.1f}s (config {result.config_hash})")
    for variant in cfg.variants:
        row = result.table[variant]
        print(f"{variant:<10} BLEU-2 {row[2]:6.2f}  BLEU-3 {row[3]:6.2f}  "
              f"BLEU-4 {row[4]:6.2f}")
    print(f"artifacts in {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
