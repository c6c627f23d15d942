#!/usr/bin/env python3
"""Paired fed-remote runs: 8-bit quantized transfers vs lossless.

Trains the same federated scenario twice per seed, differing only in the
transfer channel, and reports per-seed exact F1 and mean training loss plus
the direction summary.
"""

import argparse
import csv
import statistics
import sys
from pathlib import Path

from pii_forge import experiments
from pii_forge.corpus import read_conll


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    fixtures = Path(__file__).resolve().parents[1] / "fixtures"
    parser.add_argument("--train", default=fixtures / "train.conll")
    parser.add_argument("--test", default=fixtures / "test.conll")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--workers", type=int, default=experiments.COMPRESSION_WORKERS)
    parser.add_argument("--out", help="optional per-seed CSV")
    args = parser.parse_args()

    train = read_conll(args.train)
    test = read_conll(args.test)
    outcome = experiments.compression_comparison(
        train, test, n_seeds=args.seeds, n_workers=args.workers
    )

    print(f"{'seed':>4} {'f1_none':>8} {'f1_8bit':>8} {'loss_none':>10} {'loss_8bit':>10}")
    for i, seed in enumerate(outcome.seeds):
        print(
            f"{seed:>4} {outcome.f1_none[i]:>8.4f} {outcome.f1_quantized[i]:>8.4f} "
            f"{outcome.loss_none[i]:>10.5f} {outcome.loss_quantized[i]:>10.5f}"
        )
    print(
        f"mean exact F1: none {statistics.mean(outcome.f1_none):.4f} -> "
        f"8-bit {statistics.mean(outcome.f1_quantized):.4f} "
        f"(delta {outcome.mean_f1_delta():+.4f})"
    )
    print(
        f"mean loss: none {statistics.mean(outcome.loss_none):.5f} -> "
        f"8-bit {statistics.mean(outcome.loss_quantized):.5f} "
        f"(delta {outcome.mean_loss_delta():+.5f})"
    )
    print(
        f"per-seed consistency: loss elevated {outcome.loss_sign_consistency()}/{args.seeds}, "
        f"f1 not improved {outcome.f1_sign_consistency()}/{args.seeds}"
    )

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "f1_none", "f1_8bit", "loss_none", "loss_8bit"])
            for i, seed in enumerate(outcome.seeds):
                writer.writerow(
                    [
                        seed,
                        f"{outcome.f1_none[i]:.6f}",
                        f"{outcome.f1_quantized[i]:.6f}",
                        f"{outcome.loss_none[i]:.6f}",
                        f"{outcome.loss_quantized[i]:.6f}",
                    ]
                )
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
