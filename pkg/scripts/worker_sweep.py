#!/usr/bin/env python3
"""Dataset-size sweep: fed-central training on k of 10 shards.

Each repetition re-shards the training corpus with a fresh seed; reported F1
is the mean and standard deviation over repetitions per scheme.
"""

import argparse
import sys
from pathlib import Path

from pii_forge import experiments
from pii_forge.corpus import read_conll
from pii_forge.nereval import Scheme


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    fixtures = Path(__file__).resolve().parents[1] / "fixtures"
    parser.add_argument("--train", default=fixtures / "train.conll")
    parser.add_argument("--test", default=fixtures / "test.conll")
    parser.add_argument("--k-min", type=int, default=2)
    parser.add_argument("--k-max", type=int, default=10)
    parser.add_argument("--reps", type=int, default=10)
    parser.add_argument("--out", default="sweep.csv")
    args = parser.parse_args()

    result = experiments.worker_sweep(
        read_conll(args.train),
        read_conll(args.test),
        k_values=range(args.k_min, args.k_max + 1),
        repetitions=args.reps,
    )
    for row in result.rows:
        if row.scheme is Scheme.EXACT:
            print(f"k={row.n_workers:>2}: exact f1 {row.mean_f1:.4f} ± {row.std_f1:.4f}")
    result.write_csv(args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
