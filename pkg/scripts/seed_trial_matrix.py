#!/usr/bin/env python3
"""Verification matrix over independent seed trials.

Repeats the verification experiment for several global seeds and prints the
per-suspect confidence/decision table, mirroring the multi-trial protocol
used by the acceptance suite.

    python scripts/seed_trial_matrix.py --seeds 0 1 2 --out runs/matrix
"""

import argparse
import sys
from pathlib import Path

from ganguards.harness import ExperimentConfig, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--out", type=Path, default=Path("runs/matrix"))
    args = parser.parse_args()

    results = {}
    for seed in args.seeds:
        config = ExperimentConfig(kind="verification", seed=seed,
                                  out_dir=str(args.out / f"seed{seed}"))
        record = run_experiment(config)
        results[seed] = {n: (r.confidence_score, r.decision)
                         for n, r in record.reports.items()}
        print(f"seed {seed} done", flush=True)

    names = list(next(iter(results.values())))
    print(f"\n{'suspect':12s} " + " ".join(f"seed{s:<8d}" for s in args.seeds))
    for name in names:
        cells = " ".join(f"{results[s][name][0]:.3f}/{results[s][name][1]}   "
                         for s in args.seeds)
        print(f"{name:12s} {cells}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
