#!/usr/bin/env python3
"""Run the complete desk-scale evaluation matrix for one seed.

Executes every experiment kind (verification, obfuscations, fine-tuning,
cross-architecture extraction, extraction generations, sample-count sweep,
both adaptive attacks) against one procedurally generated dataset. Trained
artifacts land in the shared cache, so re-runs and sibling experiments are
cheap.

    python scripts/run_full_evaluation.py --seed 0 --out runs/seed0
    python scripts/run_full_evaluation.py --quick   # micro smoke run
"""

import argparse
import sys
import time
from pathlib import Path

from ganguards.harness import (ClassifierParams, DatasetConfig, ExperimentConfig,
                               GanParams, run_experiment, EXPERIMENT_KINDS)


def build_config(kind: str, seed: int, out_root: Path, quick: bool) -> ExperimentConfig:
    if quick:
        return ExperimentConfig(
            kind=kind, seed=seed, m=16, n_query=64, n=32,
            dataset=DatasetConfig(count=96, resolution=16),
            gan=GanParams(steps=4, batch_size=32, snapshot_every=2),
            classifier=ClassifierParams(epochs=1, fresh_check_per_class=16),
            generations=2, m_grid=[4, 8, 16], sweep_pool=64,
            out_dir=str(out_root / kind),
        )
    return ExperimentConfig(kind=kind, seed=seed, out_dir=str(out_root / kind))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("runs"))
    parser.add_argument("--quick", action="store_true", help="micro-scale smoke run")
    parser.add_argument("--kinds", nargs="*", default=list(EXPERIMENT_KINDS))
    args = parser.parse_args()

    out_root = args.out / f"seed{args.seed}"
    for kind in args.kinds:
        config = build_config(kind, args.seed, out_root, args.quick)
        print(f"=== {kind} (seed {args.seed}) ===", flush=True)
        start = time.time()
        record = run_experiment(config)
        print(f"    done in {time.time() - start:.0f}s -> {config.out_dir}")
        for name, report in record.reports.items():
            verdict = "STOLEN" if report.decision else "honest"
            print(f"    {name:24s} confidence {report.confidence_score:.3f}  {verdict}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
