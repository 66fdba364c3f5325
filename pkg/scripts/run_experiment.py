#!/usr/bin/env python3
"""Run the model-comparison experiment on a prepared interaction log.

Fits every requested model family with student-level k-fold cross-validation
and prints the AUC/NLL/ACC table. Defaults to the bundled fixture so the
script runs out of the box:

    python3 scripts/run_experiment.py
    python3 scripts/run_experiment.py --data my_prepared.csv \
        --models irt,pfa,das3h --folds 5 --l2 1e-5 --out results/
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from skillmem.corpus import load_prepared
from skillmem.encoder import ModelSpec
from skillmem.evaluation import cross_validate
from skillmem.glm import FitConfig

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "data",
                       "fixture_small.csv")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default=FIXTURE,
                    help="prepared interaction CSV (default: bundled fixture)")
    ap.add_argument("--models",
                    default="irt,afm,pfa,dash_items,dash_kc,das3h,das3h_1p",
                    help="comma-separated model families")
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--l2", type=float, default=1e-5)
    ap.add_argument("--out", default=None,
                    help="optional directory for metrics.json")
    args = ap.parse_args()

    dataset = load_prepared(args.data)
    specs = [ModelSpec(fam.strip(), 0) for fam in args.models.split(",")]
    table = cross_validate(dataset, specs, k=args.folds, seed=args.seed,
                           glm_config=FitConfig(l2_strength=args.l2))
    print(table.format_table())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "metrics.json")
        with open(path, "w") as fh:
            fh.write(table.to_json())
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
