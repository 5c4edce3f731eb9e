#!/usr/bin/env python3
"""Yield study: inference-error statistics under a defect-rate distribution.

Each trial draws (p_FF, p_OF) from the process Gaussian, builds one defect
configuration, and evaluates every model on it -- the per-model mean and
standard deviation say which training strategy tolerates process variation
best.
"""

import argparse
import json
from pathlib import Path

from xbarlab.harness import ExperimentSpec, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--manifest", default="runs/zoo/manifest.json",
                    help="name -> checkpoint map (train_model_zoo.py output)")
    ap.add_argument("--out", default="runs/yield_study")
    ap.add_argument("--n-trials", type=int, default=500)
    ap.add_argument("--mu", type=float, default=0.015)
    ap.add_argument("--sigma", type=float, default=0.005)
    ap.add_argument("--dataset", choices=["mnist", "synthetic"], default="synthetic")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    checkpoints = json.loads(Path(args.manifest).read_text())
    spec = ExperimentSpec(kind="gaussian_study", seed=args.seed, out=args.out, params={
        "checkpoints": checkpoints, "dataset": args.dataset, "mnist_dir": args.mnist_dir,
        "n_trials": args.n_trials,
        "gauss": {"mu_ff": args.mu, "sigma_ff": args.sigma,
                  "mu_of": args.mu, "sigma_of": args.sigma},
    })
    result = run_experiment(spec)
    print(f"{args.n_trials} trials, total p ~ N({2 * args.mu:.3f}, {args.sigma * 2 ** 0.5:.4f}):")
    for row in sorted(result.rows, key=lambda r: r[1]):
        print(f"  {row[0]:<12} mean={row[1]:.4f} std={row[2]:.4f}")


if __name__ == "__main__":
    main()
