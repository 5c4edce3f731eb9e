#!/usr/bin/env python3
"""Inference error vs defect probability for one or more checkpoints.

Sweeps stuck-at-+-1 only, stuck-at-0 only, or the combined forming model
(worst case p_OF = p_FF = p/2) and writes box statistics per probability.
"""

import argparse
from pathlib import Path

from xbarlab.harness import ExperimentSpec, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("checkpoints", nargs="+", help="model.npz paths")
    ap.add_argument("--out", default="runs/defect_sweep")
    ap.add_argument("--defect-kind", choices=["p1_only", "p0_only", "combined"],
                    default="combined")
    ap.add_argument("--probabilities", type=float, nargs="+",
                    default=[0.0, 0.002, 0.005, 0.01, 0.02, 0.03, 0.05])
    ap.add_argument("--n-configs", type=int, default=50)
    ap.add_argument("--dataset", choices=["mnist", "synthetic"], default="synthetic")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--strategy", choices=["A", "B"], default="B")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for ckpt in args.checkpoints:
        name = Path(ckpt).parent.name or Path(ckpt).stem
        spec = ExperimentSpec(kind="eval_sweep", seed=args.seed,
                              out=str(Path(args.out) / name), params={
            "checkpoint": ckpt, "dataset": args.dataset, "mnist_dir": args.mnist_dir,
            "defect_kind": args.defect_kind, "probabilities": args.probabilities,
            "n_configs": args.n_configs, "strategy": args.strategy,
        })
        result = run_experiment(spec)
        print(f"{name} ({args.defect_kind}):")
        for row in result.rows:
            print(f"  p={row[0]:<8g} mean={row[1]:.4f} std={row[2]:.4f} "
                  f"median={row[5]:.4f}")


if __name__ == "__main__":
    main()
