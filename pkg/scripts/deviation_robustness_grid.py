#!/usr/bin/env python3
"""Inference error vs the stuck-cell deviation magnitudes.

Grids delta-w_FF x delta-w_OF in quantization-step units at a fixed failure
probability and reports the relative error increase against the (0, 0) cell
in both percentage points (rel_pp) and as a ratio (rel_ratio).
"""

import argparse
from pathlib import Path

from xbarlab.harness import ExperimentSpec, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("checkpoints", nargs="+", help="model.npz paths")
    ap.add_argument("--out", default="runs/deviation_grid")
    ap.add_argument("--p", type=float, default=0.02)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.0, 1.0, 2.0, 3.0],
                    help="deviations in units of the weight quantization step")
    ap.add_argument("--n-bits", type=int, default=4)
    ap.add_argument("--n-configs", type=int, default=15)
    ap.add_argument("--dataset", choices=["mnist", "synthetic"], default="synthetic")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dw = 2.0 / (2 ** args.n_bits - 1)
    devs = [s * dw for s in args.steps]
    for ckpt in args.checkpoints:
        name = Path(ckpt).parent.name or Path(ckpt).stem
        spec = ExperimentSpec(kind="dw_grid", seed=args.seed,
                              out=str(Path(args.out) / name), params={
            "checkpoint": ckpt, "dataset": args.dataset, "mnist_dir": args.mnist_dir,
            "p": args.p, "dw_ff": devs, "dw_of": devs, "n_configs": args.n_configs,
        })
        result = run_experiment(spec)
        print(f"{name}: base mean error {result.raw['base_mean']:.4f}; rel_pp grid:")
        for i, dev_ff in enumerate(devs):
            row = result.rows[i * len(devs):(i + 1) * len(devs)]
            print(f"  dw_ff={args.steps[i]:g}dw: "
                  + " ".join(f"{r[3]:+6.2f}" for r in row))


if __name__ == "__main__":
    main()
