#!/usr/bin/env python3
"""Train the model zoo the inference studies evaluate.

baseline        no defects during training
da_p1/p3/p5     defect-aware at fixed total failure probability 1% / 3% / 5%
da_p2           defect-aware at 2% (the robustness-grid subject)
dist_aware      per-step failure probabilities drawn from the process Gaussian
"""

import argparse
import json
from pathlib import Path

from xbarlab.harness import ExperimentSpec, run_experiment

ZOO = {
    "baseline": {"defect_mode": "none"},
    "da_p1": {"defect_mode": "combined", "p": 0.01},
    "da_p2": {"defect_mode": "combined", "p": 0.02},
    "da_p3": {"defect_mode": "combined", "p": 0.03},
    "da_p5": {"defect_mode": "combined", "p": 0.05},
    "dist_aware": {"defect_mode": "distribution",
                   "gauss": {"mu_ff": 0.015, "sigma_ff": 0.005,
                             "mu_of": 0.015, "sigma_of": 0.005}},
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/zoo")
    ap.add_argument("--dataset", choices=["mnist", "synthetic"], default="synthetic")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--epochs", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="+", choices=sorted(ZOO), help="train a subset")
    args = ap.parse_args()

    out_root = Path(args.out)
    manifest = {}
    for name, defect_params in ZOO.items():
        if args.only and name not in args.only:
            continue
        params = {
            "dataset": args.dataset, "mnist_dir": args.mnist_dir,
            "epochs": args.epochs, **defect_params,
        }
        spec = ExperimentSpec(kind="train", seed=args.seed, out=str(out_root / name),
                              params=params)
        result = run_experiment(spec)
        last = result.raw["history"][-1]
        manifest[name] = str(out_root / name / "model.npz")
        print(f"{name}: test_error={last.get('test_error'):.4f} "
              f"({result.runtime:.0f}s)")
    (out_root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"manifest: {out_root / 'manifest.json'}")


if __name__ == "__main__":
    main()
