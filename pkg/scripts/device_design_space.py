#!/usr/bin/env python3
"""Map the stuck-defect logical deviations over (n_bit, g_tr/g_LRS).

Reproduces the device design-space contours: the failed-open deviation
shrinks with larger transistor conductance while the failed-short deviation
grows, so the transistor bias wants to sit near the LRS conductance.
"""

import argparse

from xbarlab.harness import ExperimentSpec, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/device_design_space")
    ap.add_argument("--n-bits", type=int, nargs="+", default=[2, 3, 4, 5, 6, 7, 8])
    ap.add_argument("--n-ratios", type=int, default=41,
                    help="log-spaced g_tr/g_LRS points in [0.1, 100]")
    ap.add_argument("--lrs-hrs-ratio", type=float, default=10.0)
    ap.add_argument("--n-convention", choices=["full", "half"], default="full",
                    help="states per cell: 2**n_bit or 2**(n_bit-1)")
    args = ap.parse_args()

    spec = ExperimentSpec(kind="device_sweep", out=args.out, params={
        "n_bits": args.n_bits,
        "n_ratios": args.n_ratios,
        "lrs_hrs_ratio": args.lrs_hrs_ratio,
        "n_convention": args.n_convention,
    })
    result = run_experiment(spec)
    print(f"wrote {len(result.rows)} grid points to {args.out}/results.csv")


if __name__ == "__main__":
    main()
