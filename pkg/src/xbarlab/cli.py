"""Command-line entry points for the experiment harness.

Each subcommand takes an optional JSON spec file plus flag overrides and
writes results.csv / raw.json / spec.json under --out.  Failures exit
nonzero with a one-line machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ExperimentSpec, run_experiment

_KIND_BY_COMMAND = {
    "device-sweep": "device_sweep",
    "table-mc": "table_mc",
    "train": "train",
    "eval-sweep": "eval_sweep",
    "dw-grid": "dw_grid",
    "gaussian-study": "gaussian_study",
}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--spec", help="JSON experiment spec file")
    sub.add_argument("--seed", type=int, help="base seed override")
    sub.add_argument("--out", help="output directory (results.csv, raw.json, spec.json)")
    sub.add_argument("--n-configs", type=int, help="defect configurations per point")
    sub.add_argument("--p", type=float, help="total failure probability p = p_OF + p_FF")
    sub.add_argument("--strategy", choices=["A", "B"], help="forming strategy")
    sub.add_argument("--defect-mode", choices=["none", "p1_only", "p0_only", "combined",
                                               "distribution"])
    sub.add_argument("--dataset", choices=["mnist", "synthetic"])
    sub.add_argument("--mnist-dir", help="directory with the four IDX files")
    sub.add_argument("--checkpoint", help="model checkpoint path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbarlab",
        description="crossbar forming-failure laboratory: device sweeps, outcome-table "
                    "Monte Carlo, defect-aware training, and inference studies",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("device-sweep", help="deviation design-space grid over n_bit and g_tr")
    _add_common(sub)
    sub.add_argument("--n-bits", type=int, nargs="+")
    sub.add_argument("--gtr-ratios", type=float, nargs="+")
    sub.add_argument("--lrs-hrs-ratio", type=float)
    sub.add_argument("--n-convention", choices=["full", "half"])
    sub.add_argument("--g-lrs", type=float,
                     help="absolute LRS conductance (any unit; normalized to g_hrs)")
    sub.add_argument("--g-hrs", type=float, help="absolute HRS conductance")
    sub.add_argument("--g-of", type=float, help="absolute overformed conductance")

    sub = subs.add_parser("table-mc", help="empirical vs analytic forming-outcome rates")
    _add_common(sub)
    sub.add_argument("--p-ff", type=float)
    sub.add_argument("--p-of", type=float)
    sub.add_argument("--n-samples", type=int)

    sub = subs.add_parser("train", help="train the surrogate model (baseline or defect-aware)")
    _add_common(sub)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--train-limit", type=int)
    sub.add_argument("--test-limit", type=int)

    sub = subs.add_parser("eval-sweep", help="inference error vs defect probability")
    _add_common(sub)
    sub.add_argument("--probabilities", type=float, nargs="+")
    sub.add_argument("--dev-ff", type=float)
    sub.add_argument("--dev-of", type=float)

    sub = subs.add_parser("dw-grid", help="inference error vs deviation magnitudes")
    _add_common(sub)
    sub.add_argument("--dw-ff", type=float, nargs="+")
    sub.add_argument("--dw-of", type=float, nargs="+")

    sub = subs.add_parser("gaussian-study", help="yield study under a defect-rate distribution")
    _add_common(sub)
    sub.add_argument("--checkpoints", nargs="+", metavar="NAME=PATH")
    sub.add_argument("--n-trials", type=int)
    sub.add_argument("--mu", type=float, help="per-mechanism mean defect probability")
    sub.add_argument("--sigma", type=float, help="per-mechanism std of defect probability")

    return parser


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    kind = _KIND_BY_COMMAND[args.command]
    params: dict = {}
    seed = 0
    out = None
    if args.spec:
        obj = json.loads(Path(args.spec).read_text())
        if obj.get("kind", kind) != kind:
            raise ValueError(f"spec kind {obj.get('kind')!r} does not match command {kind!r}")
        params = dict(obj.get("params", {}))
        seed = obj.get("seed", 0)
        out = obj.get("out")

    def override(key, value):
        if value is not None:
            params[key] = value

    override("n_configs", getattr(args, "n_configs", None))
    override("strategy", args.strategy)
    override("defect_mode", getattr(args, "defect_mode", None))
    override("dataset", args.dataset)
    override("mnist_dir", getattr(args, "mnist_dir", None))
    override("checkpoint", getattr(args, "checkpoint", None))
    override("p", getattr(args, "p", None))
    if args.command == "device-sweep":
        override("n_bits", args.n_bits)
        override("gtr_ratios", args.gtr_ratios)
        override("lrs_hrs_ratio", args.lrs_hrs_ratio)
        override("n_convention", args.n_convention)
        # absolute conductances (any unit) normalize to ratios internally
        if args.g_lrs is not None and args.g_hrs is not None:
            params["lrs_hrs_ratio"] = args.g_lrs / args.g_hrs
            if args.g_of is not None:
                params["of_lrs_ratio"] = args.g_of / args.g_lrs
    elif args.command == "table-mc":
        override("p_ff", args.p_ff)
        override("p_of", args.p_of)
        override("n_samples", args.n_samples)
        if "p_ff" not in params and "p" in params:
            params["p_ff"] = params["p"] / 2
            params["p_of"] = params["p"] / 2
    elif args.command == "train":
        override("epochs", args.epochs)
        override("batch_size", args.batch_size)
        override("train_limit", args.train_limit)
        override("test_limit", args.test_limit)
    elif args.command == "eval-sweep":
        override("probabilities", args.probabilities)
        override("dev_ff", args.dev_ff)
        override("dev_of", args.dev_of)
    elif args.command == "dw-grid":
        override("dw_ff", args.dw_ff)
        override("dw_of", args.dw_of)
    elif args.command == "gaussian-study":
        override("n_trials", args.n_trials)
        if args.checkpoints:
            params["checkpoints"] = dict(item.split("=", 1) for item in args.checkpoints)
        if args.mu is not None or args.sigma is not None:
            g = params.get("gauss", {"mu_ff": 0.015, "sigma_ff": 0.005,
                                     "mu_of": 0.015, "sigma_of": 0.005})
            if args.mu is not None:
                g["mu_ff"] = g["mu_of"] = args.mu
            if args.sigma is not None:
                g["sigma_ff"] = g["sigma_of"] = args.sigma
            params["gauss"] = g

    if args.seed is not None:
        seed = args.seed
    if args.out is not None:
        out = args.out
    return ExperimentSpec(kind=kind, params=params, seed=seed, out=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        result = run_experiment(spec)
    except Exception as exc:  # CLI boundary: report, do not traceback
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 2
    summary = {
        "kind": spec.kind,
        "provenance_hash": spec.provenance_hash(),
        "rows": len(result.rows),
        "runtime_s": round(result.runtime, 3),
    }
    if spec.out:
        summary["out"] = str(spec.out)
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
