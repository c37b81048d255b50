"""Command-line entry point: ``histlayer <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from histlayer.experiment import (ExperimentConfig, evaluate_checkpoints, merge_reports,
                                  run_experiment)
from histlayer.gradcheck import finite_diff_check
from histlayer.model import ModelSpec, Variant, build_model
from histlayer.synthtex import generate_dataset, to_arrays, write_dataset


class CLIError(Exception):
    pass


def _config(args):
    if not args.config:
        raise CLIError(f"{args.command} requires --config FILE")
    return ExperimentConfig.from_file(args.config)


def cmd_gen_data(args):
    samples, manifest = generate_dataset(args.size, args.seed)
    write_dataset(samples, manifest, args.out)
    print(f"wrote {len(samples)} images of size {args.size}x{args.size} to {args.out}")


def cmd_train(args):
    cfg = _config(args)
    report = run_experiment(cfg, out_dir=args.out)
    print(f"{cfg.name}: {report.mean_acc:.2f} +/- {report.std_acc:.2f}% "
          f"(seeds {report.seeds}: {', '.join(f'{a:.2f}' for a in report.per_seed_acc)})")


def cmd_eval(args):
    cfg = _config(args)
    report = evaluate_checkpoints(cfg, args.out)
    path = Path(args.out) / f"{cfg.name}_eval.json"
    path.write_text(json.dumps(report.to_dict(), indent=2))
    print(f"{cfg.name}: test accuracy {report.mean_acc:.2f} +/- {report.std_acc:.2f}%")


def cmd_fdr(args):
    cfg = _config(args)
    report = evaluate_checkpoints(cfg, args.out)
    path = Path(args.out) / f"{cfg.name}_fdr.json"
    path.write_text(json.dumps(report.log_fdr, indent=2))
    for cls, value in report.log_fdr["mean"].items():
        print(f"class {cls}: log-FDR {value:.4f}")


def cmd_gradcheck(args):
    samples, _ = generate_dataset(args.size, args.seed)
    x, y = to_arrays(samples, "train")
    idx = np.random.default_rng(args.seed).choice(len(y), args.batch, replace=False)
    ok = True
    results = {}
    for variant in Variant:
        model = build_model(ModelSpec(variant=variant), args.seed)
        jitter = np.random.default_rng([args.seed, 9])
        # move off the equispaced init so no bin sits exactly on a data value
        model.params = {k: v + jitter.normal(0, 0.05, v.shape) for k, v in model.params.items()}
        report = finite_diff_check(model, (x[idx], y[idx]), step=args.step, tol=args.tol)
        results[variant.value] = report.errors
        print(f"[{variant.value}] {'PASS' if report.passed else 'FAIL'}")
        for line in report.lines():
            print("  " + line)
        ok &= report.passed
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "gradcheck.json").write_text(json.dumps(results, indent=2))
    return 0 if ok else 1


def cmd_report(args):
    summary = merge_reports(args.out)
    (Path(args.out) / "report.json").write_text(json.dumps(summary, indent=2))
    for name, e in summary["experiments"].items():
        print(f"{name:40s} {e['mean_acc']:6.2f} +/- {e['std_acc']:5.2f}%")


def build_parser():
    parser = argparse.ArgumentParser(prog="histlayer",
                                     description="Learnable histogram layer experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic texture dataset")
    p.add_argument("--size", type=int, choices=(3, 7), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    for name, func, help_ in (("train", cmd_train, "train every seed of an experiment"),
                              ("eval", cmd_eval, "re-test saved checkpoints"),
                              ("fdr", cmd_fdr, "per-class log-FDR of test features")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference check of all model variants")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=7)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="merge per-seed CSVs into report.json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args) or 0
    except (CLIError, ValueError, OSError) as exc:
        print(f"histlayer {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
