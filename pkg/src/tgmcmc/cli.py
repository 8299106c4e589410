"""Command line entry point: ``tgmcmc {generate,run,summarize,oracle}``."""
from __future__ import annotations

import argparse
import csv
import glob
import logging
import os
import re
import sys

from . import data as datamod
from .diagnostics import SUMMARY_COLUMNS, read_trace, summarize, write_summary_csv
from .errors import ConfigError, DomainError, ModelConfigError, ParseError
from .experiment import build_model, build_prior, load_config, run_experiment
from .oracle import exact_posterior

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_generate(args):
    if args.kind == "gaussian":
        X, labels = datamod.gen_gaussian_mixture(args.k, args.n, args.d, args.separation,
                                                 args.seed)
    else:
        X, labels = datamod.gen_py_mixture(args.n, args.d, args.theta, args.discount,
                                           args.separation, args.seed)
    labels_out = args.labels_out or os.path.splitext(args.out)[0] + "_labels.csv"
    datamod.write_dense_csv(args.out, X, labels, labels_out)
    print(f"wrote {X.shape[0]} points to {args.out} and labels to {labels_out}")


def _cmd_run(args):
    cfg = load_config(args.config)
    cfg.base_seed = args.seed
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.repeats is not None:
        cfg.repeats = args.repeats
    if args.workers is not None:
        cfg.workers = args.workers
    if args.budget_seconds is not None or args.budget_iterations is not None:
        cfg.budget = {}
        if args.budget_seconds is not None:
            cfg.budget["seconds"] = args.budget_seconds
        if args.budget_iterations is not None:
            cfg.budget["iterations"] = args.budget_iterations
    _, rows = run_experiment(cfg)
    _print_rows(rows)


def _print_rows(rows):
    w = csv.DictWriter(sys.stdout, fieldnames=SUMMARY_COLUMNS)
    w.writeheader()
    for row in rows:
        w.writerow(row)


def _cmd_summarize(args):
    runs = {}
    for path in sorted(glob.glob(os.path.join(args.traces, "trace_*.jsonl"))):
        m = re.match(r"trace_(.+)_r(\d+)\.jsonl$", os.path.basename(path))
        if not m:
            continue
        runs.setdefault(m.group(1), []).append(read_trace(path))
    if not runs:
        raise ConfigError(f"no trace files found in {args.traces}")
    rows = summarize(runs)
    if args.out:
        write_summary_csv(rows, args.out)
    _print_rows(rows)


def _cmd_oracle(args):
    X = datamod.read_dense_csv(args.data)
    model = build_model({"kind": "gaussian_wishart", "r": args.r, "nu": args.nu}, X)
    prior = build_prior({"kind": args.prior, "alpha": args.alpha, "sigma": args.sigma})
    probs, log_norm, log_u = exact_posterior(model.prepare(X), args.u, prior, model)
    print(f"partitions: {len(probs)}  log_normalizer: {log_norm:.10g}  u_terms: {log_u:.10g}")
    for p, prob in sorted(probs.items(), key=lambda kv: -kv[1])[: args.top]:
        print(f"{prob:.6f}  {p}")


class _Parser(argparse.ArgumentParser):
    # usage errors (such as a missing --seed) are configuration errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    ap = _Parser(prog="tgmcmc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    g.add_argument("--kind", choices=["gaussian", "py"], default="gaussian")
    g.add_argument("--k", type=int, default=13)
    g.add_argument("--n", type=int, default=1300)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--separation", type=float, default=4.0)
    g.add_argument("--theta", type=float, default=3.0)
    g.add_argument("--discount", type=float, default=0.8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--labels-out")
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="run the kernels of a JSON experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--output-dir")
    r.add_argument("--repeats", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--budget-seconds", type=float)
    r.add_argument("--budget-iterations", type=int)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="summarize trace files into CSV")
    s.add_argument("traces", help="directory holding trace_<kernel>_r<k>.jsonl files")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_summarize)

    o = sub.add_parser("oracle", help="exact posterior of a small Gaussian dataset")
    o.add_argument("data", help="CSV file with at most 10 rows")
    o.add_argument("--u", type=float, default=1.0)
    o.add_argument("--prior", choices=["dp", "nggp"], default="dp")
    o.add_argument("--alpha", type=float, default=1.0)
    o.add_argument("--sigma", type=float, default=0.5)
    o.add_argument("--r", type=float, default=0.1)
    o.add_argument("--nu", type=float)
    o.add_argument("--top", type=int, default=10)
    o.set_defaults(func=_cmd_oracle)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ParseError, ModelConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
