"""Command-line entry point: generate, recover, threshold, oracle, sweep.

Exit status is 0 on success, 1 on invalid input and 2 when a run fails.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .harness import ExperimentConfig, emit, run_sweep
from .info import derived_constants
from .kernel import Kernel
from .model import GkbmInstance, GkbmParams, agreement, canonical, sample
from .oracle import component_map, log_likelihood, map_estimate
from .recovery import full_pipeline

KERNEL_HINT = (
    'kernel JSON: {"shape":"indicator","kappa":K} | {"shape":"triangular","kappa":K} | '
    '{"shape":"texp","rate":R,"kappa":K} | {"shape":"pwc","pieces":[[left,right,level],...]}'
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _kernel_arg(text):
    try:
        return Kernel.from_dict(json.loads(text))
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"{exc}\n  {KERNEL_HINT}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit seed for all randomness (default 0)")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="quadrature tolerance (default 1e-9)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="print only compact JSON")

    parser = _Parser(prog="gkbm", description="Geometric kernel block model toolkit", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="sample an instance and write it as JSON")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--lambda", dest="lam", type=float, required=True)
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--q", type=float, required=True)
    g.add_argument("--kernel", type=_kernel_arg, required=True, help=KERNEL_HINT)
    g.add_argument("--out", required=True)

    r = sub.add_parser("recover", parents=[common], help="run the two-phase recovery on an instance")
    r.add_argument("--in", dest="infile", required=True)
    r.add_argument("--emit-labels", dest="emit_labels")
    r.add_argument("--stats", action="store_true")

    t = sub.add_parser("threshold", parents=[common], help="report lambda*kappa, lambda*I_phi and derived constants")
    t.add_argument("--lambda", dest="lam", type=float, required=True)
    t.add_argument("--p", type=float, required=True)
    t.add_argument("--q", type=float, required=True)
    t.add_argument("--kernel", type=_kernel_arg, required=True, help=KERNEL_HINT)

    o = sub.add_parser("oracle", parents=[common], help="exact likelihood, MAP or per-node MAP on a small instance")
    o.add_argument("--in", dest="infile", required=True)
    o.add_argument("--mode", choices=("map", "component", "likelihood"), required=True)

    s = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="CSV output path")
    s.add_argument("--svg")
    s.add_argument("--workers", type=int, default=1)
    return parser


def _labels_doc(labels):
    lab, flipped = canonical(labels)
    return {"flip_canonical": flipped, "labels": [int(x) for x in lab]}


def cmd_generate(args):
    params = GkbmParams(args.lam, args.n, args.p, args.q, args.kernel, args.seed)
    inst = sample(params)
    inst.save(args.out)
    return {"out": args.out, "N": inst.node_count, "edges": inst.edge_count, "seed": args.seed}


def cmd_recover(args):
    inst = GkbmInstance.load(args.infile)
    labels, stats = full_pipeline(inst, args.tol)
    doc = _labels_doc(labels)
    if args.emit_labels:
        with open(args.emit_labels, "w") as fh:
            json.dump(doc, fh)
    _, matched, compared = agreement(labels, inst.communities)
    out = {
        "N": inst.node_count,
        "exact": matched == compared == inst.node_count,
        "agreement": matched / inst.node_count if inst.node_count else 1.0,
    }
    if args.stats:
        out["stats"] = stats.to_dict()
    if not args.emit_labels:
        out.update(doc)
    return out


def cmd_threshold(args):
    rep = derived_constants(args.lam, args.kernel, args.p, args.q, args.tol)
    return rep.to_dict()


def cmd_oracle(args):
    inst = GkbmInstance.load(args.infile)
    truth = inst.communities
    if args.mode == "likelihood":
        return {"log_likelihood": log_likelihood(inst, truth)}
    if args.mode == "map":
        res = map_estimate(inst)
        out = _labels_doc(res.labels)
        out.update(log_likelihood=res.log_likelihood, truth_log_likelihood=log_likelihood(inst, truth), tie=res.tie)
        return out
    decisions = [component_map(inst, u, truth) for u in range(inst.node_count)]
    return {
        "labels": [d.label for d in decisions],
        "log_ratios": [d.log_ratio for d in decisions],
        "ties": [u for u, d in enumerate(decisions) if d.tie],
        "errors": [u for u, d in enumerate(decisions) if d.label != truth[u]],
    }


def cmd_sweep(args):
    with open(args.config) as fh:
        raw = json.load(fh)
    raw.setdefault("seed", args.seed)
    raw.setdefault("tol", args.tol)
    cfg = ExperimentConfig.from_dict(raw)
    if args.workers < 1:
        raise ValueError("--workers must be >= 1")
    results = run_sweep(cfg, workers=args.workers)
    emit(results, cfg.metrics, csv_path=args.out, svg_path=args.svg)
    return {
        "out": args.out,
        "svg": args.svg,
        "cells": [
            {"cell": r.cell, "lambda_info": r.lambda_info, "means": r.means, "failures": r.failures} for r in results
        ],
    }


COMMANDS = {
    "generate": cmd_generate,
    "recover": cmd_recover,
    "threshold": cmd_threshold,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
}


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("seed", 0), ("tol", 1e-9), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        result = COMMANDS[args.command](args)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"gkbm {args.command}: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"gkbm {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.quiet:
        print(json.dumps(result, default=_jsonable, separators=(",", ":")))
    else:
        print(json.dumps(result, default=_jsonable, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
