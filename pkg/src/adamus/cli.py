"""Command-line entry point: ``adamus <command> ...``."""

from __future__ import annotations

import os
import sys

# BLAS reads these at import time, so they must be set before numpy loads
_threads = os.environ.get("ADAMUS_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
from pathlib import Path  # noqa: E402

from pydantic import ValidationError  # noqa: E402


def _parse_dims(text: str) -> list:
    try:
        dims = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must be comma-separated integers, got {text!r}")
    if not dims or min(dims) <= 0:
        raise argparse.ArgumentTypeError("dims must be positive integers")
    return dims


def cmd_unbalance(args) -> int:
    from .data import load_csv_dataset, unbalance_degree
    from .pna import moderating_factor

    dims = args.dims if args.dims is not None else load_csv_dataset(args.dataset).dims
    report = unbalance_degree(dims, args.aligned_dim, ddof=0 if args.population else 1)
    taus = [moderating_factor(report, v, args.tau_variant) for v in range(len(dims))]
    if args.json:
        print(json.dumps(dict(report.to_dict(), tau=taus), indent=2, sort_keys=True))
    else:
        print(f"dims: {','.join(map(str, dims))}")
        print(f"Lambda: {report.lambda_total:.4f}")
        for v, (lam, tau) in enumerate(zip(report.per_view, taus)):
            print(f"view {v}: Lambda_v={lam:.4f} tau_v={tau:.4f}")
    return 0


def cmd_generate_toy(args) -> int:
    from .data import ToySpec, generate_toy, save_csv_dataset

    kw = {"seed": args.seed}
    if args.n_samples is not None:
        kw["n_samples"] = args.n_samples
    if args.view_dims is not None:
        kw["view_dims"] = tuple(args.view_dims)
    ds, truth = generate_toy(ToySpec(**kw))
    out = Path(args.out_dir)
    save_csv_dataset(ds, out)
    (out / "truth.json").write_text(json.dumps(truth.to_dict()), encoding="utf-8")
    print(f"wrote {ds.n_samples} samples, dims {ds.dims} to {out}")
    return 0


def _collect_overrides(extra: list) -> dict:
    """Turn ``--a.b value`` / ``--a.b=value`` pairs into a dotted-key dict."""
    from .config import parse_value

    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ValueError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ValueError(f"missing value for {tok}")
            val = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = parse_value(val)
    return out


def cmd_run(args, extra) -> int:
    from .config import load_config
    from .pipeline import PipelineError, run_pipeline

    try:
        overrides = _collect_overrides(extra)
        cfg = load_config(args.config, overrides)
    except (ValueError, ValidationError, OSError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_pipeline(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for task, m in sorted(result.metrics.items()):
        print(f"{task}: acc {m['acc']['mean']:.4f} +- {m['acc']['std']:.4f}")
    for task, m in sorted(result.baseline_metrics.items()):
        print(f"baseline {task}: acc {m['acc']['mean']:.4f} +- {m['acc']['std']:.4f}")
    r = result.prune_report
    print(f"params {r.params_before} -> {r.params_after}, flops {r.flops_before} -> {r.flops_after}")
    print(f"artifacts in {result.output_dir}")
    return 0


def cmd_eval(args) -> int:
    from .pipeline import PipelineError, evaluate_run_dir

    try:
        metrics = evaluate_run_dir(args.run_dir)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_prune_report(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "prune_report.json"
    rep = json.loads(path.read_text(encoding="utf-8"))
    print(f"{'view':>4} {'layer':>5} {'width':>6} {'rate':>7} {'w_ratio':>8} {'removed':>8} {'kept':>6}")
    for p in rep["layers"]:
        kept = p.get("kept", p["width"] - len(p["removed"]))
        print(f"{p['view']:>4} {p['layer']:>5} {p['width']:>6} {p['rate']:>7.4f} {p['w_ratio']:>8.4f} "
              f"{len(p['removed']):>8} {kept:>6}")
    print(f"params: {rep['params_before']} -> {rep['params_after']}")
    print(f"flops:  {rep['flops_before']} -> {rep['flops_after']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adamus", description="Multi-view sparse representation learning toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    u = sub.add_parser("unbalance", help="dimensional unbalance of a set of views")
    src = u.add_mutually_exclusive_group(required=True)
    src.add_argument("--dims", type=_parse_dims, help="comma-separated view widths, e.g. 6,47,240")
    src.add_argument("--dataset", help="dataset directory with view_k.csv files")
    u.add_argument("--aligned-dim", type=int, default=128)
    u.add_argument("--population", action="store_true", help="population std instead of sample std")
    u.add_argument("--tau-variant", choices=["as_printed", "inverted"], default="as_printed")
    u.add_argument("--json", action="store_true")

    g = sub.add_parser("generate-toy", help="write the two-view toy dataset and its ground truth")
    g.add_argument("out_dir")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-samples", type=int)
    g.add_argument("--view-dims", type=_parse_dims)

    r = sub.add_parser("run", help="train, prune, finetune and evaluate",
                       description="Any config field can be overridden with a dotted flag, "
                                   "e.g. --pna.enabled false --graph.k 50 --seed 3.")
    r.add_argument("--config", help="JSON config file")

    e = sub.add_parser("eval", help="re-evaluate a finished run from its checkpoint")
    e.add_argument("--run-dir", required=True)

    pr = sub.add_parser("prune-report", help="pretty-print a prune report")
    pr.add_argument("path", help="prune_report.json or a run directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command != "run":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "unbalance":
            return cmd_unbalance(args)
        if args.command == "generate-toy":
            return cmd_generate_toy(args)
        if args.command == "run":
            return cmd_run(args, extra)
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_prune_report(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
