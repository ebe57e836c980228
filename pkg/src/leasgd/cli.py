"""Command-line entry points.

Subcommands: ``run`` (execute a config and export traces), ``compare``
(communication/loss deltas between two exported trace directories),
``audit-privacy`` (epsilon table from a ledger JSON) and ``bound-check``
(convergence-bound report for an exported theory-mode ensemble).

Exit codes: 0 success, 2 config/validation failure, 3 runtime abort.
"""

import argparse
import glob
import json
import math
import os
import sys

import numpy as np

from . import harness, privacy, theory
from .errors import RunAbort, ValidationError


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    if args.mode:
        cfg.mode = args.mode
        cfg = harness.validate_config(cfg)
    out_dir = args.out or cfg.out_dir
    if not out_dir:
        raise ValidationError("no output directory: pass --out or set out_dir")
    traces, summary = harness.run_experiment(cfg, master_seed=args.master_seed)
    paths = harness.export(traces, summary, out_dir)
    print(f"wrote {len(paths)} files to {out_dir}")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _load_summary(trace_dir):
    path = os.path.join(trace_dir, "summary.json")
    if not os.path.exists(path):
        raise ValidationError(f"no summary.json in {trace_dir}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_compare(args):
    a = _load_summary(args.dir_a)
    b = _load_summary(args.dir_b)
    if a["m"] != b["m"]:
        raise ValidationError(f"worker counts differ: {a['m']} vs {b['m']}")
    rate_a = a["mean_vectors_per_iteration"]
    rate_b = b["mean_vectors_per_iteration"]
    report = {
        "a": {"algorithm": a["algorithm"], "vectors_per_iteration": rate_a,
              "final_mean_loss": a["final_mean_loss"]},
        "b": {"algorithm": b["algorithm"], "vectors_per_iteration": rate_b,
              "final_mean_loss": b["final_mean_loss"]},
        "vector_reduction_a_vs_b": 1.0 - rate_a / rate_b if rate_b else math.inf,
        "final_loss_delta_a_minus_b": a["final_mean_loss"] - b["final_mean_loss"],
    }
    out = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    print(out)
    return 0


def _cmd_audit_privacy(args):
    with open(args.ledger, "r", encoding="utf-8") as fh:
        led = json.load(fh)
    steps, sigma2, q = led["steps"], led["sigma2"], led["q"]
    if sigma2 <= 0:
        print("ledger is non-private (sigma2 = 0): epsilon is unbounded")
        return 0
    moments = steps * privacy.single_step_log_moments(sigma2, q)
    print(f"steps={steps} sigma2={sigma2} q={q}")
    print(f"{'delta':>12} {'eps_moments':>14} {'eps_strong_comp':>16}")
    deltas = args.deltas or [led["delta"], 1e-4, 1e-5, 1e-6]
    rows = []
    for delta in deltas:
        eps_m = float(np.min((moments + math.log(1.0 / delta)) / privacy.MOMENT_ORDERS))
        eps_sc = privacy.strong_composition_budget(sigma2, steps, delta)[0]
        rows.append({"delta": delta, "epsilon_moments": eps_m,
                     "epsilon_strong_composition": eps_sc})
        print(f"{delta:>12.3e} {eps_m:>14.6f} {eps_sc:>16.6f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_bound_check(args):
    cfg = harness.load_config(args.config)
    summary = _load_summary(args.trace_dir)
    runs = sorted(glob.glob(os.path.join(args.trace_dir, "run_*.csv")))
    if not runs:
        raise ValidationError(f"no run_*.csv files in {args.trace_dir}")
    series = []
    for path in runs:
        cols = harness.parse_trace_csv(path)
        if cols["d_t"] is None:
            raise ValidationError(f"{path} has no distance column (explore-mode run?)")
        series.append(cols["d_t"])
    stacked = np.stack(series)
    dist = theory.DistanceSeries(
        d=stacked.mean(axis=0),
        seeds_averaged=stacked.shape[0],
        stderr=stacked.std(axis=0, ddof=1) / np.sqrt(stacked.shape[0])
        if stacked.shape[0] > 1
        else None,
    )
    problem, _, _ = harness.build_problem(cfg.problem, cfg.m)
    p = theory.subsystem_p(cfg.m, cfg.follower_count)
    hp = cfg.hp
    tp = theory.derive_theory_params(
        problem, hp, p, args.sigma1_sq, [problem.optimum]
    )
    tp.c0 = summary.get("c0_mean", float(dist.d[0]))
    tp.d0 = summary.get("d0_mean", float(dist.d[0]))
    report = theory.check_bound_dominance(dist, tp, args.slack)

    bound_path = os.path.join(args.trace_dir, "bound_series.csv")
    bound = theory.distance_bound(tp, np.arange(len(dist.d)))
    with open(bound_path, "w", encoding="utf-8") as fh:
        fh.write("t,d_mean,bound\n")
        for k in range(len(dist.d)):
            fh.write(f"{k},{dist.d[k]:.17g},{bound[k]:.17g}\n")
    report["bound_series_path"] = bound_path
    report["config"] = args.config
    out = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    print(out)
    return 0 if report["pass"] else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leasgd",
        description="Deterministic leader-follower elastic-averaging SGD simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config and export traces")
    p_run.add_argument("config")
    p_run.add_argument("--master-seed", type=int, default=0)
    p_run.add_argument("--mode", choices=["theory", "explore"], default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two exported trace directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=_cmd_compare)

    p_aud = sub.add_parser("audit-privacy", help="epsilon table from a ledger JSON")
    p_aud.add_argument("ledger")
    p_aud.add_argument("--deltas", type=float, nargs="*", default=None)
    p_aud.add_argument("--out", default=None)
    p_aud.set_defaults(func=_cmd_audit_privacy)

    p_bnd = sub.add_parser("bound-check", help="convergence-bound report for a trace dir")
    p_bnd.add_argument("trace_dir")
    p_bnd.add_argument("config")
    p_bnd.add_argument("--slack", type=float, default=0.05)
    p_bnd.add_argument("--sigma1-sq", type=float, default=0.0)
    p_bnd.add_argument("--out", default=None)
    p_bnd.set_defaults(func=_cmd_bound_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except RunAbort as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
