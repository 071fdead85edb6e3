"""Command-line interface.

Subcommands: collect, design, simulate, report, repro-example1.
Exit codes: 0 ok, 2 config error, 3 runtime error, 4 infeasible design,
5 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import example1_config, load_config, write_example1_config
from .data import load_dataset_csv, save_dataset_csv
from .errors import ConfigError, EtcError, NonFiniteError, SolverNumericalFailureError
from .report import render_report
from .sim import broadcast_counts, consensus_error, empirical_l2_gain, save_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5


def _out_dir(args, cfg) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_collect(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    ds = pipeline.collect(cfg, seed=seed)
    data_path = out / "data.csv"
    save_dataset_csv(ds, data_path)
    with open(out / "data.provenance.json", "w") as fh:
        json.dump({"seed": seed, "rho": cfg.rho, "w_bar": cfg.w_bar,
                   "input_range": list(cfg.input_range),
                   "b_w_scale": cfg.b_w_scale}, fh, indent=1)
    print(f"wrote {data_path} ({cfg.rho} samples, {cfg.graph.n_agents} agents)")
    return EXIT_OK


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    if args.method == "model":
        res = pipeline.design_model(cfg)
    else:
        data_path = Path(args.data) if args.data else out / "data.csv"
        if not data_path.exists():
            raise ConfigError(f"data file not found: {data_path} (run collect first)")
        ds = load_dataset_csv(data_path)
        if args.method == "data":
            res = pipeline.design_data(cfg, ds)
        else:
            res = pipeline.design_hinf(cfg, ds, gamma=args.gamma)
    design_path = out / f"design_{args.method}.json"
    pipeline.save_design(res, design_path)
    if not res.feasible:
        print(f"infeasible: {res.detail}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"wrote {design_path} (feasible, worst margin {res.worst_margin:.3e}, "
          f"solver {res.solver}" + (f", gamma {res.gamma:.4g}" if res.gamma else "") + ")")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    res = pipeline.load_design(args.design, cfg.graph)
    if not res.feasible:
        print("design file records an infeasible design", file=sys.stderr)
        return EXIT_CONFIG
    disturbance = None
    if cfg.disturbance and cfg.disturbance.get("kind", "zero") != "zero":
        seed = args.seed if args.seed is not None else int(cfg.disturbance.get("seed", 0))
        disturbance = pipeline.make_disturbance(cfg, seed, cfg.graph.n_agents * cfg.n)
    trace = pipeline.simulate(cfg, res, disturbance=disturbance)
    trace_path = out / "trace.csv"
    save_trace_csv(trace, trace_path)
    err = consensus_error(trace)
    summary = {
        "final_consensus_error": float(err[-1]),
        "initial_consensus_error": float(err[0]),
        "broadcast_counts": broadcast_counts(trace),
        "sample_instants": int(len(trace.sample_times)),
    }
    if disturbance is not None:
        summary["empirical_l2_gain"] = empirical_l2_gain(trace)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    print(f"wrote {trace_path}; final error {summary['final_consensus_error']:.4g}; "
          f"broadcasts {summary['broadcast_counts']}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else Path(args.trace).parent
    out.mkdir(parents=True, exist_ok=True)
    summary = render_report(args.trace, out, T_k=args.t_k)
    print(f"wrote {len(summary['paths'])} report files under {out}")
    return EXIT_OK


def cmd_repro_example1(args) -> int:
    cfg = example1_config()
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_example1_config(out / "config.yaml")

    print("[1/4] collecting open-loop data")
    ds = pipeline.collect(cfg)
    save_dataset_csv(ds, out / "data.csv")

    print("[2/4] solving the data-driven design")
    res = pipeline.design_data(cfg, ds)
    pipeline.save_design(res, out / "design_data.json")
    if not res.feasible:
        print("design infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE

    print("[3/4] simulating the closed loop")
    trace = pipeline.simulate(cfg, res)
    save_trace_csv(trace, out / "trace.csv")

    print("[4/4] rendering report")
    summary = render_report(out / "trace.csv", out, T_k=cfg.T_k)

    err = consensus_error(trace)
    counts = broadcast_counts(trace)
    checks = int(len(trace.sample_times)) - 1
    eta_ok = bool((trace.eta >= -1e-12).all())
    ratio = err[-1] / err[0]
    print("\nacceptance summary")
    print(f"  feasible design:        yes (margin {res.worst_margin:.2e})")
    print(f"  consensus error ratio:  {ratio:.4f} (start {err[0]:.3f} -> end {err[-1]:.5f})")
    print(f"  broadcasts / checks:    {counts} / {checks} per agent")
    print(f"  eta nonnegative:        {'yes' if eta_ok else 'NO'}")
    ok = ratio <= 0.05 and eta_ok and all(c < checks for c in counts)
    print(f"  overall:                {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="etconsensus",
                                description="Event-triggered consensus design and simulation")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("collect", help="generate open-loop data")
    pc.add_argument("--config", required=True)
    pc.add_argument("--seed", type=int, default=None)
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=cmd_collect)

    pd = sub.add_parser("design", help="solve a co-design problem")
    pd.add_argument("--config", required=True)
    pd.add_argument("--method", choices=("model", "data", "hinf"), default="data")
    pd.add_argument("--gamma", type=float, default=None)
    pd.add_argument("--data", default=None, help="data.csv path (default: <out>/data.csv)")
    pd.add_argument("--out", default=None)
    pd.set_defaults(func=cmd_design)

    ps = sub.add_parser("simulate", help="run the closed loop with a design")
    ps.add_argument("--config", required=True)
    ps.add_argument("--design", required=True)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out", default=None)
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("report", help="render charts from a trace")
    pr.add_argument("--trace", required=True)
    pr.add_argument("--t-k", type=float, default=1.0, help="seconds per step for axes")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_report)

    pe = sub.add_parser("repro-example1", help="full benchmark pipeline")
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_repro_example1)

    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for parameter sweeps (reserved)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverNumericalFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NonFiniteError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EtcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
