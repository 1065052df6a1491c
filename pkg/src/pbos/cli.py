"""Command-line entry points: simulate, fcw, threshold, serve."""

from __future__ import annotations

import argparse
import json
import sys

from .conjugate import ModelDraw
from .evaluation import cil_threshold_from_percentile
from .harness import (
    PRIORS,
    fcw_from_mapping,
    load_config,
    run_fcw,
    run_grid,
    scenario_from_mapping,
)
from .seeding import derive_rng


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--paper-scale", action="store_true", help="published-scale run sizes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbos",
        description="Predictive Bayesian optional stopping: simulation grids, "
        "the applied reaction-time scenario, threshold derivation, and a live session service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the evaluation grid")
    _add_common(sim)
    sim.add_argument("--replicates", type=int, help="datasets per grid cell")
    sim.add_argument("--parallel", type=int, help="worker processes")

    fcw = sub.add_parser("fcw", help="run the reaction-time application scenario")
    _add_common(fcw)
    fcw.add_argument("--groups", type=int, help="datasets drawn for ground truth")
    fcw.add_argument("--preset", choices=("literal", "log_space"), help="parameter reading")

    thr = sub.add_parser("threshold", help="derive a CIL target from a percentile")
    thr.add_argument("--prior", required=True, choices=sorted(PRIORS))
    thr.add_argument("--pct", required=True, type=float, help="percentile in [0, 1]")
    thr.add_argument("--mean", type=float, default=0.0)
    thr.add_argument("--variance", type=float, default=1.0)
    thr.add_argument("--n-max", type=int, default=50)
    thr.add_argument("--reps", type=int, default=10_000)
    thr.add_argument("--coverage", type=float, default=0.95)
    thr.add_argument("--seed", type=int, default=0)

    srv = sub.add_parser("serve", help="run the live session service")
    srv.add_argument("--port", type=int, default=8787)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--data-dir", default="./pbos-sessions")

    return parser


def _cmd_simulate(args) -> int:
    payload = dict(load_config(args.config)) if args.config else {}
    if args.seed is not None:
        payload["master_seed"] = args.seed
    if args.out is not None:
        payload["out_dir"] = args.out
    if args.replicates is not None:
        payload["replicates"] = args.replicates
    if args.parallel is not None:
        payload["parallel"] = args.parallel
    missing = [k for k in ("master_seed", "out_dir") if k not in payload]
    if missing:
        print(f"error: missing required settings: {missing} (use --seed/--out or the config file)", file=sys.stderr)
        return 2
    cfg = scenario_from_mapping(payload)
    if args.paper_scale:
        cfg = cfg.paper_scale()
    summary = run_grid(cfg)
    print(json.dumps({"cells": len(summary["cells"]), "out_dir": cfg.out_dir}, indent=2))
    return 0


def _cmd_fcw(args) -> int:
    payload = dict(load_config(args.config)) if args.config else {}
    if args.seed is not None:
        payload["master_seed"] = args.seed
    if args.out is not None:
        payload["out_dir"] = args.out
    if args.groups is not None:
        payload["groups"] = args.groups
    if args.preset is not None:
        payload["preset"] = args.preset
    missing = [k for k in ("master_seed", "out_dir") if k not in payload]
    if missing:
        print(f"error: missing required settings: {missing} (use --seed/--out or the config file)", file=sys.stderr)
        return 2
    cfg = fcw_from_mapping(payload)
    if args.paper_scale:
        cfg = cfg.paper_scale()
    summary = run_fcw(cfg)
    print(
        json.dumps(
            {
                "preset": summary["preset"],
                "reach_probability": summary["reach_probability"],
                "weighted_r_cb": summary["weighted"]["r_cb"],
            },
            indent=2,
        )
    )
    return 0


def _cmd_threshold(args) -> int:
    value = cil_threshold_from_percentile(
        PRIORS[args.prior],
        ModelDraw(args.mean, args.variance),
        args.n_max,
        args.pct,
        args.reps,
        derive_rng(args.seed, 0),
        coverage=args.coverage,
    )
    print(value)
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.data_dir, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "fcw": _cmd_fcw,
        "threshold": _cmd_threshold,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
