"""Command-line interface.

Subcommands:
  calibrate   find the boundary scale c hitting a familywise error target
  power       integrate one operating characteristic for a scenario
  sweep       grid-compare the two data policies, writing CSV
  simulate    Monte Carlo estimates (or a single audited replicate)
  samplesize  smallest cohort size meeting a pairwise power target

Configs are JSON files; see the README for the schemas.  Worker processes for
sweeps and simulation are controlled by PLATFORMPOWER_WORKERS.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .calibrate import (BoundaryShape, calibrate_c, find_sample_size, fwer,
                        pairwise_power, shape_boundaries)
from .design import (Scenario, bounds_from_dict, bounds_to_dict,
                     design_from_dict)
from .power import (NotEstimableError, PowerRequest, conditional_power,
                    overall_power, wrong_control_prob, xi, omega)
from .simulate import estimate, simulate_trial
from .sweeps import run_sweep


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _design_of(cfg: dict):
    return design_from_dict(cfg["design"] if "design" in cfg else cfg)


def _bounds_of(cfg: dict, design):
    if "bounds" in cfg:
        return bounds_from_dict(cfg["bounds"])
    if "shape" in cfg:
        sh = cfg["shape"]
        return shape_boundaries(BoundaryShape(sh["kind"], float(sh["c"])),
                                design.J)
    raise ValueError("config needs 'bounds' or 'shape'")


def _plain(obj):
    """JSON-ready copy: tuple keys become 'a,b' strings, numpy scalars floats."""
    if isinstance(obj, dict):
        return {(",".join(map(str, k)) if isinstance(k, tuple) else str(k)):
                _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _emit(payload, out: str | None) -> None:
    text = json.dumps(_plain(payload), indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    design = _design_of(cfg)
    shape = calibrate_c(design, args.kind, args.alpha, tol=args.tol,
                        seed=args.seed)
    bounds = shape_boundaries(shape, design.J)
    achieved = fwer(design, bounds, tol=args.tol, seed=args.seed)
    _emit({"kind": shape.kind, "c": shape.c,
           "upper": list(bounds.upper), "lower": list(bounds.lower),
           "fwer": achieved.value, "fwer_err": achieved.err}, args.out)
    return 0


def _policies(choice: str):
    return ("retain", "discard") if choice == "both" else (choice,)


def _cmd_power(args) -> int:
    cfg = _load_config(args.config)
    design = _design_of(cfg)
    bounds = _bounds_of(cfg, design)
    quantity = cfg.get("quantity", "conditional")
    out = {"quantity": quantity}
    if quantity in ("conditional", "overall", "omega"):
        scenario = Scenario(tuple(cfg["scenario"]["mu"]))
        results = {}
        for policy in _policies(args.policy):
            if quantity == "conditional":
                try:
                    r = conditional_power(
                        PowerRequest(design, bounds, scenario,
                                     int(cfg["kstar"]), int(cfg["kprime"]),
                                     int(cfg["jprime"]), policy),
                        tol=args.tol, seed=args.seed)
                except NotEstimableError as exc:
                    results[policy] = {"value": None, "err": None,
                                       "note": str(exc)}
                    continue
            elif quantity == "overall":
                r = overall_power(design, bounds, scenario, int(cfg["kstar"]),
                                  policy=policy, tol=args.tol, seed=args.seed)
            else:
                r = omega(design, bounds, scenario, int(cfg["kstar"]),
                          int(cfg["kprime"]), int(cfg["jprime"]),
                          policy=policy, tol=args.tol, seed=args.seed)
            results[policy] = {"value": r.value, "err": r.err}
        out["results"] = results
    elif quantity == "xi":
        scenario = Scenario(tuple(cfg["scenario"]["mu"]))
        r = xi(design, bounds, scenario, int(cfg["kstar"]),
               int(cfg["jstar"]), tol=args.tol, seed=args.seed)
        out.update(value=r.value, err=r.err)
    elif quantity == "wrong-control":
        scenario = Scenario(tuple(cfg["scenario"]["mu"]))
        r = wrong_control_prob(design, bounds, scenario, tol=args.tol,
                               seed=args.seed)
        out.update(value=r.value, err=r.err)
    elif quantity == "fwer":
        r = fwer(design, bounds, tol=args.tol, seed=args.seed)
        out.update(value=r.value, err=r.err)
    elif quantity == "pairwise":
        r = pairwise_power(design, bounds, float(cfg["theta"]), tol=args.tol,
                           seed=args.seed)
        out.update(value=r.value, err=r.err)
    else:
        raise ValueError("unknown quantity %r" % quantity)
    _emit(out, args.out)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if args.out:
        cfg["out"] = args.out
    if args.tol is not None:
        cfg["tol"] = args.tol
    cfg.setdefault("seed", args.seed)
    res = run_sweep(cfg)
    _emit(res["summary"], None)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    design = _design_of(cfg)
    bounds = _bounds_of(cfg, design)
    scenario = Scenario(tuple(cfg["scenario"]["mu"]))
    if args.trace:
        pol = args.policy if args.policy != "both" else "retain"
        outcome = simulate_trial(design, bounds, scenario, policy=pol,
                                 seed=args.seed)
        text = outcome.to_json()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return 0
    results = {}
    for policy in _policies(args.policy):
        est = estimate(design, bounds, scenario, policy=policy,
                       reps=args.reps, seed=args.seed)
        est.pop("counts")
        results[policy] = est
    _emit(results, args.out)
    return 0


def _cmd_samplesize(args) -> int:
    cfg = _load_config(args.config)
    design = _design_of(cfg)
    res = find_sample_size(design, args.kind, args.alpha, args.power,
                           args.theta, tol=args.tol, seed=args.seed)
    _emit({"n": res["n"], "c": res["shape"].c, "kind": res["shape"].kind,
           "bounds": bounds_to_dict(res["bounds"]),
           "pairwise_power": res["pairwise_power"],
           "per_arm_max": res["per_arm_max"],
           "max_total_sample_size": res["max_total_sample_size"]}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platformpower",
        description="Design and evaluate platform trials whose control arm "
                    "can be replaced mid-trial.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=None,
                        help="integration tolerance")
    common.add_argument("--out", default=None, help="write output to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common],
                       help="calibrate the boundary scale to an alpha target")
    p.add_argument("--kind", choices=("triangular", "obrien-fleming"),
                   default="triangular")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=_cmd_calibrate, default_tol=1e-6)

    p = sub.add_parser("power", parents=[common],
                       help="integrate one operating characteristic")
    p.add_argument("--policy", choices=("retain", "discard", "both"),
                   default="both")
    p.set_defaults(func=_cmd_power, default_tol=1e-5)

    p = sub.add_parser("sweep", parents=[common],
                       help="policy-difference grid sweep, CSV output")
    p.set_defaults(func=_cmd_sweep, default_tol=None)

    p = sub.add_parser("simulate", parents=[common],
                       help="Monte Carlo estimates or one audited replicate")
    p.add_argument("--policy", choices=("retain", "discard", "both"),
                   default="both")
    p.add_argument("--reps", type=int, default=100000)
    p.add_argument("--trace", action="store_true",
                   help="emit a single replicate's full outcome instead")
    p.set_defaults(func=_cmd_simulate, default_tol=None)

    p = sub.add_parser("samplesize", parents=[common],
                       help="smallest cohort size meeting a power target")
    p.add_argument("--kind", choices=("triangular", "obrien-fleming"),
                   default="triangular")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.set_defaults(func=_cmd_samplesize, default_tol=1e-6)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.tol is None:
        # subcommands that defer to their config declare no default here
        args.tol = getattr(args, "default_tol", None)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
