"""Grid sweeps comparing the two data policies.

A sweep walks a rectangular grid of effect offsets for two chosen arms
(every other arm pinned to a configured offset), evaluates one quantity --
conditional or overall power -- under both the retain and the post-change-only
policy at each point, and writes a CSV with a provenance header and a summary
footer.  Points are independent, so the grid is parallelized over worker
processes when PLATFORMPOWER_WORKERS (or the config) asks for it.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .calibrate import BoundaryShape, shape_boundaries
from .design import (Scenario, bounds_from_dict, design_from_dict)
from .power import (NotEstimableError, PowerRequest, conditional_power,
                    overall_power)
from .simulate import worker_count

CSV_COLUMNS = "mu1_delta,mu2_delta,value_retain,value_discard,difference,err_estimate"

_DEFAULT_GRID = {"lo": -0.5, "hi": 1.0, "step": 0.05}


def _grid_values(grid: dict) -> list:
    lo = float(grid.get("lo", _DEFAULT_GRID["lo"]))
    hi = float(grid.get("hi", _DEFAULT_GRID["hi"]))
    step = float(grid.get("step", _DEFAULT_GRID["step"]))
    if step <= 0 or hi < lo:
        raise ValueError("grid requires step > 0 and hi >= lo")
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def _parse_config(config: dict) -> dict:
    cfg = dict(config)
    design = design_from_dict(cfg["design"])
    if "bounds" in cfg:
        bounds = bounds_from_dict(cfg["bounds"])
    elif "shape" in cfg:
        sh = cfg["shape"]
        bounds = shape_boundaries(BoundaryShape(sh["kind"], float(sh["c"])),
                                  design.J)
    else:
        raise ValueError("sweep config needs 'bounds' or 'shape'")
    quantity = cfg.get("quantity", "conditional")
    if quantity not in ("conditional", "overall"):
        raise ValueError("quantity must be 'conditional' or 'overall'")
    kstar = int(cfg["kstar"])
    kprime = jprime = None
    if quantity == "conditional":
        kprime = int(cfg["kprime"])
        jprime = int(cfg["jprime"])
    axes = cfg.get("axis_arms", [1, 2])
    if len(axes) != 2 or axes[0] == axes[1]:
        raise ValueError("axis_arms must name two distinct arms")
    fixed = {int(k): float(v) for k, v in cfg.get("fixed", {}).items()}
    return {
        "design": design, "bounds": bounds, "quantity": quantity,
        "kstar": kstar, "kprime": kprime, "jprime": jprime,
        "axis_arms": (int(axes[0]), int(axes[1])), "fixed": fixed,
        "grid": cfg.get("grid", dict(_DEFAULT_GRID)),
        "tol": float(cfg.get("tol", 1e-5)),
        "seed": int(cfg.get("seed", 0)),
        "out": cfg.get("out"),
        "workers": cfg.get("workers"),
    }


def _point_task(payload) -> tuple:
    (design, bounds, quantity, kstar, kprime, jprime, axis_arms, fixed,
     d1, d2, i1, i2, tol, seed) = payload
    mu = [0.0] * (design.K + 1)
    mu[axis_arms[0]] = d1
    mu[axis_arms[1]] = d2
    for arm, off in fixed.items():
        mu[arm] = off
    scenario = Scenario(tuple(mu))
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for pol_i, policy in enumerate(("retain", "discard")):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(i1, i2, pol_i))
            try:
                if quantity == "conditional":
                    req = PowerRequest(design, bounds, scenario, kstar,
                                       kprime, jprime, policy)
                    r = conditional_power(req, tol=tol, seed=ss)
                else:
                    r = overall_power(design, bounds, scenario, kstar,
                                      policy=policy, tol=tol, seed=ss)
                out.append(r)
            except NotEstimableError:
                out.append(None)
    if out[0] is None or out[1] is None:
        return (d1, d2, math.nan, math.nan, math.nan, math.nan)
    return (d1, d2, out[0].value, out[1].value,
            out[0].value - out[1].value, math.hypot(out[0].err, out[1].err))


def run_sweep(config: dict) -> dict:
    """Execute one sweep; returns rows and the summary, writing CSV if asked."""
    cfg = _parse_config(config)
    t0 = time.time()
    g = cfg["grid"]
    if "axis1" in g or "axis2" in g:
        v1 = _grid_values(g.get("axis1", {}))
        v2 = _grid_values(g.get("axis2", {}))
    else:
        v1 = _grid_values(g)
        v2 = v1
    tasks = [(cfg["design"], cfg["bounds"], cfg["quantity"], cfg["kstar"],
              cfg["kprime"], cfg["jprime"], cfg["axis_arms"], cfg["fixed"],
              d1, d2, i1, i2, cfg["tol"], cfg["seed"])
             for i1, d1 in enumerate(v1) for i2, d2 in enumerate(v2)]
    w = worker_count() if cfg["workers"] is None else int(cfg["workers"])
    if w <= 0:
        w = os.cpu_count() or 1
    if w > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=w) as pool:
            rows = list(pool.map(_point_task, tasks, chunksize=4))
    else:
        rows = [_point_task(t) for t in tasks]

    hi = lo = big = None
    skipped = 0
    for r in rows:
        if math.isnan(r[4]):
            skipped += 1
            continue
        if hi is None or r[4] > hi[4]:
            hi = r
        if lo is None or r[4] < lo[4]:
            lo = r
        if big is None or abs(r[4]) > abs(big[4]):
            big = r
    elapsed = time.time() - t0
    summary = {
        "points": len(rows),
        "skipped": skipped,
        "max_difference": None if hi is None else hi[4],
        "argmax": None if hi is None else (hi[0], hi[1]),
        "min_difference": None if lo is None else lo[4],
        "argmin": None if lo is None else (lo[0], lo[1]),
        "max_abs_difference": None if big is None else abs(big[4]),
        "arg_abs": None if big is None else (big[0], big[1]),
        "elapsed_seconds": elapsed,
    }
    if cfg["out"]:
        _write_csv(cfg, rows, summary)
    return {"rows": rows, "summary": summary, "config": cfg}


def _grid_header(grid: dict) -> str:
    def fmt(g):
        return "lo=%g hi=%g step=%g" % tuple(
            float(g.get(k, _DEFAULT_GRID[k])) for k in ("lo", "hi", "step"))
    if "axis1" in grid or "axis2" in grid:
        return "# grid: axis1 %s axis2 %s" % (fmt(grid.get("axis1", {})),
                                              fmt(grid.get("axis2", {})))
    return "# grid: %s" % fmt(grid)


def _write_csv(cfg: dict, rows: list, summary: dict) -> None:
    d = cfg["design"]
    b = cfg["bounds"]
    # no timestamps or runtimes in the file: identical config + seed must
    # reproduce it byte for byte
    lines = [
        "# platformpower sweep",
        "# quantity: %s" % cfg["quantity"],
        "# kstar: %s kprime: %s jprime: %s" % (cfg["kstar"], cfg["kprime"],
                                               cfg["jprime"]),
        "# design: K=%d J=%d n=%d entry=%s sigma=%g" % (d.K, d.J, d.n,
                                                        d.entry, d.sigma),
        "# bounds: upper=%s lower=%s" % (
            tuple(round(x, 6) for x in b.upper),
            tuple(round(x, 6) for x in b.lower)),
        "# axes: arm %d -> mu1_delta, arm %d -> mu2_delta" % cfg["axis_arms"],
        "# fixed: %s" % (cfg["fixed"] or "{}"),
        _grid_header(cfg["grid"]),
        "# tol: %g seed: %d" % (cfg["tol"], cfg["seed"]),
        CSV_COLUMNS,
    ]
    for r in rows:
        lines.append("%.4f,%.4f,%.8f,%.8f,%.8f,%.3e" % r)
    lines.append("# points: %d skipped: %d" % (summary["points"],
                                               summary["skipped"]))
    if summary["max_difference"] is not None:
        lines.append("# max_difference: %.6f at mu1_delta=%.4f mu2_delta=%.4f"
                     % (summary["max_difference"], summary["argmax"][0],
                        summary["argmax"][1]))
        lines.append("# min_difference: %.6f at mu1_delta=%.4f mu2_delta=%.4f"
                     % (summary["min_difference"], summary["argmin"][0],
                        summary["argmin"][1]))
    with open(cfg["out"], "w") as fh:
        fh.write("\n".join(lines) + "\n")
