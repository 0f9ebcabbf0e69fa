"""Error-rate calibration and sample-size determination.

The familywise error rate is the chance, under the global null, that any arm
ever crosses its upper bound against the original control.  Its complement --
every arm eventually drops for futility -- splits exactly into J^K disjoint
rectangles indexed by each arm's drop stage, which keeps the integration cheap
and makes the bisection on the boundary scale c smooth.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .design import (Boundaries, Scenario, TrialDesign, ZIndex,
                     max_total_sample_size, validate_design)
from .events import Constraint, EventSpec, _within
from .power import PowerResult, event_prob

_INF = math.inf

BOUNDARY_KINDS = ("triangular", "obrien-fleming")


@dataclass(frozen=True)
class BoundaryShape:
    """A one-parameter stopping-boundary family: kind plus scale c."""

    kind: str
    c: float

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError("unknown boundary kind %r (expected one of %s)"
                             % (self.kind, ", ".join(BOUNDARY_KINDS)))
        if not self.c > 0:
            raise ValueError("boundary scale c must be positive")


def shape_boundaries(shape: BoundaryShape, J: int) -> Boundaries:
    """Evaluate the boundary family on information fractions j/J."""
    if J < 1:
        raise ValueError("stage count: need at least one analysis")
    upper = []
    lower = []
    for j in range(1, J + 1):
        t = j / J
        if shape.kind == "triangular":
            upper.append(shape.c * (1.0 + t) / math.sqrt(t))
            lower.append(shape.c * (3.0 * t - 1.0) / math.sqrt(t))
        else:  # obrien-fleming
            upper.append(shape.c / math.sqrt(t))
            lower.append(-shape.c / math.sqrt(t))
    lower[-1] = upper[-1]
    return Boundaries(tuple(upper), tuple(lower))


def _all_drop_event(design: TrialDesign, bounds: Boundaries) -> EventSpec:
    """Every arm drops for futility before ever beating the original control,
    as a disjoint union over the J^K possible drop-stage assignments."""
    terms = []
    for stages in itertools.product(range(1, design.J + 1), repeat=design.K):
        term = []
        feasible = True
        for k, dk in zip(design.arms, stages):
            if not math.isfinite(bounds.lower[dk - 1]):
                feasible = False  # cannot fall below an infinite futility bound
                break
            term.extend(_within(bounds, k, dk - 1))
            term.append(Constraint(ZIndex(k, 0, dk), -_INF, bounds.lower[dk - 1]))
        if feasible:
            terms.append(tuple(term))
    return EventSpec(tuple(terms), disjoint=True)


def fwer(design: TrialDesign, bounds: Boundaries, tol: float = 1e-6,
         seed=0) -> PowerResult:
    """P(any arm crosses its upper bound against the original control) under
    the global null.  Non-binding futility bounds are ignored for this rate."""
    validate_design(design, bounds)
    if not bounds.lower_binding:
        lower = tuple([-_INF] * (design.J - 1)) + (bounds.upper[-1],)
        bounds = Boundaries(bounds.upper, lower)
    null = Scenario((0.0,) * (design.K + 1))
    none = event_prob(design, null, _all_drop_event(design, bounds),
                      tol=tol, seed=seed)
    return PowerResult(min(max(1.0 - none.value, 0.0), 1.0), none.err)


def calibrate_c(design: TrialDesign, kind: str, alpha: float,
                tol: float = 1e-6, seed=0, bracket: tuple = (0.3, 4.0),
                c_tol: float = 1e-4) -> BoundaryShape:
    """Find the boundary scale c with fwer(design, shape(c)) == alpha.

    Bisection with common random numbers (the same integration seed at every
    trial c), so the objective is a smooth monotone function of c.  The default
    bracket is widened automatically if alpha falls outside it.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")

    def f(c: float) -> float:
        b = shape_boundaries(BoundaryShape(kind, c), design.J)
        return fwer(design, b, tol=tol, seed=seed).value - alpha

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    while flo < 0.0 and lo > 1e-6:  # alpha too big for the bracket: shrink c
        hi, fhi = lo, flo
        lo /= 4.0
        flo = f(lo)
    while fhi > 0.0 and hi < 64.0:  # alpha too small: grow c
        lo, flo = hi, fhi
        hi *= 2.0
        fhi = f(hi)
    if not (flo >= 0.0 >= fhi):
        # an endpoint of the expansion range may already achieve alpha within
        # the calibration slack (e.g. alpha = 1/2 forces u_1 -> 0)
        c_end, f_end = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
        if abs(f_end) <= 5e-5:
            return BoundaryShape(kind, c_end)
        raise ValueError("could not bracket alpha=%g with c in [%g, %g]"
                         % (alpha, lo, hi))
    fmid = None
    while hi - lo > c_tol:
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid > 0.0:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    # tighten until the achieved error rate is within 5e-5 of alpha
    while abs(f(c)) > 5e-5 and hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        c = 0.5 * (lo + hi)
    return BoundaryShape(kind, c)


def pairwise_power(design: TrialDesign, bounds: Boundaries,
                   theta: float, tol: float = 1e-6, seed=0) -> PowerResult:
    """Power of the one-treatment group-sequential comparison at effect theta:
    the chance the single arm crosses its upper bound at some analysis."""
    sub = TrialDesign(K=1, J=design.J, n=design.n, entry=(0, 0),
                      sigma=design.sigma)
    sc = Scenario((0.0, theta))
    terms = []
    for j in range(1, sub.J + 1):
        term = _within(bounds, 1, j - 1)
        term.append(Constraint(ZIndex(1, 0, j), bounds.upper[j - 1], _INF))
        terms.append(tuple(term))
    spec = EventSpec(tuple(terms), disjoint=True)
    return event_prob(sub, sc, spec, tol=tol, seed=seed)


def find_sample_size(design: TrialDesign, kind: str, alpha: float,
                     target_power: float, theta1: float, tol: float = 1e-6,
                     seed=0, n_cap: int = 100000) -> dict:
    """Smallest per-arm-per-stage cohort n meeting the pairwise power target.

    The supplied design fixes K, J, sigma and the entry pattern (entries scale
    with n); the boundary scale is calibrated once, since the standardized null
    law does not depend on n.
    """
    if not 0.0 < target_power < 1.0:
        raise ValueError("target power must lie strictly between 0 and 1")
    offsets = tuple(e // design.n for e in design.entry)
    shape = calibrate_c(design, kind, alpha, tol=tol, seed=seed)
    bounds = shape_boundaries(shape, design.J)

    def build(n: int) -> TrialDesign:
        return TrialDesign(K=design.K, J=design.J, n=n,
                           entry=tuple(o * n for o in offsets),
                           sigma=design.sigma)

    def achieved(n: int) -> float:
        return pairwise_power(build(n), bounds, theta1, tol=tol, seed=seed).value

    lo, hi = 0, 1
    while achieved(hi) < target_power:
        lo = hi
        hi *= 2
        if hi > n_cap:
            raise ValueError("target power %g not reachable with n <= %d"
                             % (target_power, n_cap))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if achieved(mid) >= target_power:
            hi = mid
        else:
            lo = mid
    n = hi
    final = build(n)
    return {
        "n": n,
        "shape": shape,
        "bounds": bounds,
        "pairwise_power": achieved(n),
        "per_arm_max": design.J * n,
        "max_total_sample_size": max_total_sample_size(final),
    }
