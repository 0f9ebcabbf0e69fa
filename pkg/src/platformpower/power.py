"""Operating characteristics by numerical integration.

All probabilities flow through `event_prob`, which turns an EventSpec into a
sum of multivariate-normal rectangle integrals.  Conditional power follows the
ratio definition P(reject | change observed); overall power accumulates the
win-and-reject routes over every possible control change.  Every estimate is
returned as a PowerResult(value, err) pair so downstream reports can carry the
integration error alongside the value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .design import (Boundaries, Scenario, TrialDesign, ZIndex, accrual,
                     stat_key)
from .events import (EventSpec, disjointify, event_E1, event_E2, event_E3,
                     event_E4, intersect_events)
from .jointdist import assemble_joint
from .mvn import Rectangle, mvn_rect_prob


class NotEstimableError(RuntimeError):
    """Conditioning event too rare for the requested tolerance."""


class PowerResult(NamedTuple):
    value: float
    err: float


@dataclass(frozen=True)
class PowerRequest:
    """One conditional-power query: the change (kprime, jprime) and the arm
    kstar whose rejection chance is wanted under the given data policy."""

    design: TrialDesign
    bounds: Boundaries
    scenario: Scenario
    kstar: int
    kprime: int
    jprime: int
    policy: str = "retain"


def _seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _term_rectangle(design: TrialDesign, term):
    """Collapse a conjunctive term to (indices, lo, hi), merging constraints
    that address the same underlying data window under different labels."""
    merged: dict = {}
    order = []
    for c in term:
        key = stat_key(design, c.idx)
        if key in merged:
            rec = merged[key]
            rec[1] = max(rec[1], c.lo)
            rec[2] = min(rec[2], c.hi)
            if not rec[1] < rec[2]:
                return None
        else:
            merged[key] = [c.idx, c.lo, c.hi]
            order.append(key)
    idxs = [merged[k][0] for k in order]
    lo = np.array([merged[k][1] for k in order])
    hi = np.array([merged[k][2] for k in order])
    return idxs, lo, hi


def event_prob(design: TrialDesign, scenario: Scenario, spec: EventSpec,
               tol: float = 1e-5, seed=0) -> PowerResult:
    """Probability of an EventSpec under the scenario's joint normal law."""
    spec = spec if spec.disjoint else disjointify(spec)
    if spec.n_terms == 0:
        return PowerResult(0.0, 0.0)
    term_tol = tol / math.sqrt(spec.n_terms)
    children = _seedseq(seed).spawn(spec.n_terms)
    total = 0.0
    var = 0.0
    for term, child in zip(spec.terms, children):
        if not term:
            total += 1.0
            continue
        packed = _term_rectangle(design, term)
        if packed is None:
            continue
        idxs, lo, hi = packed
        jn = assemble_joint(design, scenario, idxs)
        p, e = mvn_rect_prob(jn, Rectangle(lo, hi), tol=term_tol, seed=child)
        total += p
        var += e * e
    return PowerResult(min(max(total, 0.0), 1.0), math.sqrt(var))


def conditional_power(req: PowerRequest, tol: float = 1e-5,
                      seed=0) -> PowerResult:
    """P(kstar is rejected as superior | kprime became control at jprime).

    Returns 0 when kstar has no analyses left after the change.  Raises
    NotEstimableError when the conditioning event is too rare to certify the
    ratio at the requested tolerance.
    """
    d, b = req.design, req.bounds
    req.scenario.check(d)
    if not 1 <= req.kprime <= d.K or req.kprime == req.kstar:
        raise ValueError("kprime must name a treatment arm other than kstar")
    if not 1 <= req.jprime <= d.J:
        raise ValueError("jprime out of range")
    cutoff = accrual(d, req.kprime, req.jprime)
    if accrual(d, req.kstar, d.J) <= cutoff:
        return PowerResult(0.0, 0.0)
    if req.policy == "discard":
        spec = event_E4(d, b, req.kstar, req.kprime, req.jprime, policy="discard")
        return event_prob(d, req.scenario, spec, tol=tol, seed=seed)
    if req.policy != "retain":
        raise ValueError("policy must be 'retain' or 'discard'")
    ss = _seedseq(seed)
    s_den, s_num = ss.spawn(2)
    den_spec = intersect_events(
        event_E1(d, b, req.kprime, req.jprime),
        event_E2(d, b, req.kstar, req.kprime, req.jprime),
        event_E3(d, b, req.kstar, req.kprime, req.jprime))
    den = event_prob(d, req.scenario, den_spec, tol=tol, seed=s_den)
    if den.value < 1e-12:
        raise NotEstimableError(
            "conditioning event probability %.3e is below the certifiable floor"
            % den.value)
    if den.value < 10.0 * tol:
        # rare conditioning event: re-integrate to relative precision so the
        # ratio stays accurate
        den = event_prob(d, req.scenario, den_spec,
                         tol=max(5e-3 * den.value, 1e-12), seed=s_den)
        ratio_tol = 5e-3 * den.value
    else:
        ratio_tol = tol * den.value
    num_spec = intersect_events(
        den_spec, event_E4(d, b, req.kstar, req.kprime, req.jprime, policy="retain"))
    num = event_prob(d, req.scenario, num_spec,
                     tol=max(ratio_tol, 1e-12), seed=s_num)
    value = min(max(num.value / den.value, 0.0), 1.0)
    err = (num.err + value * den.err) / den.value
    return PowerResult(value, err)


def xi(design: TrialDesign, bounds: Boundaries, scenario: Scenario, kstar: int,
       jstar: int, tol: float = 1e-5, seed=0) -> PowerResult:
    """P(kstar is the first arm to cross, doing so at analysis jstar)."""
    spec = intersect_events(event_E1(design, bounds, kstar, jstar),
                            event_E3(design, bounds, kstar, kstar, jstar))
    return event_prob(design, scenario, spec, tol=tol, seed=seed)


def omega(design: TrialDesign, bounds: Boundaries, scenario: Scenario,
          kstar: int, kprime: int, jprime: int, policy: str = "retain",
          tol: float = 1e-5, seed=0) -> PowerResult:
    """P(kprime wins at jprime, kstar survives and is later rejected as
    superior to the new control), under the requested data policy."""
    d, b = design, bounds
    cutoff = accrual(d, kprime, jprime)
    if accrual(d, kstar, d.J) <= cutoff:
        return PowerResult(0.0, 0.0)
    pre_spec = intersect_events(event_E1(d, b, kprime, jprime),
                                event_E2(d, b, kstar, kprime, jprime),
                                event_E3(d, b, kstar, kprime, jprime))
    if policy == "retain":
        spec = intersect_events(pre_spec,
                                event_E4(d, b, kstar, kprime, jprime, "retain"))
        return event_prob(d, scenario, spec, tol=tol, seed=seed)
    if policy != "discard":
        raise ValueError("policy must be 'retain' or 'discard'")
    ss = _seedseq(seed)
    s_pre, s_post = ss.spawn(2)
    pre = event_prob(d, scenario, pre_spec, tol=tol, seed=s_pre)
    post = event_prob(d, scenario,
                      event_E4(d, b, kstar, kprime, jprime, "discard"),
                      tol=tol, seed=s_post)
    value = pre.value * post.value
    err = math.hypot(post.value * pre.err, pre.value * post.err)
    return PowerResult(value, err)


def overall_power(design: TrialDesign, bounds: Boundaries, scenario: Scenario,
                  kstar: int, policy: str = "retain", tol: float = 1e-5,
                  seed=0) -> PowerResult:
    """P(kstar ends up recommended): it either wins the control change itself
    or survives someone else's win and beats the new control."""
    scenario.check(design)
    mus = scenario.mu[1:]
    if scenario.mu[kstar] < max(mus):
        warnings.warn("overall power requested for an arm that is not the "
                      "best under the scenario", UserWarning, stacklevel=2)
    ss = _seedseq(seed)
    parts = []
    children = iter(ss.spawn(design.J + (design.K - 1) * design.J))
    for jstar in range(1, design.J + 1):
        parts.append(xi(design, bounds, scenario, kstar, jstar, tol=tol,
                        seed=next(children)))
    for kprime in design.arms:
        if kprime == kstar:
            continue
        for jprime in range(1, design.J + 1):
            parts.append(omega(design, bounds, scenario, kstar, kprime, jprime,
                               policy=policy, tol=tol, seed=next(children)))
    value = sum(p.value for p in parts)
    err = math.sqrt(sum(p.err ** 2 for p in parts))
    return PowerResult(min(max(value, 0.0), 1.0), err)


def wrong_control_prob(design: TrialDesign, bounds: Boundaries,
                       scenario: Scenario, tol: float = 1e-5,
                       seed=0) -> PowerResult:
    """P(an arm other than the scenario's best wins the first-stage change)."""
    scenario.check(design)
    best = 1 + int(np.argmax(scenario.mu[1:]))
    ss = _seedseq(seed)
    children = iter(ss.spawn(design.K))
    parts = [xi(design, bounds, scenario, k, 1, tol=tol, seed=next(children))
             for k in design.arms if k != best]
    value = sum(p.value for p in parts)
    err = math.sqrt(sum(p.err ** 2 for p in parts))
    return PowerResult(min(max(value, 0.0), 1.0), err)


def retain_benefit_threshold(design: TrialDesign, bounds: Boundaries,
                             kstar: int, kprime: int, jprime: int,
                             j: int) -> float:
    """How much the pre-change data must help for retention to lower the bar.

    For the analysis of kstar vs the new control at stage j, returns the value
    that the standardized pre-change comparison must exceed for the retain
    policy to need a smaller post-change increment than the discard policy.
    """
    shared_start = max(design.entry[kstar], design.entry[kprime])
    cutoff = accrual(design, kprime, jprime)
    stop = accrual(design, kstar, j)
    if stop <= cutoff:
        raise ValueError("stage j must lie after the control change")
    if cutoff <= shared_start:
        raise ValueError("no shared pre-change information at this change")
    u = bounds.upper[j - 1]
    return u * (math.sqrt(stop - shared_start) - math.sqrt(stop - cutoff)) \
        / math.sqrt(cutoff - shared_start)
