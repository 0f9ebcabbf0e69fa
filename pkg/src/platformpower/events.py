"""Trial events expressed as unions of axis-aligned constraint boxes.

Every quantity of interest (a control change at a given analysis, survival of
an arm to the change, rejection afterwards) is a statement about the joint
normal vector of standardized comparisons.  We represent such a statement as an
EventSpec: a union of conjunctive terms, each term a list of interval
constraints on individual statistics.  Terms built here are pairwise disjoint
by construction; `disjointify` repairs arbitrary unions.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

from .design import Boundaries, TrialDesign, ZIndex, accrual

_INF = math.inf


@dataclass(frozen=True)
class Constraint:
    """lo < Z <= hi for one statistic (either bound may be infinite)."""

    idx: ZIndex
    lo: float = -_INF
    hi: float = _INF

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("constraint interval is empty: (%r, %r]" % (self.lo, self.hi))
        if not (math.isfinite(self.lo) or math.isfinite(self.hi)):
            raise ValueError("constraint must bound at least one side")


@dataclass(frozen=True)
class EventSpec:
    """Union of conjunctive terms.  `disjoint` certifies pairwise disjointness.

    The empty conjunction () denotes the sure event; an EventSpec with no terms
    denotes the impossible one.
    """

    terms: tuple
    disjoint: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(tuple(t) for t in self.terms))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def to_json(self) -> str:
        def enc(x):
            return None if not math.isfinite(x) else x
        payload = {
            "disjoint": self.disjoint,
            "terms": [[{"k": c.idx.k, "kprime": c.idx.kprime, "j": c.idx.j,
                        "policy": c.idx.policy, "jprime": c.idx.jprime,
                        "lo": enc(c.lo), "hi": enc(c.hi)} for c in term]
                      for term in self.terms],
        }
        return json.dumps(payload, indent=2)


def sure_event() -> EventSpec:
    return EventSpec(((),), disjoint=True)


def impossible_event() -> EventSpec:
    return EventSpec((), disjoint=True)


def last_stage_at_or_before(design: TrialDesign, k: int, cutoff: int) -> int:
    """Largest stage j (0 meaning none) with accrual(k, j) <= cutoff."""
    last = 0
    for j in range(1, design.J + 1):
        if accrual(design, k, j) <= cutoff:
            last = j
    return last


def _within(bounds: Boundaries, k: int, upto: int) -> list:
    """Constraints keeping arm k vs control inside (l_i, u_i] for i=1..upto."""
    out = []
    for i in range(1, upto + 1):
        out.append(Constraint(ZIndex(k, 0, i), bounds.lower[i - 1], bounds.upper[i - 1]))
    return out


def event_E1(design: TrialDesign, bounds: Boundaries, kprime: int,
             jprime: int) -> EventSpec:
    """Arm kprime is the first to cross: within bounds before analysis jprime,
    above the upper bound there."""
    if not 1 <= kprime <= design.K:
        raise ValueError("kprime out of range")
    if not 1 <= jprime <= design.J:
        raise ValueError("jprime out of range")
    term = _within(bounds, kprime, jprime - 1)
    term.append(Constraint(ZIndex(kprime, 0, jprime), bounds.upper[jprime - 1], _INF))
    return EventSpec((tuple(term),), disjoint=True)


def event_E2(design: TrialDesign, bounds: Boundaries, kstar: int, kprime: int,
             jprime: int) -> EventSpec:
    """Arm kstar is still in the trial when kprime becomes control at jprime."""
    if kstar == kprime:
        raise ValueError("kstar must differ from the new control")
    cutoff = accrual(design, kprime, jprime)
    if accrual(design, kstar, 1) > cutoff:
        # first analysis of kstar happens after the change: nothing to survive
        return sure_event()
    jhat = last_stage_at_or_before(design, kstar, cutoff)
    within = _within(bounds, kstar, jhat - 1)
    if accrual(design, kstar, jhat) < cutoff:
        if jhat == design.J:
            # kstar's final analysis resolved it before the change happened
            return impossible_event()
        term = within + [Constraint(ZIndex(kstar, 0, jhat),
                                    bounds.lower[jhat - 1], bounds.upper[jhat - 1])]
        return EventSpec((tuple(term),), disjoint=True)
    # analysis jhat of kstar is simultaneous with the change: either kstar stays
    # inside its bounds, or it also crossed but lost the pairwise comparison
    lose = within + [Constraint(ZIndex(kstar, 0, jhat), bounds.upper[jhat - 1], _INF),
                     Constraint(ZIndex(kstar, kprime, jhat), -_INF, 0.0)]
    if jhat == design.J:
        # the final-stage interval (l_J, u_J] is empty: only a lost tie keeps
        # kstar around past its own last analysis
        return EventSpec((tuple(lose),), disjoint=True)
    stay = within + [Constraint(ZIndex(kstar, 0, jhat),
                                bounds.lower[jhat - 1], bounds.upper[jhat - 1])]
    return EventSpec((tuple(stay), tuple(lose)), disjoint=True)


def _survival_terms(design: TrialDesign, bounds: Boundaries, k: int,
                    kprime: int, cutoff: int) -> list:
    """Disjoint terms for 'arm k never beat the control before the change':
    it either dropped for futility at some pre-change analysis or stayed inside
    bounds throughout (losing any simultaneous pairwise comparison)."""
    jhat = last_stage_at_or_before(design, k, cutoff)
    terms = []
    for i in range(1, jhat):
        if not math.isfinite(bounds.lower[i - 1]):
            continue  # no futility stop at this analysis
        terms.append(tuple(_within(bounds, k, i - 1) +
                           [Constraint(ZIndex(k, 0, i), -_INF, bounds.lower[i - 1])]))
    within = _within(bounds, k, jhat - 1)
    if accrual(design, k, jhat) < cutoff:
        terms.append(tuple(within + [Constraint(ZIndex(k, 0, jhat), -_INF,
                                                bounds.upper[jhat - 1])]))
    else:
        terms.append(tuple(within + [Constraint(ZIndex(k, 0, jhat), -_INF,
                                                bounds.upper[jhat - 1])]))
        terms.append(tuple(within +
                           [Constraint(ZIndex(k, 0, jhat), bounds.upper[jhat - 1], _INF),
                            Constraint(ZIndex(k, kprime, jhat), -_INF, 0.0)]))
    return terms


def event_E3(design: TrialDesign, bounds: Boundaries, kstar: int, kprime: int,
             jprime: int) -> EventSpec:
    """No arm other than kstar and kprime beat the control at or before the
    change (each either dropped, stayed within bounds, or lost the tie-break)."""
    cutoff = accrual(design, kprime, jprime)
    per_arm = []
    for k in design.arms:
        if k in (kstar, kprime):
            continue
        if accrual(design, k, 1) > cutoff:
            continue  # not yet analyzed by the change
        per_arm.append(_survival_terms(design, bounds, k, kprime, cutoff))
    if not per_arm:
        return sure_event()
    terms = [tuple(itertools.chain.from_iterable(combo))
             for combo in itertools.product(*per_arm)]
    return EventSpec(tuple(terms), disjoint=True)


def event_E4(design: TrialDesign, bounds: Boundaries, kstar: int, kprime: int,
             jprime: int, policy: str = "retain") -> EventSpec:
    """Arm kstar beats the new control kprime at some remaining analysis."""
    if policy not in ("retain", "discard"):
        raise ValueError("policy must be 'retain' or 'discard'")
    cutoff = accrual(design, kprime, jprime)
    if accrual(design, kstar, design.J) <= cutoff:
        raise ValueError("no analyses of kstar remain after the control change")
    jhat = last_stage_at_or_before(design, kstar, cutoff)

    def stat(i):
        if policy == "retain":
            return ZIndex(kstar, kprime, i)
        return ZIndex(kstar, kprime, i, policy="post", jprime=jprime)

    terms = []
    for j in range(jhat + 1, design.J + 1):
        term = [Constraint(stat(i), bounds.lower[i - 1], bounds.upper[i - 1])
                for i in range(jhat + 1, j)]
        term.append(Constraint(stat(j), bounds.upper[j - 1], _INF))
        terms.append(tuple(term))
    return EventSpec(tuple(terms), disjoint=True)


def intersect_events(*specs: EventSpec) -> EventSpec:
    """Conjunction of events; the result is disjoint when every input was."""
    if not specs:
        return sure_event()
    terms = [()]
    for spec in specs:
        terms = [a + b for a in terms for b in spec.terms]
    merged = []
    for term in terms:
        md = _merge_term(term)
        if md is not None:
            merged.append(_dict_to_term(md))
    return EventSpec(tuple(merged), disjoint=all(s.disjoint for s in specs))


def _zkey(idx: ZIndex):
    return (idx.k, idx.kprime, idx.j, idx.policy, -1 if idx.jprime is None else idx.jprime)


def _merge_term(term) -> dict | None:
    """Intersect the constraints of one term per statistic.  None if empty."""
    box: dict[ZIndex, tuple[float, float]] = {}
    for c in term:
        lo, hi = box.get(c.idx, (-_INF, _INF))
        lo, hi = max(lo, c.lo), min(hi, c.hi)
        if not lo < hi:
            return None
        box[c.idx] = (lo, hi)
    return box

def _dict_to_term(box: dict) -> tuple:
    return tuple(Constraint(idx, lo, hi)
                 for idx, (lo, hi) in sorted(box.items(), key=lambda kv: _zkey(kv[0])))


def _subtract(p: dict, d: dict) -> list:
    """Pieces of box p not in box d, as disjoint boxes."""
    out = []
    prefix = dict(p)
    for v in sorted(d.keys(), key=_zkey):
        dlo, dhi = d[v]
        plo, phi = prefix.get(v, (-_INF, _INF))
        if dlo > plo:
            hi2 = min(phi, dlo)
            if hi2 > plo:
                piece = dict(prefix)
                piece[v] = (plo, hi2)
                out.append(piece)
        if dhi < phi:
            lo2 = max(plo, dhi)
            if lo2 < phi:
                piece = dict(prefix)
                piece[v] = (lo2, phi)
                out.append(piece)
        nlo, nhi = max(plo, dlo), min(phi, dhi)
        if not nlo < nhi:
            break  # p no longer meets d; collected pieces already cover p
        prefix[v] = (nlo, nhi)
    return out


def disjointify(spec: EventSpec) -> EventSpec:
    """Equivalent EventSpec whose terms are pairwise disjoint boxes."""
    if spec.disjoint:
        return spec
    settled: list[dict] = []
    for term in spec.terms:
        box = _merge_term(term)
        if box is None:
            continue
        pieces = [box]
        for prior in settled:
            pieces = [q for p in pieces for q in _subtract(p, prior)]
            if not pieces:
                break
        settled.extend(pieces)
    return EventSpec(tuple(_dict_to_term(b) for b in settled), disjoint=True)
