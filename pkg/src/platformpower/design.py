"""Trial geometry, effect scenarios, stopping boundaries, and statistic indexing.

A platform design has ``K`` experimental arms tested against a shared control at
``J`` analyses each, with ``n`` patients per arm per stage.  Arms may enter late
(``entry[k]`` patients after the trial start, a multiple of ``n``); the control
recruits continuously from accrual 0.  The first arm to cross its upper boundary
becomes the new control for every remaining comparison; statistics against the
new control either retain all concurrent data ("retain") or use only data
gathered after the change ("post").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

POLICY_RETAIN = "retain"
POLICY_POST = "post"

#: Data policies selectable at the analysis level (CLI / power requests).
DATA_POLICIES = ("retain", "discard")


@dataclass(frozen=True)
class TrialDesign:
    """Immutable trial geometry.

    Fields mirror the JSON serialization exactly: ``K``, ``J``, ``n``,
    ``entry`` (length K+1, ``entry[0] = 0`` for the initial control, each a
    multiple of ``n``), ``sigma``.
    """

    K: int
    J: int
    n: int
    entry: tuple[int, ...] = None  # type: ignore[assignment]
    sigma: float = 1.0

    def __post_init__(self):
        if self.entry is None:
            object.__setattr__(self, "entry", (0,) * (self.K + 1))
        else:
            object.__setattr__(self, "entry", tuple(int(e) for e in self.entry))
        if not isinstance(self.K, int) or self.K < 1:
            raise ValueError("arm count: K must be an integer >= 1")
        if not isinstance(self.J, int) or self.J < 1:
            raise ValueError("stage count: J must be an integer >= 1")
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("cohort size: n must be an integer >= 1")
        if len(self.entry) != self.K + 1:
            raise ValueError("entry length: entry must have K+1 offsets (control first)")
        if self.entry[0] != 0:
            raise ValueError("control entry: entry[0] must be 0")
        for k, e in enumerate(self.entry):
            if e < 0:
                raise ValueError("entry sign: entry offsets must be >= 0")
            if e % self.n != 0:
                raise ValueError("entry alignment: entry[%d]=%d is not a multiple of n=%d"
                                 % (k, e, self.n))
        if not (float(self.sigma) > 0.0):
            raise ValueError("outcome sd: sigma must be > 0")
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def arms(self) -> range:
        """Active arm indices 1..K (the control is arm 0)."""
        return range(1, self.K + 1)


def accrual(design: TrialDesign, k: int, j: int) -> int:
    """Number of patients recruited to arm ``k`` by its stage-``j`` analysis.

    ``j = 0`` gives the entry offset; the control (``k = 0``) has a derived
    accrual index on the same grid.
    """
    if not 0 <= k <= design.K:
        raise ValueError("arm index out of range")
    if not 0 <= j <= design.J:
        raise ValueError("stage out of range: 0 <= j <= J required")
    return design.entry[k] + j * design.n


def max_total_sample_size(design: TrialDesign) -> int:
    """Largest possible patient total: K full arms plus the control stream.

    The control recruits until the last possible analysis of any arm, i.e.
    ``max_k entry[k] + J*n`` patients.
    """
    per_arms = design.K * design.J * design.n
    control = max(accrual(design, k, design.J) for k in design.arms)
    return per_arms + control


@dataclass(frozen=True)
class Boundaries:
    """Upper/lower z-scale stopping boundaries, one pair per stage.

    ``lower`` entries may be ``-inf`` (no futility stop at that stage) but the
    final entries must coincide (``l_J = u_J``) so the last analysis forces a
    decision.  ``lower_binding=False`` means the futility bounds still guide
    trial conduct but are ignored when computing the familywise error rate.
    """

    upper: tuple[float, ...]
    lower: tuple[float, ...]
    lower_binding: bool = True

    def __post_init__(self):
        object.__setattr__(self, "upper", tuple(float(u) for u in self.upper))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        if len(self.upper) == 0:
            raise ValueError("boundary length: at least one stage required")
        if len(self.upper) != len(self.lower):
            raise ValueError("boundary length: upper and lower must have equal length")
        for u in self.upper:
            if not math.isfinite(u):
                raise ValueError("upper finiteness: upper boundaries must be finite")
        for u, l in zip(self.upper, self.lower):
            if l > u:
                raise ValueError("boundary order: l_j <= u_j required at every stage")
        if not self.lower[-1] == self.upper[-1]:
            raise ValueError("binding final: l_J must equal u_J")

    @property
    def J(self) -> int:
        return len(self.upper)


@dataclass(frozen=True)
class Scenario:
    """True mean responses (mu[0] is the control mean)."""

    mu: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))

    def check(self, design: TrialDesign) -> None:
        if len(self.mu) != design.K + 1:
            raise ValueError("scenario length: mu must have K+1 entries")


@dataclass(frozen=True)
class ZIndex:
    """Label of one test statistic.

    ``policy="retain"`` indexes Z(k, kprime, j): arm ``k`` versus comparator
    ``kprime`` on all concurrent data up to arm k's stage-``j`` analysis.
    ``policy="post"`` indexes the post-change-only statistic and additionally
    records ``jprime``, the stage at which ``kprime`` became the control.
    """

    k: int
    kprime: int
    j: int
    policy: str = POLICY_RETAIN
    jprime: int | None = None

    def __post_init__(self):
        if self.k == self.kprime:
            raise ValueError("statistic arms: k and kprime must differ")
        if self.k < 1:
            raise ValueError("statistic arms: active arm k must be >= 1")
        if self.kprime < 0:
            raise ValueError("statistic arms: comparator must be >= 0")
        if self.j < 1:
            raise ValueError("statistic stage: j must be >= 1")
        if self.policy not in (POLICY_RETAIN, POLICY_POST):
            raise ValueError("statistic policy: must be 'retain' or 'post'")
        if self.policy == POLICY_POST and self.jprime is None:
            raise ValueError("statistic policy: post-change index requires jprime")
        if self.policy == POLICY_RETAIN and self.jprime is not None:
            raise ValueError("statistic policy: retain index must not carry jprime")


def stat_window(design: TrialDesign, idx: ZIndex) -> tuple[int, int]:
    """Half-open patient-index window (start, stop] whose sums form the statistic.

    Both arms of the comparison contribute exactly the patients they recruited
    in this window, so only concurrent controls ever enter a statistic.
    """
    start = max(design.entry[idx.k], design.entry[idx.kprime])
    if idx.policy == POLICY_POST:
        start = max(start, accrual(design, idx.kprime, idx.jprime))
    stop = accrual(design, idx.k, idx.j)
    if stop <= start:
        raise ValueError("empty information window for statistic %r" % (idx,))
    return start, stop


def stat_key(design: TrialDesign, idx: ZIndex) -> tuple[int, int, int, int]:
    """Canonical identity of a statistic: aliases (e.g. a post-change statistic
    whose window coincides with the retain form) share a key."""
    start, stop = stat_window(design, idx)
    return (idx.k, idx.kprime, start, stop)


def validate_design(design: TrialDesign, bounds: Boundaries) -> None:
    """Check every structural invariant of the pair; raise ValueError naming the
    first violated one.  Type constructors already enforce their local
    invariants, so this mainly guards cross-object consistency."""
    # reconstruct to re-run local validation on possibly hand-mutated objects
    TrialDesign(design.K, design.J, design.n, design.entry, design.sigma)
    Boundaries(bounds.upper, bounds.lower, bounds.lower_binding)
    if bounds.J != design.J:
        raise ValueError("boundary length: bounds must have exactly J stages")


# ---------------------------------------------------------------------------
# JSON serialization (field names are part of the external interface)

def design_to_dict(design: TrialDesign) -> dict:
    return {"K": design.K, "J": design.J, "n": design.n,
            "entry": list(design.entry), "sigma": design.sigma}


def design_from_dict(obj: dict) -> TrialDesign:
    try:
        return TrialDesign(K=int(obj["K"]), J=int(obj["J"]), n=int(obj["n"]),
                           entry=tuple(obj.get("entry", [0] * (int(obj["K"]) + 1))),
                           sigma=float(obj.get("sigma", 1.0)))
    except KeyError as exc:
        raise ValueError("design document missing field %s" % exc) from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    return {"mu": list(scenario.mu)}


def scenario_from_dict(obj: dict) -> Scenario:
    if "mu" not in obj:
        raise ValueError("scenario document missing field 'mu'")
    return Scenario(mu=tuple(obj["mu"]))


def bounds_to_dict(bounds: Boundaries) -> dict:
    lower = [None if v == -math.inf else v for v in bounds.lower]
    out = {"upper": list(bounds.upper), "lower": lower}
    if not bounds.lower_binding:
        out["lower_binding"] = False
    return out


def bounds_from_dict(obj: dict) -> Boundaries:
    if "upper" not in obj:
        raise ValueError("boundary document missing field 'upper'")
    upper = tuple(float(u) for u in obj["upper"])
    raw_lower = obj.get("lower")
    if raw_lower is None:
        lower = tuple([-math.inf] * (len(upper) - 1) + [upper[-1]])
    else:
        lower = tuple(-math.inf if v is None else float(v) for v in raw_lower)
    return Boundaries(upper=upper, lower=lower,
                      lower_binding=bool(obj.get("lower_binding", True)))
