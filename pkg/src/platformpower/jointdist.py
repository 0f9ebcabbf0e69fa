"""Exact joint normal law of any collection of test statistics.

Every statistic is a normalized difference of two arms' outcome sums over a
patient-index window (see :func:`platformpower.design.stat_window`); means and
correlations therefore follow from which windows overlap on which arms.  The
correlation cases below mirror that window algebra: sharing the active arm or
the comparator contributes positive overlap, an arm that is active in one
statistic and comparator in the other contributes negative overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import (POLICY_POST, POLICY_RETAIN, Scenario, TrialDesign, ZIndex,
                     accrual, stat_key, stat_window)

#: eigenvalues above this (negative) floor count as positive semidefinite
PSD_TOL = 1e-10


class StructuralError(ValueError):
    """A statistic pairing that cannot occur in any realizable trial path, or a
    matrix failure that signals a formula bug rather than user error."""


def z_mean(design: TrialDesign, scenario: Scenario, idx: ZIndex) -> float:
    """Mean of the statistic under the scenario: (mu_k - mu_k') sqrt(m) / (sigma sqrt(2))
    with m the information-window length."""
    scenario.check(design)
    start, stop = stat_window(design, idx)
    drift = scenario.mu[idx.k] - scenario.mu[idx.kprime]
    return drift * math.sqrt(stop - start) / (design.sigma * math.sqrt(2.0))


def _entry(design: TrialDesign, k: int) -> int:
    return design.entry[k]


def z_corr(design: TrialDesign, a: ZIndex, b: ZIndex) -> float:
    """Correlation between two retain-policy statistics.

    Implements the five shared-arm cases, after canonically ordering the pair
    by (accrual, k, kprime) so the smaller-accrual statistic comes first.
    Pairings in which an arm appears as a comparator strictly before it appears
    as an active arm are unreachable (a control never reverts to active) and
    raise StructuralError, as does a mutually mirrored pair.
    """
    if a.policy != POLICY_RETAIN or b.policy != POLICY_RETAIN:
        raise StructuralError("z_corr applies to retain-policy statistics only")
    na, nb = accrual(design, a.k, a.j), accrual(design, b.k, b.j)
    if (na, a.k, a.kprime) > (nb, b.k, b.kprime):
        a, b, na, nb = b, a, nb, na
    e = design.entry
    start_a = max(e[a.k], e[a.kprime])
    start_b = max(e[b.k], e[b.kprime])
    m_a, m_b = na - start_a, nb - start_b
    if m_a <= 0 or m_b <= 0:
        raise ValueError("empty information window")
    shared_active = a.k == b.k
    shared_comp = a.kprime == b.kprime
    a_act_is_b_comp = a.k == b.kprime
    a_comp_is_b_act = a.kprime == b.k

    if shared_active and shared_comp:
        # same comparison at two stages: nested windows
        return math.sqrt(m_a / m_b)
    if shared_active:
        num = max(0, na - max(e[a.k], e[a.kprime], e[b.kprime]))
        return num / (2.0 * math.sqrt(m_a * m_b))
    if shared_comp:
        num = max(0, na - max(e[a.k], e[b.k], e[a.kprime]))
        return num / (2.0 * math.sqrt(m_a * m_b))
    if a_act_is_b_comp and a_comp_is_b_act:
        raise StructuralError("mirrored statistic pair (k1=k2', k1'=k2) is not a "
                              "distinct measurement")
    if a_act_is_b_comp:
        # a's active arm later serves as b's control: reachable promotion
        num = max(0, na - max(e[a.k], e[a.kprime], e[b.k]))
        return -num / (2.0 * math.sqrt(m_a * m_b))
    if a_comp_is_b_act:
        # a's comparator would need to become active again at a later analysis
        if nb > na:
            raise StructuralError("arm %d appears as comparator at accrual %d but as "
                                  "active arm at later accrual %d; a control cannot "
                                  "revert to active" % (a.kprime, na, nb))
        # equal accruals: the pair is realizable (tie-break statistics); mirror case 3
        num = max(0, nb - max(e[b.k], e[b.kprime], e[a.k]))
        return -num / (2.0 * math.sqrt(m_a * m_b))
    return 0.0


def z_corr_post(design: TrialDesign, a: ZIndex, b: ZIndex) -> float:
    """Correlation between two post-change statistics of the same comparison.

    Both indices must carry the same (k, kprime, jprime); the shared window
    start makes the windows nested, giving sqrt(m_min / m_max).
    """
    if a.policy != POLICY_POST or b.policy != POLICY_POST:
        raise StructuralError("z_corr_post applies to post-change statistics only")
    if (a.k, a.kprime, a.jprime) != (b.k, b.kprime, b.jprime):
        raise StructuralError("post-change correlation requires matching (k, k', j')")
    sa = stat_window(design, a)
    sb = stat_window(design, b)
    m_a, m_b = sa[1] - sa[0], sb[1] - sb[0]
    return math.sqrt(min(m_a, m_b) / max(m_a, m_b))


def _window_overlap(design: TrialDesign, a: ZIndex, b: ZIndex) -> list[int]:
    """Signed per-arm-pair overlaps between the two statistics' windows (used to
    justify treating mixed retain/post pairs as independent)."""
    wa, wb = stat_window(design, a), stat_window(design, b)
    out = []
    for arm_a, sign_a in ((a.k, 1), (a.kprime, -1)):
        for arm_b, sign_b in ((b.k, 1), (b.kprime, -1)):
            if arm_a != arm_b:
                continue
            lo = max(wa[0], wb[0])
            hi = min(wa[1], wb[1])
            out.append(sign_a * sign_b * max(0, hi - lo))
    return out


def _pair_corr(design: TrialDesign, a: ZIndex, b: ZIndex) -> float:
    if a.policy == POLICY_RETAIN and b.policy == POLICY_RETAIN:
        return z_corr(design, a, b)
    if a.policy == POLICY_POST and b.policy == POLICY_POST:
        return z_corr_post(design, a, b)
    # mixed policies: a pre-change statistic never overlaps a post-change window,
    # so the pair is independent; anything else is a joint the model cannot express.
    if any(o != 0 for o in _window_overlap(design, a, b)):
        raise StructuralError("retain statistic %r overlaps post-change statistic %r; "
                              "their joint law is outside this model" % (a, b))
    return 0.0


@dataclass(frozen=True)
class JointNormal:
    """Mean vector and correlation matrix over an ordered set of statistics."""

    indices: tuple[ZIndex, ...]
    mean: np.ndarray
    corr: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.indices)


def assemble_joint(design: TrialDesign, scenario: Scenario,
                   indices: list[ZIndex] | tuple[ZIndex, ...]) -> JointNormal:
    """Build the joint law of the given statistics.

    Aliased indices (identical arms and information window, e.g. a post-change
    statistic of an arm entering exactly at the change) are deduplicated.
    Raises StructuralError if the resulting matrix is not PSD within 1e-10 —
    that indicates a correlation-formula bug, never a user error.
    """
    kept: list[ZIndex] = []
    seen: dict[tuple, int] = {}
    for idx in indices:
        key = stat_key(design, idx)
        if key not in seen:
            seen[key] = len(kept)
            kept.append(idx)
    d = len(kept)
    if d == 0:
        raise ValueError("assemble_joint needs at least one index")
    mean = np.array([z_mean(design, scenario, idx) for idx in kept])
    corr = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            rho = _pair_corr(design, kept[i], kept[j])
            if abs(rho) > 1.0 + 1e-12:
                raise StructuralError("correlation out of range for %r, %r" %
                                      (kept[i], kept[j]))
            corr[i, j] = corr[j, i] = min(1.0, max(-1.0, rho))
    if d > 1:
        lo = float(np.linalg.eigvalsh(corr)[0])
        if lo < -PSD_TOL:
            raise StructuralError("correlation matrix not PSD (min eigenvalue %.3e); "
                                  "this is a formula bug" % lo)
    return JointNormal(indices=tuple(kept), mean=mean, corr=corr)
