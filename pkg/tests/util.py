"""Shared oracles for the test suite.

Everything here recomputes quantities from first principles -- cohort outcome
sums drawn with numpy's default generator, statistics assembled directly from
their window definitions -- so that agreement with the library is a genuine
cross-check rather than the same code called twice.
"""

import math

import numpy as np

from platformpower import TrialDesign, accrual, stat_window


def lane_sums(design: TrialDesign, scenario, reps: int,
              rng: np.random.Generator):
    """Cumulative outcome sums for every arm on the cohort grid.

    Returns {arm: (start, cumsum array of shape (reps, ncohorts+1))} where
    cumsum[:, i] is the sum over patients recruited in (start, start + i*n]."""
    max_t = max(accrual(design, k, design.J) for k in design.arms)
    out = {}
    for k in range(design.K + 1):
        start = 0 if k == 0 else design.entry[k]
        ncoh = (max_t - start) // design.n
        draws = rng.normal(scenario.mu[k] * design.n,
                           design.sigma * math.sqrt(design.n),
                           size=(reps, ncoh))
        out[k] = (start, np.concatenate(
            [np.zeros((reps, 1)), np.cumsum(draws, axis=1)], axis=1))
    return out


def stat_samples(design: TrialDesign, sums, idx):
    """Realized values of one standardized comparison from lane sums."""
    lo, hi = stat_window(design, idx)

    def wsum(k):
        start, cs = sums[k]
        return cs[:, (hi - start) // design.n] - cs[:, (lo - start) // design.n]

    m = hi - lo
    return (wsum(idx.k) - wsum(idx.kprime)) / (design.sigma * math.sqrt(2.0 * m))


def mc_stats(design: TrialDesign, scenario, indices, reps=200000, seed=0):
    """Matrix of statistic draws (reps, len(indices)) by direct resampling."""
    rng = np.random.default_rng(seed)
    sums = lane_sums(design, scenario, reps, rng)
    return np.column_stack([stat_samples(design, sums, ix) for ix in indices])


def event_member(spec, values: dict) -> np.ndarray:
    """Boolean membership of an EventSpec union given sampled statistics.

    `values` maps ZIndex -> (reps,) array of draws."""
    reps = next(iter(values.values())).shape[0]
    hit = np.zeros(reps, dtype=bool)
    for term in spec.terms:
        inside = np.ones(reps, dtype=bool)
        for c in term:
            v = values[c.idx]
            inside &= (v > c.lo) & (v <= c.hi)
        hit |= inside
    return hit


def mc_event_prob(design: TrialDesign, scenario, spec, reps=200000, seed=0):
    """Patient-resampling estimate of P(spec) with its binomial SE."""
    rng = np.random.default_rng(seed)
    sums = lane_sums(design, scenario, reps, rng)
    indices = {c.idx for term in spec.terms for c in term}
    values = {ix: stat_samples(design, sums, ix) for ix in indices}
    hit = event_member(spec, values)
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / reps)
