"""Multivariate normal rectangle probabilities.

`mvn_rect_prob` is the production integrator: a separation-of-variables
transform to the unit cube (after a rank-revealing Cholesky factorization)
integrated by randomized quasi-Monte Carlo on root-prime lattices with a tent
periodization.  `mvn_mc_prob` is a deliberately independent plain Monte Carlo
oracle used by the test suite; the two must never share an integration route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .jointdist import JointNormal

MAX_DIM = 25
_RANK_TOL = 1e-10
_INDEF_TOL = 1e-8
_SHIFTS = 10
_START_POINTS = 2048
_MAX_POINTS = 1 << 19
_CHUNK = 1 << 15


def _first_primes(count: int) -> np.ndarray:
    primes: list[int] = []
    cand = 2
    while len(primes) < count:
        if all(cand % p for p in primes):
            primes.append(cand)
        cand += 1
    return np.array(primes, dtype=float)


_SQRT_PRIMES = np.sqrt(_first_primes(MAX_DIM))


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned integration region lo < X <= hi (entries may be +-inf)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("rectangle bounds must be equal-length vectors")
        if not np.all(self.lo < self.hi):
            raise ValueError("rectangle requires lo < hi in every coordinate")


def factorize_psd(corr: np.ndarray, priority: list[int] | None = None
                  ) -> tuple[np.ndarray, list[int]]:
    """Rank-revealing Cholesky of a PSD matrix.

    Returns (L, perm) with L lower triangular in the permuted order and
    L @ L.T == corr[perm][:, perm].  Columns are pivoted following `priority`
    (first-listed variables first) except that linearly dependent variables are
    deferred to the end with a zero diagonal.  Raises ValueError on an
    indefinite matrix.
    """
    a = np.asarray(corr, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError("corr must be square")
    order = list(range(d)) if priority is None else list(priority)
    if sorted(order) != list(range(d)):
        raise ValueError("priority must be a permutation of the variable indices")
    rows = np.zeros((d, d))  # partial factor rows, original variable indexing
    resid = a.diagonal().astype(float).copy()
    perm: list[int] = []
    remaining = list(order)
    t = 0
    while remaining:
        pivot = next((r for r in remaining if resid[r] > _RANK_TOL), None)
        if pivot is None:
            break
        remaining.remove(pivot)
        perm.append(pivot)
        piv = math.sqrt(resid[pivot])
        rows[pivot, t] = piv
        for r in remaining:
            val = (a[r, pivot] - rows[r, :t] @ rows[pivot, :t]) / piv
            rows[r, t] = val
            resid[r] -= val * val
            if resid[r] < -_INDEF_TOL:
                raise ValueError("matrix is indefinite (residual variance %.3e)"
                                 % resid[r])
        t += 1
    for r in remaining:  # exactly linearly dependent on the pivots
        if resid[r] < -_INDEF_TOL:
            raise ValueError("matrix is indefinite (residual variance %.3e)" % resid[r])
        perm.append(r)
    return rows[perm, :], perm


def _sov_sum(L: np.ndarray, rank: int, lo: np.ndarray, hi: np.ndarray,
             u: np.ndarray) -> float:
    """Sum of the separation-of-variables integrand over the points `u`
    ((m, rank) array in the unit cube)."""
    m = u.shape[0]
    d = L.shape[0]
    f = np.ones(m)
    y = np.empty((m, rank))
    for i in range(d):
        ncol = min(i, rank)
        t = y[:, :ncol] @ L[i, :ncol] if ncol else np.zeros(m)
        s = L[i, i] if i < rank else 0.0
        if s > 0.0:
            a = ndtr((lo[i] - t) / s) if np.isfinite(lo[i]) else 0.0
            b = ndtr((hi[i] - t) / s) if np.isfinite(hi[i]) else 1.0
            w = np.maximum(b - a, 0.0)
            f = f * w
            z = np.clip(a + u[:, i] * w, 1e-16, 1.0 - 1e-16)
            y[:, i] = ndtri(z)
        else:
            # degenerate coordinate: value is determined by earlier ones
            f = f * ((t >= lo[i] - 1e-9) & (t <= hi[i] + 1e-9))
    return float(f.sum())


def mvn_rect_prob(jn: JointNormal, rect: Rectangle, tol: float = 1e-5,
                  seed=0) -> tuple[float, float]:
    """P(lo < X <= hi) for X ~ N(mean, corr), with an error estimate.

    Deterministic given `seed`.  The reported value satisfies
    |reported - truth| <= max(tol, 3*err) with high confidence; sampling stops
    once 3*err <= tol or the point budget is exhausted.
    """
    d = jn.dim
    if d > MAX_DIM:
        raise ValueError("dimension %d exceeds the engine cap of %d" % (d, MAX_DIM))
    lo = rect.lo - jn.mean
    hi = rect.hi - jn.mean
    if lo.shape[0] != d:
        raise ValueError("rectangle dimension does not match the joint law")
    if d == 1:
        a = float(ndtr(lo[0])) if np.isfinite(lo[0]) else 0.0
        b = float(ndtr(hi[0])) if np.isfinite(hi[0]) else 1.0
        return min(max(b - a, 0.0), 1.0), 0.0

    mass = np.where(np.isfinite(hi), ndtr(hi), 1.0) - \
        np.where(np.isfinite(lo), ndtr(lo), 0.0)
    priority = list(np.argsort(mass, kind="stable"))
    L, perm = factorize_psd(jn.corr, priority=priority)
    lo, hi = lo[perm], hi[perm]
    rank = int(np.sum(np.diagonal(L) > 0.0))
    rng = np.random.default_rng(seed)
    gen = _SQRT_PRIMES[:rank]

    npts = _START_POINTS
    while True:
        estimates = np.empty(_SHIFTS)
        shift = rng.random((_SHIFTS, rank))
        for s in range(_SHIFTS):
            total = 0.0
            for start in range(0, npts, _CHUNK):
                j = np.arange(start + 1, min(start + _CHUNK, npts) + 1)[:, None]
                u = np.abs(2.0 * np.modf(j * gen[None, :] + shift[s][None, :])[0] - 1.0)
                total += _sov_sum(L, rank, lo, hi, u)
            estimates[s] = total / npts
        prob = float(estimates.mean())
        err = float(estimates.std(ddof=1) / math.sqrt(_SHIFTS))
        if 3.0 * err <= tol or npts >= _MAX_POINTS:
            return min(max(prob, 0.0), 1.0), err
        npts *= 4


def mvn_mc_prob(jn: JointNormal, rect: Rectangle, reps: int = 10**6,
                seed=0) -> tuple[float, float]:
    """Plain Monte Carlo oracle: sample X by factorization, count the rectangle.

    Returns (estimate, binomial standard error).  Kept free of any shared code
    path with mvn_rect_prob beyond the factorization itself.
    """
    d = jn.dim
    L, perm = factorize_psd(jn.corr)
    rank = int(np.sum(np.diagonal(L) > 0.0))
    lo = (rect.lo - jn.mean)[perm]
    hi = (rect.hi - jn.mean)[perm]
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < reps:
        b = min(1 << 16, reps - done)
        g = rng.standard_normal((b, rank))
        x = g @ L[:, :rank].T
        inside = np.all((x > lo) & (x <= hi), axis=1)
        hits += int(inside.sum())
        done += b
    p = hits / reps
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / reps)
