"""Forward simulation of the platform trial under both data policies.

The generative model works on per-cohort sufficient statistics: each arm's lane
is a sequence of cohort outcome sums (exact in distribution for normal
outcomes), so a replicate is a walk over calendar analysis points.  The first
arm to beat the original control becomes the new control; surviving arms are
then compared against it, either on all shared data ("retain") or only on data
accrued after the change ("discard").

Replication streams are counter-based: block b of a run with seed s always
draws from Philox(key=s).jumped(b), and estimates aggregate integer counts, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .design import Boundaries, Scenario, TrialDesign, accrual
from .events import last_stage_at_or_before

BLOCK = 1 << 14

FATE_PENDING = 0
FATE_CONTROL = 1
FATE_DROPPED = 2
FATE_REJECTED = 3
FATE_RETIRED = 4
FATE_NAMES = {
    FATE_CONTROL: "became-control",
    FATE_DROPPED: "dropped-futility",
    FATE_REJECTED: "rejected-superior",
    FATE_RETIRED: "active-at-end",
}


def _calendar(design: TrialDesign) -> list:
    return sorted({accrual(design, k, j)
                   for k in design.arms for j in range(1, design.J + 1)})


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed).jumped(block))


def _run_block(design: TrialDesign, bounds: Boundaries, scenario: Scenario,
               policy: str, rng: np.random.Generator, B: int,
               trace: bool = False) -> dict:
    K, J, n = design.K, design.J, design.n
    e = design.entry
    sig = design.sigma
    u, low = bounds.upper, bounds.lower
    max_t = max(accrual(design, k, J) for k in design.arms)

    # cohort-sum lanes; every arm's lane extends to max_t since any arm may
    # end up serving as the control
    starts = [0 if k == 0 else e[k] for k in range(K + 1)]
    lanes = []
    for k in range(K + 1):
        ncoh = (max_t - starts[k]) // n
        draws = rng.normal(scenario.mu[k] * n, sig * math.sqrt(n), size=(B, ncoh))
        cs = np.concatenate([np.zeros((B, 1)), np.cumsum(draws, axis=1)], axis=1)
        lanes.append(cs)

    def wsum(k, a, b):
        s = starts[k]
        return lanes[k][:, (b - s) // n] - lanes[k][:, (a - s) // n]

    def zstat(k1, k2, a, b):
        return (wsum(k1, a, b) - wsum(k2, a, b)) / (sig * math.sqrt(2.0 * (b - a)))

    fate = np.zeros((B, K + 1), dtype=np.int16)
    fate_stage = np.zeros((B, K + 1), dtype=np.int16)
    changed = np.zeros(B, dtype=bool)
    winner = np.zeros(B, dtype=np.int16)
    win_stage = np.zeros(B, dtype=np.int16)
    change_t = np.zeros(B, dtype=np.int64)
    alive_at_change = np.zeros((B, K + 1), dtype=bool)
    traces: dict = {}

    def record(key, z):
        if trace:
            traces[key] = z

    # phase 1: the race against the original control
    for a in _calendar(design):
        here = [(k, (a - e[k]) // n) for k in design.arms
                if e[k] < a <= e[k] + J * n and (a - e[k]) % n == 0]
        if not here:
            continue
        pre = ~changed
        stage_of = dict(here)
        z = {}
        for k, j in here:
            z[k] = zstat(k, 0, e[k], a)
            record((k, 0, j, "retain", None), z[k])
        cand = sorted(stage_of)
        crossers = {k: pre & (fate[:, k] == FATE_PENDING) &
                    (z[k] > u[stage_of[k] - 1]) for k in cand}
        cross_mat = np.stack([crossers[k] for k in cand], axis=1)
        ncross = cross_mat.sum(axis=1)
        newly = ncross > 0
        if newly.any():
            carr = np.array(cand, dtype=np.int16)
            win = np.where(newly, carr[np.argmax(cross_mat, axis=1)],
                           np.int16(0))
            multi = ncross > 1
            if multi.any():
                C = len(cand)
                beats = np.zeros((B, C, C), dtype=bool)
                for i1 in range(C):
                    for i2 in range(i1 + 1, C):
                        k1, k2 = cand[i1], cand[i2]
                        z12 = zstat(k1, k2, max(e[k1], e[k2]), a)
                        record((k1, k2, stage_of[k1], "retain", None), z12)
                        b12 = z12 > 0.0  # exact tie goes to the lower index
                        beats[:, i1, i2] = b12 | (z12 == 0.0)
                        beats[:, i2, i1] = ~beats[:, i1, i2]
                score = np.where(cross_mat,
                                 (beats & cross_mat[:, None, :]).sum(axis=2), -1)
                win = np.where(multi, carr[np.argmax(score, axis=1)], win)
            changed[newly] = True
            winner[newly] = win[newly]
            change_t[newly] = a
            for k in cand:
                m = newly & (win == k)
                fate[m, k] = FATE_CONTROL
                fate_stage[m, k] = stage_of[k]
                win_stage[m] = stage_of[k]
        for k, j in here:
            dropm = pre & (fate[:, k] == FATE_PENDING) & (z[k] < low[j - 1])
            fate[dropm, k] = FATE_DROPPED
            fate_stage[dropm, k] = j
        if newly.any():
            alive_at_change[newly, :] = fate[newly, :] == FATE_PENDING
            alive_at_change[newly, 0] = False

    # replicates with no control change: any residual pending state can only be
    # an exact boundary hit at the final analysis; close it out as a drop
    resid = ~changed[:, None] & (fate[:, 1:] == FATE_PENDING)
    if resid.any():
        rows, cols = np.nonzero(resid)
        fate[rows, cols + 1] = FATE_DROPPED
        fate_stage[rows, cols + 1] = J

    # phase 2: survivors race the new control
    for c in design.arms:
        for jp in range(1, J + 1):
            grp = changed & (winner == c) & (win_stage == jp)
            if not grp.any():
                continue
            tch = accrual(design, c, jp)
            for k in design.arms:
                if k == c:
                    continue
                mk = grp & alive_at_change[:, k]
                if not mk.any():
                    continue
                rem = [j for j in range(1, J + 1) if accrual(design, k, j) > tch]
                if not rem:
                    fate[mk, k] = FATE_RETIRED
                    fate_stage[mk, k] = last_stage_at_or_before(design, k, tch)
                    continue
                live = mk.copy()
                for j in rem:
                    stop = accrual(design, k, j)
                    if policy == "retain":
                        a0 = max(e[k], e[c])
                        key = (k, c, j, "retain", None)
                    else:
                        a0 = max(e[k], e[c], tch)
                        key = (k, c, j, "post", jp)
                    zz = zstat(k, c, a0, stop)
                    record(key, zz)
                    rej = live & (zz > u[j - 1])
                    fate[rej, k] = FATE_REJECTED
                    fate_stage[rej, k] = j
                    drp = live & (zz < low[j - 1])
                    fate[drp, k] = FATE_DROPPED
                    fate_stage[drp, k] = j
                    live &= ~(rej | drp)
                fate[live, k] = FATE_DROPPED  # exact final-boundary hits
                fate_stage[live, k] = J

    # recruitment accounting
    stop_at = np.zeros((B, K + 1), dtype=np.int64)
    for k in design.arms:
        stop_at[:, k] = e[k] + fate_stage[:, k].astype(np.int64) * n
        retired = fate[:, k] == FATE_RETIRED
        stop_at[retired, k] = e[k] + J * n
    for k in design.arms:
        isc = changed & (winner == k)
        if isc.any():
            rest = [kk for kk in design.arms if kk != k]
            if rest:
                mx = np.max(stop_at[:, rest], axis=1)
                stop_at[isc, k] = np.maximum(change_t[isc], mx[isc])
            else:
                # sole arm promoted: nothing left to compare against
                stop_at[isc, k] = change_t[isc]
    stop_at[:, 0] = np.where(changed, change_t,
                             np.max(stop_at[:, 1:], axis=1))
    entries = np.array([starts[k] for k in range(K + 1)], dtype=np.int64)
    patients = (stop_at - entries[None, :]).sum(axis=1)

    out = dict(fate=fate, fate_stage=fate_stage, changed=changed,
               winner=winner, win_stage=win_stage, change_t=change_t,
               alive_at_change=alive_at_change, patients=patients)
    if trace:
        out["traces"] = traces
        out["lanes"] = lanes
    return out


@dataclass(frozen=True)
class TrialOutcome:
    """One simulated replicate, with enough detail to audit every decision."""

    design: TrialDesign
    policy: str
    seed: int
    change: Optional[tuple]          # (new control arm, its stage) or None
    control_history: tuple
    arm_fate: dict
    patients_used: int
    z_trace: dict = field(repr=False)
    cohort_sums: Optional[dict] = field(default=None, repr=False)

    def to_json(self) -> str:
        import json
        payload = {
            "policy": self.policy,
            "seed": self.seed,
            "change": list(self.change) if self.change else None,
            "control_history": list(self.control_history),
            "arm_fate": {str(k): [f, s] for k, (f, s) in self.arm_fate.items()},
            "patients_used": self.patients_used,
            "z_trace": {"%d,%d,%d,%s,%s" % (k, kp, j, pol, jp): v
                        for (k, kp, j, pol, jp), v in sorted(
                            self.z_trace.items(),
                            key=lambda kv: (kv[0][0], kv[0][1], kv[0][2]))},
        }
        return json.dumps(payload, indent=2)


def simulate_trial(design: TrialDesign, bounds: Boundaries, scenario: Scenario,
                   policy: str = "retain", seed: int = 0,
                   keep_data: bool = True) -> TrialOutcome:
    """Run one replicate and return its full outcome record."""
    scenario.check(design)
    if policy not in ("retain", "discard"):
        raise ValueError("policy must be 'retain' or 'discard'")
    res = _run_block(design, bounds, scenario, policy,
                     _block_rng(seed, 0), 1, trace=True)
    fate = res["fate"][0]
    stage = res["fate_stage"][0]
    did = bool(res["changed"][0])
    change = (int(res["winner"][0]), int(res["win_stage"][0])) if did else None
    arm_fate = {}
    for k in design.arms:
        code = int(fate[k])
        arm_fate[k] = (FATE_NAMES.get(code, "pending"), int(stage[k]))
    trace = {key: float(zv[0]) for key, zv in res["traces"].items()}
    sums = None
    if keep_data:
        sums = {k: (0 if k == 0 else design.entry[k],
                    np.array(res["lanes"][k][0]))
                for k in range(design.K + 1)}
    return TrialOutcome(
        design=design, policy=policy, seed=seed, change=change,
        control_history=(0,) if change is None else (0, change[0]),
        arm_fate=arm_fate, patients_used=int(res["patients"][0]),
        z_trace=trace, cohort_sums=sums)


def replay_decomposition_check(outcome: TrialOutcome) -> float:
    """Max residual of the pre/post information split across the recorded
    post-change statistics.

    Each retained-data statistic must equal the information-weighted
    combination of its pre-change part and its post-change-only part; the
    residual is pure floating-point error.
    """
    if outcome.cohort_sums is None:
        raise ValueError("outcome carries no cohort data (simulate with keep_data=True)")
    if outcome.change is None:
        return 0.0
    d = outcome.design
    c, jp = outcome.change
    tch = accrual(d, c, jp)
    sig = d.sigma

    def wsum(k, a, b):
        start, cs = outcome.cohort_sums[k]
        return float(cs[(b - start) // d.n] - cs[(a - start) // d.n])

    def zval(k1, k2, a, b):
        return (wsum(k1, a, b) - wsum(k2, a, b)) / (sig * math.sqrt(2.0 * (b - a)))

    worst = 0.0
    for (k, kp, j, pol, _jp), z in outcome.z_trace.items():
        if kp != c or k == 0:
            continue
        stop = accrual(d, k, j)
        if stop <= tch:
            continue  # pairwise tie-break at the change, not a post-change test
        if pol == "retain":
            s = max(d.entry[k], d.entry[c])
            if tch <= s:
                continue  # no shared pre-change information to decompose
            zhat = zval(k, c, s, tch)
            zpost = zval(k, c, tch, stop)
            recon = (zhat * math.sqrt(tch - s) + zpost * math.sqrt(stop - tch)) \
                / math.sqrt(stop - s)
        else:
            recon = zval(k, c, max(d.entry[k], d.entry[c], tch), stop)
        worst = max(worst, abs(z - recon))
    return worst


def _count_block(design: TrialDesign, res: dict) -> dict:
    """Integer tallies from one simulated block (order-independent)."""
    K, J = design.K, design.J
    c: dict = {"reps": int(res["changed"].shape[0]),
               "any_change": int(res["changed"].sum())}
    xi = {}
    for k in design.arms:
        for j in range(1, J + 1):
            m = res["changed"] & (res["winner"] == k) & (res["win_stage"] == j)
            cnt = int(m.sum())
            if cnt:
                xi[(k, j)] = cnt
    den = {}
    num = {}
    for cc in design.arms:
        for jp in range(1, J + 1):
            grp = res["changed"] & (res["winner"] == cc) & (res["win_stage"] == jp)
            if not grp.any():
                continue
            for ks in design.arms:
                if ks == cc:
                    continue
                alive = grp & res["alive_at_change"][:, ks]
                d_cnt = int(alive.sum())
                if not d_cnt:
                    continue
                den[(ks, cc, jp)] = d_cnt
                n_cnt = int((alive & (res["fate"][:, ks] == FATE_REJECTED)).sum())
                if n_cnt:
                    num[(ks, cc, jp)] = n_cnt
    overall = {}
    for k in design.arms:
        cnt = int(((res["fate"][:, k] == FATE_CONTROL) |
                   (res["fate"][:, k] == FATE_REJECTED)).sum())
        if cnt:
            overall[k] = cnt
    c["xi"] = xi
    c["den"] = den
    c["num"] = num
    c["overall"] = overall
    c["patients_total"] = int(res["patients"].sum())
    c["patients_max"] = int(res["patients"].max())
    return c


def _block_task(args) -> dict:
    design, bounds, scenario, policy, seed, block, size = args
    res = _run_block(design, bounds, scenario, policy,
                     _block_rng(seed, block), size)
    return _count_block(design, res)


def _merge_counts(parts: list) -> dict:
    total: dict = {"reps": 0, "any_change": 0, "patients_total": 0,
                   "patients_max": 0, "xi": {}, "den": {}, "num": {},
                   "overall": {}}
    for p in parts:
        total["reps"] += p["reps"]
        total["any_change"] += p["any_change"]
        total["patients_total"] += p["patients_total"]
        total["patients_max"] = max(total["patients_max"], p["patients_max"])
        for name in ("xi", "den", "num", "overall"):
            for key, v in p[name].items():
                total[name][key] = total[name].get(key, 0) + v
    return total


def worker_count() -> int:
    """Worker processes for estimation, from PLATFORMPOWER_WORKERS (0=serial)."""
    try:
        return max(0, int(os.environ.get("PLATFORMPOWER_WORKERS", "0")))
    except ValueError:
        return 0


def estimate(design: TrialDesign, bounds: Boundaries, scenario: Scenario,
             policy: str = "retain", reps: int = 10**5, seed: int = 0,
             workers: Optional[int] = None) -> dict:
    """Monte Carlo operating characteristics from `reps` replicates.

    Returns raw integer counts plus derived frequencies with binomial standard
    errors.  Identical (seed, reps) give identical counts for any `workers`.
    """
    scenario.check(design)
    if policy not in ("retain", "discard"):
        raise ValueError("policy must be 'retain' or 'discard'")
    if reps < 1:
        raise ValueError("reps must be positive")
    nblocks = (reps + BLOCK - 1) // BLOCK
    tasks = [(design, bounds, scenario, policy, seed, b,
              BLOCK if b < nblocks - 1 else reps - BLOCK * (nblocks - 1))
             for b in range(nblocks)]
    w = worker_count() if workers is None else workers
    if w > 1 and nblocks > 1:
        with ProcessPoolExecutor(max_workers=w) as pool:
            parts = list(pool.map(_block_task, tasks, chunksize=1))
    else:
        parts = [_block_task(t) for t in tasks]
    counts = _merge_counts(parts)

    def frac(cnt, n):
        if n == 0:
            return 0.0, 0.0
        p = cnt / n
        return p, math.sqrt(max(p * (1.0 - p), 0.0) / n)

    R = counts["reps"]
    result = {
        "reps": R, "policy": policy, "seed": seed,
        "counts": counts,
        "any_change": frac(counts["any_change"], R),
        "xi": {key: frac(v, R) for key, v in counts["xi"].items()},
        "omega": {key: frac(v, R) for key, v in counts["num"].items()},
        "conditional": {key: frac(counts["num"].get(key, 0), dcnt)
                        for key, dcnt in counts["den"].items()},
        "overall": {k: frac(v, R) for k, v in counts["overall"].items()},
        "mean_patients": counts["patients_total"] / R,
        "max_patients": counts["patients_max"],
    }
    return result
