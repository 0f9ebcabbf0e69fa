"""Joint law of the standardized comparisons: means, correlations, assembly.

Correlation formulas are checked two ways: against hand-derived closed forms
for pinned window geometries, and against empirical correlations from direct
patient-level resampling (tests/util.py), which never touches the library's
covariance code.
"""

import math

import numpy as np
import pytest

import platformpower as pp
from util import mc_stats


CASE1 = pp.TrialDesign(K=3, J=2, n=43, entry=(0, 0, 0, 0))
CASE2 = pp.TrialDesign(K=3, J=2, n=43, entry=(0, 0, 0, 43))


def test_z_mean_anchor():
    sc = pp.Scenario((0.0, 0.0, 0.545, 0.0))
    m = pp.z_mean(CASE1, sc, pp.ZIndex(2, 0, 1))
    assert m == pytest.approx(0.545 * math.sqrt(43.0 / 2.0), abs=1e-12)
    assert m == pytest.approx(2.5268, abs=5e-4)
    # doubling the outcome sd halves the drift
    half = pp.TrialDesign(K=3, J=2, n=43, entry=(0, 0, 0, 0), sigma=2.0)
    assert pp.z_mean(half, sc, pp.ZIndex(2, 0, 1)) == pytest.approx(m / 2.0)


def test_corr_same_comparison_stages():
    # same arm pair, different stages: sqrt of information ratio
    r = pp.z_corr(CASE1, pp.ZIndex(1, 0, 1), pp.ZIndex(1, 0, 2))
    assert r == pytest.approx(math.sqrt(43.0 / 86.0), abs=1e-12)


def test_corr_shared_control():
    # two arms vs the shared control, full window overlap
    r = pp.z_corr(CASE1, pp.ZIndex(1, 0, 1), pp.ZIndex(2, 0, 1))
    assert r == pytest.approx(0.5)
    # staggered: overlap is only the late arm's window
    r2 = pp.z_corr(CASE2, pp.ZIndex(1, 0, 2), pp.ZIndex(3, 0, 1))
    assert r2 == pytest.approx(43.0 / (2.0 * math.sqrt(86.0 * 43.0)))


def test_corr_active_vs_comparator_sign():
    # arm 1 active in one statistic, comparator in the other -> negative
    r = pp.z_corr(CASE1, pp.ZIndex(1, 0, 1), pp.ZIndex(2, 1, 2))
    assert r == pytest.approx(-43.0 / (2.0 * math.sqrt(43.0 * 86.0)))
    assert r == pytest.approx(-0.35355, abs=5e-6)


def test_corr_disjoint_windows_zero():
    d = pp.TrialDesign(K=2, J=2, n=10, entry=(0, 0, 20))
    # arm 1 stage 1 window (0,10]; arm 2 stage 1 window (20,30]
    assert pp.z_corr(d, pp.ZIndex(1, 0, 1), pp.ZIndex(2, 0, 1)) == 0.0


def test_corr_unreachable_configurations():
    with pytest.raises(pp.StructuralError):
        # mirrored pair: same two arms with the roles swapped
        pp.z_corr(CASE1, pp.ZIndex(1, 2, 1), pp.ZIndex(2, 1, 1))
    with pytest.raises(pp.StructuralError):
        # arm 2 is a comparator early but active at a strictly later accrual
        pp.z_corr(CASE1, pp.ZIndex(1, 2, 1), pp.ZIndex(2, 3, 2))


def test_corr_post_change():
    # two post-change analyses of the same comparison share their start, so
    # the correlation is the square root of the information ratio
    d = pp.TrialDesign(K=2, J=3, n=10)
    a = pp.ZIndex(2, 1, 2, policy="post", jprime=1)   # window (10, 20]
    b = pp.ZIndex(2, 1, 3, policy="post", jprime=1)   # window (10, 30]
    assert pp.z_corr_post(d, a, b) == pytest.approx(math.sqrt(10.0 / 20.0))
    with pytest.raises(ValueError, match="empty information window"):
        # a stage at or before the change has no post-change data
        pp.z_corr_post(d, pp.ZIndex(2, 1, 1, policy="post", jprime=1), b)


@pytest.mark.parametrize("design,a,b", [
    (CASE1, pp.ZIndex(1, 0, 1), pp.ZIndex(2, 0, 2)),
    (CASE1, pp.ZIndex(2, 1, 2), pp.ZIndex(3, 0, 1)),
    (CASE1, pp.ZIndex(1, 0, 2), pp.ZIndex(2, 1, 2)),
    (CASE2, pp.ZIndex(3, 0, 1), pp.ZIndex(1, 0, 1)),
    (CASE2, pp.ZIndex(3, 1, 2), pp.ZIndex(2, 0, 2)),
    (CASE2, pp.ZIndex(3, 1, 1), pp.ZIndex(1, 0, 2)),
    (CASE2, pp.ZIndex(2, 1, 2), pp.ZIndex(3, 1, 2)),
])
def test_corr_against_patient_resampling(design, a, b):
    sc = pp.Scenario((0.0,) * (design.K + 1))
    x = mc_stats(design, sc, [a, b], reps=150000, seed=int(a.k * 7 + b.k))
    emp = float(np.corrcoef(x[:, 0], x[:, 1])[0, 1])
    ana = pp.z_corr(design, a, b)
    assert ana == pytest.approx(emp, abs=0.01)


def test_corr_post_against_patient_resampling():
    d = pp.TrialDesign(K=2, J=3, n=10)
    a = pp.ZIndex(2, 1, 2, policy="post", jprime=1)
    b = pp.ZIndex(2, 1, 3, policy="post", jprime=1)
    sc = pp.Scenario((0.0, 0.0, 0.0))
    x = mc_stats(d, sc, [a, b], reps=150000, seed=5)
    emp = float(np.corrcoef(x[:, 0], x[:, 1])[0, 1])
    assert pp.z_corr_post(d, a, b) == pytest.approx(emp, abs=0.01)


def test_mixed_policy_disjoint_independent():
    pre = pp.ZIndex(1, 0, 2)                       # window (0, 86]
    post = pp.ZIndex(3, 1, 2, policy="post", jprime=2)  # window (86, 129]
    sc = pp.Scenario((0.0, 0.0, 0.0, 0.0))
    jn = pp.assemble_joint(CASE2, sc, [pre, post])
    assert jn.corr[0, 1] == 0.0
    x = mc_stats(CASE2, sc, [pre, post], reps=150000, seed=9)
    assert abs(np.corrcoef(x[:, 0], x[:, 1])[0, 1]) < 0.01
    # pre/post pairs with overlapping windows never co-occur in one event
    with pytest.raises(pp.StructuralError):
        pp.assemble_joint(CASE2, sc, [pp.ZIndex(3, 0, 2), post])


def test_assemble_joint_dedups_aliases():
    sc = pp.Scenario((0.0, 0.1, 0.2, 0.3))
    a = pp.ZIndex(3, 1, 1)
    b = pp.ZIndex(3, 1, 1, policy="post", jprime=1)  # same data window
    jn = pp.assemble_joint(CASE2, sc, [a, b, pp.ZIndex(1, 0, 1)])
    assert jn.dim == 2


def test_assemble_joint_psd_and_means():
    sc = pp.Scenario((0.0, 0.2, 0.4, 0.1))
    idx = [pp.ZIndex(1, 0, 1), pp.ZIndex(2, 0, 1), pp.ZIndex(3, 0, 1),
           pp.ZIndex(2, 1, 1), pp.ZIndex(2, 0, 2)]
    jn = pp.assemble_joint(CASE1, sc, idx)
    assert jn.dim == 5
    evals = np.linalg.eigvalsh(jn.corr)
    assert evals.min() > -1e-10
    # the linear identity Z_21 = (Z_20 - Z_10)/sqrt(2)... realized via rank
    assert np.linalg.matrix_rank(jn.corr, tol=1e-8) == 4
    for i, ix in enumerate(jn.indices):
        assert jn.mean[i] == pytest.approx(pp.z_mean(CASE1, sc, ix))
