import numpy as np
import pytest

from dyadflow.errors import InputError
from dyadflow.srm import DyadCovarianceParams, SrmSpec, implied_moments
from dyadflow.synth import (PUBLISHED_COVARIANCE, Stage2Truth, SyntheticTruth, draw_effects,
                            recovery_experiment, simulate_stage1, simulate_stage2, simulate_tables)
from dyadflow.twostage import PredictedTransfers

ZERO = DyadCovarianceParams(0.0, 0.0, 0.0, 0.0, 0.0)
CLEAN = {"include_quality": False, "effects_excluded": True, "stage1_spec": {}}


def test_zero_variance_counts_are_iid_poisson():
    truth = SyntheticTruth(n=101, seed=1, params=ZERO, beta={"intercept": np.log(2.0)},
                           spec=SrmSpec(sender=(), receiver=(), dyad=()))
    _, _, net = simulate_stage1(truth)
    m = net.matrix()
    y = m[~np.eye(101, dtype=bool)]
    assert y.size == 10_100
    assert abs(y.mean() - 2.0) < 3 * np.sqrt(2.0 / y.size)


def test_within_dyad_correlation_matches_implied_moments():
    params = DyadCovarianceParams(0.3, 0.4, 0.1, 2.0, 0.9)
    rng = np.random.default_rng(2)
    n = 300
    a, b, nu = draw_effects(params, n, rng)
    eps = a[:, None] + b[None, :] + nu
    iu, ju = np.triu_indices(n, k=1)
    x, y = eps[iu, ju], eps[ju, iu]
    m = implied_moments(params)
    target = m["ij,ji"] / m["ij,ij"]
    r = np.corrcoef(x, y)[0, 1]
    # node effects correlate pairs sharing a node, so use a generous effective sample size
    se = (1 - target ** 2) / np.sqrt(n)
    assert abs(r - target) < 3 * se


def test_same_seed_same_tables():
    t = SyntheticTruth(n=20, seed=7)
    n1, d1, net1 = simulate_stage1(t)
    n2, d2, net2 = simulate_stage1(t)
    assert np.array_equal(d1.distance, d2.distance)
    assert all(np.array_equal(n1.columns[c], n2.columns[c]) for c in n1.columns)
    assert net1.counts == net2.counts
    _, _, net3 = simulate_stage1(SyntheticTruth(n=20, seed=8))
    assert net3.counts != net1.counts


def test_geometry_invariants():
    t = SyntheticTruth(n=60, seed=3)
    nodes, dyads = simulate_tables(t)
    d = dyads.distance
    assert np.array_equal(d, d.T)
    off = ~np.eye(60, dtype=bool)
    assert d[off].mean() == pytest.approx(t.mean_minutes)
    cm = dyads.co_membership
    assert np.array_equal(cm, cm.T) and set(np.unique(cm)) <= {0.0, 1.0}
    # co-membership is an equivalence relation on distinct nodes: blocks are cliques
    for i in range(60):
        block = set(np.flatnonzero(cm[i])) | {i}
        for j in block - {i}:
            assert set(np.flatnonzero(cm[j])) | {j} == block
    assert {"DC", "BW"} <= set(nodes.columns)


def test_clamp_saturation_warns():
    truth = SyntheticTruth(n=12, seed=0, beta={"intercept": 40.0}, params=ZERO,
                           spec=SrmSpec(sender=(), receiver=(), dyad=()))
    with pytest.warns(RuntimeWarning, match="clamp"):
        simulate_stage1(truth)


def test_zero_replicates_rejected():
    with pytest.raises(InputError):
        recovery_experiment(SyntheticTruth(n=10), 0)


def _stage2_inputs(n, value, seed=0):
    truth = SyntheticTruth(n=n, seed=seed)
    nodes, _ = simulate_tables(truth)
    m = np.full((n, n), value)
    np.fill_diagonal(m, 0)
    return truth, nodes, PredictedTransfers(nodes.nodes, m, CLEAN)


def test_stage2_null_counts_are_iid_poisson():
    truth, nodes, tr = _stage2_inputs(142, 1.0)
    truth.stage2 = Stage2Truth(alpha=1.0, xi=0.0, coefs={}, sigma_u2=0.0, sigma_e2=0.0)
    w = simulate_stage2(truth, tr, nodes).pair_vector()
    assert w.size == 142 * 141 // 2
    assert abs(w.mean() - np.e) < 3 * np.sqrt(np.e / w.size)


def test_stage2_more_transfers_lower_outcome():
    means = []
    for value in (20.0, 40.0):
        truth, nodes, tr = _stage2_inputs(142, value)
        truth.stage2 = Stage2Truth(alpha=2.0, xi=-0.012, coefs={}, sigma_u2=0.1, sigma_e2=0.05)
        means.append(simulate_stage2(truth, tr, nodes).pair_vector().mean())
    assert means[1] < means[0]


def test_stage2_seed_determinism():
    truth, nodes, tr = _stage2_inputs(30, 3.0)
    a = simulate_stage2(truth, tr, nodes)
    b = simulate_stage2(truth, tr, nodes)
    assert np.array_equal(a.matrix, b.matrix)


def test_truth_round_trip():
    t = SyntheticTruth(n=33, seed=4)
    back = SyntheticTruth.from_dict(t.to_dict())
    assert back.params == PUBLISHED_COVARIANCE and back.spec.term_names() == t.spec.term_names()
    assert np.array_equal(back.beta_vector(), t.beta_vector())
    with pytest.raises(InputError):
        SyntheticTruth(beta={"nonsense": 1.0})
