import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadflow.errors import InputError
from dyadflow.gof import (GofReport, network_stat_triple, posterior_predictive_gof,
                          predictive_quantile, simulate_replicate_counts)
from dyadflow.mcmc import McmcConfig, fit_srm
from dyadflow.network import network_from_matrix
from dyadflow.srm import DyadTable, NodeTable, SrmSpec, assemble_design
from dyadflow.synth import SyntheticTruth, simulate_stage1

from oracles import pearson_by_hand


def test_hand_example_is_perfectly_anticorrelated():
    t = np.zeros((3, 3))
    t[0, 1], t[1, 0], t[0, 2], t[2, 0], t[1, 2], t[2, 1] = 2, 0, 0, 2, 1, 1
    x = [t[0, 1], t[1, 0], t[0, 2], t[2, 0], t[1, 2], t[2, 1]]
    y = [t[1, 0], t[0, 1], t[2, 0], t[0, 2], t[2, 1], t[1, 2]]
    expected = pearson_by_hand(x, y)
    assert expected == pytest.approx(-1.0)
    assert network_stat_triple(t).dyad_correlation == pytest.approx(expected, abs=1e-12)


def test_symmetric_matrix_has_unit_correlation():
    rng = np.random.default_rng(0)
    m = rng.integers(0, 9, (6, 6))
    m = m + m.T
    np.fill_diagonal(m, 0)
    assert network_stat_triple(m).dyad_correlation == pytest.approx(1.0)


def test_equal_row_means_give_zero_spread():
    m = np.array([[0, 1, 2], [2, 0, 1], [1, 2, 0]])
    g = network_stat_triple(m)
    assert g.sd_row_means == 0 and g.sd_col_means == 0


def test_row_and_column_spread_by_hand():
    m = np.array([[0, 4, 2, 0], [1, 0, 0, 5], [0, 0, 0, 3], [2, 2, 2, 0]], dtype=float)
    rows = [sum(r) / 3 for r in m.tolist()]
    cols = [sum(c) / 3 for c in m.T.tolist()]

    def sd(v):
        mu = sum(v) / len(v)
        return (sum((x - mu) ** 2 for x in v) / (len(v) - 1)) ** 0.5

    g = network_stat_triple(m)
    assert g.sd_row_means == pytest.approx(sd(rows), abs=1e-12)
    assert g.sd_col_means == pytest.approx(sd(cols), abs=1e-12)


def test_constant_matrix_flags_undefined_correlation():
    m = np.full((4, 4), 2)
    np.fill_diagonal(m, 0)
    g = network_stat_triple(m)
    assert g.correlation_undefined and np.isnan(g.dyad_correlation)
    assert g.to_dict()["dyad_correlation"] is None


def test_input_checks():
    with pytest.raises(InputError):
        network_stat_triple(np.zeros((2, 2)))
    with pytest.raises(InputError):
        network_stat_triple(np.zeros((3, 4)))


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**31))
def test_statistics_are_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.poisson(2.0, (n, n))
    np.fill_diagonal(m, 0)
    perm = rng.permutation(n)
    a, b = network_stat_triple(m), network_stat_triple(m[np.ix_(perm, perm)])
    np.testing.assert_allclose(a.as_tuple(), b.as_tuple(), atol=1e-12, equal_nan=True)


def test_predictive_quantile_mid_rank():
    assert predictive_quantile(2.0, [1, 2, 3, 4]) == pytest.approx(0.375)
    assert predictive_quantile(0.0, [1, 2]) == 0.0
    assert predictive_quantile(5.0, [1, 2, np.nan]) == 1.0
    assert predictive_quantile(np.nan, [1, 2]) is None
    assert predictive_quantile(1.0, [np.nan]) is None


def _small_design(n=10):
    ids = tuple(f"n{i}" for i in range(n))
    empty = network_from_matrix(ids, np.zeros((n, n), dtype=int))
    dyads = DyadTable(ids, np.ones((n, n)), np.zeros((n, n)))
    return assemble_design(NodeTable(ids, {}), dyads, empty, SrmSpec(sender=(), receiver=(), dyad=()))


def test_reciprocity_orders_replicate_correlation():
    d = _small_design()
    rng = np.random.default_rng(11)
    beta = np.array([1.0])
    strong = np.array([[2.0, 1.9], [1.9, 2.0]])
    weak = np.eye(2) * 2.0

    def mean_corr(sab, rho):
        vals = [network_stat_triple(simulate_replicate_counts(d, beta, sab, 1.5, rho, rng)).dyad_correlation
                for _ in range(10_000)]
        return np.nanmean(vals)

    assert mean_corr(strong, 0.99) > mean_corr(weak, 0.0)


@pytest.fixture(scope="module")
def fitted():
    truth = SyntheticTruth(n=30, seed=5)
    nodes, dyads, net = simulate_stage1(truth)
    design = assemble_design(nodes, dyads, net, truth.spec)
    samples = fit_srm(design, McmcConfig(burn_in=200, main_iterations=300, thin=10, seed=1))
    return samples, design, net


def test_one_replicate_per_draw_and_reproducible(fitted):
    samples, design, net = fitted
    r1 = posterior_predictive_gof(samples, design, net, seed=3)
    r2 = posterior_predictive_gof(samples, design, net, seed=3)
    assert len(r1.replicates) == samples.n_draws
    assert r1.to_json() == r2.to_json()
    assert all(0 <= q <= 1 for q in r1.quantiles.values())
    back = GofReport.from_json(r1.to_json())
    np.testing.assert_array_equal(back.replicate_array(), r1.replicate_array())
    assert len(r1.histogram_rows("sd_row_means")) == samples.n_draws
    r3 = posterior_predictive_gof(samples, design, net, seed=4)
    assert r3.to_json() != r1.to_json()
