import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadflow.errors import InputError
from dyadflow.network import build_network, network_from_matrix
from dyadflow.srm import (DyadCovarianceParams, DyadTable, NodeTable, SrmSpec, assemble_design,
                          implied_moments, linear_predictor, poisson_loglik)


def small_tables(n=3, seed=0, with_quality=True):
    rng = np.random.default_rng(seed)
    ids = tuple(f"v{i}" for i in range(n))
    cols = {"HD": rng.integers(100, 5000, n).astype(float), "DC": rng.integers(0, 5, n).astype(float),
            "Techno": np.arange(n) % 2 * 1.0}
    if with_quality:
        cols["AM"] = rng.uniform(1, 10, n)
        cols["AR"] = rng.uniform(1, 10, n)
    pts = rng.uniform(0, 50, (n, 2))
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    cm = np.zeros((n, n))
    cm[0, 1] = cm[1, 0] = 1
    edges = [(ids[i], ids[j], int(rng.integers(0, 4))) for i in range(n) for j in range(n) if i != j]
    return NodeTable(ids, cols), DyadTable(ids, dist, cm), build_network(ids, edges)


def test_three_nodes_give_six_rows():
    nodes, dyads, net = small_tables()
    d = assemble_design(nodes, dyads, net, SrmSpec())
    assert d.X.shape[0] == 6
    assert d.pair_rows.shape == (3, 2)
    # each unordered pair maps to one row per direction
    for r1, r2 in d.pair_rows:
        assert d.src[r1] == d.dst[r2] and d.dst[r1] == d.src[r2]


def test_quality_columns_only_with_flag():
    nodes, dyads, net = small_tables()
    spec = SrmSpec(sender=("HD", "AM"), receiver=("HD", "AR"))
    names = assemble_design(nodes, dyads, net, spec).names
    assert not any("AM" in n or "AR" in n for n in names)
    names_q = assemble_design(nodes, dyads, net, SrmSpec(include_quality=True)).names
    assert {"origin:AM", "origin:AR", "destination:AM", "destination:AR"} <= set(names_q)


def test_standardized_columns():
    nodes, dyads, net = small_tables(n=12, seed=3)
    d = assemble_design(nodes, dyads, net, SrmSpec(sender=("HD", "DC", "Techno"), receiver=("DC",)))
    for k, name in enumerate(d.names):
        col = d.X[:, k]
        if name == "intercept" or name.endswith("Techno") or name == "CM":
            continue
        assert abs(col.mean()) < 1e-10
        assert abs(col.std(ddof=1) - 1) < 1e-10
    # binary columns are left alone
    assert set(np.unique(d.X[:, d.names.index("origin:Techno")])) <= {0.0, 1.0}


def test_missing_covariate_names_node_and_column():
    nodes, dyads, net = small_tables()
    dc = nodes.columns["DC"].copy()
    dc[1] = np.nan
    nodes = nodes.with_column("DC", dc)
    with pytest.raises(InputError, match=r"v1.*DC"):
        assemble_design(nodes, dyads, net, SrmSpec())


def test_back_transform_recovers_raw_coefficients():
    nodes, dyads, net = small_tables(n=9, seed=5)
    spec = SrmSpec(sender=("HD", "DC"), receiver=("HD", "Techno"))
    d = assemble_design(nodes, dyads, net, spec)
    raw = d.raw_X()
    true_raw = np.linspace(-0.5, 0.7, raw.shape[1])
    target = raw @ true_raw
    fitted, *_ = np.linalg.lstsq(d.X, target, rcond=None)
    np.testing.assert_allclose(d.to_original(fitted), true_raw, atol=1e-8)


def test_row_order_of_input_tables_is_irrelevant():
    nodes, dyads, net = small_tables(n=6, seed=2)
    order = tuple(reversed(nodes.nodes))
    d1 = assemble_design(nodes, dyads, net, SrmSpec())
    d2 = assemble_design(nodes.reorder(order), dyads.reorder(order),
                         network_from_matrix(order, net.matrix(order)), SrmSpec())
    np.testing.assert_array_equal(d1.X, d2.X)
    np.testing.assert_array_equal(d1.y, d2.y)


def _unit_design(n=3):
    ids = tuple("abc"[:n])
    nodes = NodeTable(ids, {})
    dyads = DyadTable(ids, np.ones((n, n)), np.zeros((n, n)))
    net = network_from_matrix(ids, np.zeros((n, n), dtype=int))
    return assemble_design(nodes, dyads, net, SrmSpec(sender=(), receiver=(), dyad=()))


def test_linear_predictor_examples():
    d = _unit_design()
    zero = np.zeros(3)
    assert np.all(linear_predictor(d, [0.0], zero, zero, np.zeros(6)) == 0)
    eta = linear_predictor(d, [np.log(5)], zero, zero, np.zeros(6))
    np.testing.assert_allclose(np.exp(eta), 5.0)
    eta = linear_predictor(d, [2.0], np.full(3, 0.5), np.full(3, -0.3), np.full(6, 0.1))
    np.testing.assert_allclose(eta, 2.3)


def test_linear_predictor_clamps_and_checks_shapes():
    d = _unit_design()
    eta = linear_predictor(d, [100.0], np.zeros(3), np.zeros(3), np.zeros(6))
    assert np.all(eta == 30.0)
    assert np.all(linear_predictor(d, [100.0], np.zeros(3), np.zeros(3), np.zeros(6), clamp=False) == 100)
    with pytest.raises(InputError):
        linear_predictor(d, [0.0, 1.0], np.zeros(3), np.zeros(3), np.zeros(6))
    with pytest.raises(InputError):
        linear_predictor(d, [0.0], np.zeros(2), np.zeros(3), np.zeros(6))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_linear_predictor_superposition(seed):
    nodes, dyads, net = small_tables(n=5, seed=seed % 1000)
    d = assemble_design(nodes, dyads, net, SrmSpec())
    rng = np.random.default_rng(seed)
    k = d.X.shape[1]

    def draw():
        return rng.normal(0, 0.3, k), rng.normal(0, 0.3, 5), rng.normal(0, 0.3, 5), rng.normal(0, 0.3, d.n_rows)

    x1, x2 = draw(), draw()
    both = [u + v for u, v in zip(x1, x2)]
    base = linear_predictor(d, np.zeros(k), np.zeros(5), np.zeros(5), np.zeros(d.n_rows))
    lhs = linear_predictor(d, *both)
    rhs = linear_predictor(d, *x1) + linear_predictor(d, *x2) - base
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_poisson_loglik_examples():
    assert poisson_loglik(np.array([0]), np.array([0.0])) == pytest.approx(-1.0)
    # 2 log 2 - 2 - log 2!; the log-factorial term is part of the likelihood
    assert poisson_loglik(np.array([2]), np.array([np.log(2)])) == pytest.approx(-1.306853, abs=1e-6)
    y = np.array([0, 1, 4, 7])
    eta = np.array([0.3, -1.0, 1.2, 2.0])
    parts = sum(poisson_loglik(y[i:i + 1], eta[i:i + 1]) for i in range(4))
    assert poisson_loglik(y, eta) == pytest.approx(parts)
    with pytest.raises(InputError):
        poisson_loglik(np.array([1.5]), np.array([0.0]))
    with pytest.raises(InputError):
        poisson_loglik(np.array([-1]), np.array([0.0]))


def test_implied_moment_examples():
    m = implied_moments(DyadCovarianceParams(1.0, 2.0, 0.25, 2.0, 0.5))
    assert m["ij,ji"] == pytest.approx(1.5)
    assert m["ij,ij"] == pytest.approx(5.0)
    assert all(v == 0 for v in implied_moments(DyadCovarianceParams(0, 0, 0, 0, 0)).values())
    m = implied_moments(DyadCovarianceParams(1.0, 1.0, 0.0, 1.0, 0.0))
    assert m["ij,ji"] == 0 and m["ij,ki"] == 0


def test_covariance_params_validation():
    with pytest.raises(InputError):
        DyadCovarianceParams(1.0, 1.0, 2.0, 1.0, 0.0)
    with pytest.raises(InputError):
        DyadCovarianceParams(1.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(InputError):
        DyadCovarianceParams(-1.0, 1.0, 0.0, 1.0, 0.0)

