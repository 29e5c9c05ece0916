import dataclasses

import numpy as np
import pytest
from scipy import stats

from dyadflow.errors import InputError, NumericalError
from dyadflow.mcmc import (McmcConfig, PosteriorSamples, fit_srm, pseudo_p, sample_inverse_wishart,
                           stars, summarize_draws, update_dyad_cov, update_sigma_ab)
from dyadflow.network import network_from_matrix
from dyadflow.rng import substream
from dyadflow.srm import DyadTable, NodeTable, SrmSpec, assemble_design
from dyadflow.synth import SyntheticTruth, simulate_stage1


# -- configuration and summaries ------------------------------------------------


def test_default_protocol_keeps_400_draws():
    assert McmcConfig().n_draws == 400
    with pytest.raises(InputError):
        McmcConfig(main_iterations=1000, thin=3)
    with pytest.raises(InputError):
        McmcConfig(burn_in=-1)
    with pytest.raises(InputError):
        McmcConfig.from_dict({"burnin": 10})


def test_summary_stars_and_pseudo_p():
    rows = summarize_draws(["pos", "sym"], np.column_stack([np.linspace(0.1, 2, 400),
                                                            np.linspace(-1, 1, 400)]))
    assert rows[0]["pseudo_p"] == 0 and rows[0]["stars"] == "***"
    assert rows[1]["pseudo_p"] == pytest.approx(1.0) and rows[1]["stars"] == ""
    assert [stars(p) for p in (0.005, 0.02, 0.07, 0.2)] == ["***", "**", "*", ""]
    assert stars(0.01) == "**" and stars(0.05) == "*" and stars(0.1) == ""
    assert pseudo_p(np.r_[-np.ones(10), np.ones(90)]) == pytest.approx(0.2)
    with pytest.raises(InputError):
        summarize_draws(["x"], np.ones((1, 1)))


# -- conjugate steps -------------------------------------------------------------


def test_sigma_ab_concentrates_at_truth():
    rng = np.random.default_rng(1)
    truth = np.array([[1.0, 0.5], [0.5, 1.0]])
    effects = rng.multivariate_normal(np.zeros(2), truth, size=10_000)
    draws = np.array([update_sigma_ab(effects, rng) for _ in range(200)])
    np.testing.assert_allclose(draws.mean(axis=0), truth, atol=0.05)


def test_sigma_ab_zero_effects_match_inverse_wishart_mean():
    rng = np.random.default_rng(2)
    n = 10
    draws = np.array([update_sigma_ab(np.zeros((n, 2)), rng) for _ in range(20_000)])
    expected = np.eye(2) / (4 + n - 3)
    # Monte Carlo SE of each entry from the draws themselves
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - expected) < 4 * se + 1e-12)
    assert all(np.linalg.eigvalsh(d).min() > 0 for d in draws[:500])


def test_inverse_wishart_rejects_degenerate_scale():
    with pytest.raises(NumericalError):
        sample_inverse_wishart(5, np.array([[1.0, 1.0], [1.0, 1.0]]), np.random.default_rng(0))
    with pytest.raises(InputError):
        update_sigma_ab(np.zeros((1, 2)), np.random.default_rng(0))


def test_dyad_cov_recovers_generating_values():
    rng = np.random.default_rng(3)
    cov = 2.0 * np.array([[1.0, 0.8], [0.8, 1.0]])
    pairs = rng.multivariate_normal(np.zeros(2), cov, size=10_000)
    for _ in range(20):
        s2, rho = update_dyad_cov(pairs, rng)
        assert abs(s2 - 2.0) < 0.1 and abs(rho - 0.8) < 0.1


def test_dyad_cov_zero_residuals_follow_prior_scale():
    rng = np.random.default_rng(4)
    draws = np.array([update_dyad_cov(np.zeros((3, 2)), rng)[0] for _ in range(4000)])
    # eigen-variances are IG(4, 1/2) here, so sigma_nu2 has mean 1/6
    assert np.median(draws) < 0.25
    assert draws.mean() == pytest.approx(1 / 6, rel=0.05)
    big = np.array([update_dyad_cov(np.zeros((3, 2)), rng, prior_scale=10 * np.eye(2))[0]
                    for _ in range(4000)])
    assert big.mean() == pytest.approx(10 / 6, rel=0.05)


def test_dyad_cov_clamps_rho():
    rng = np.random.default_rng(5)
    x = rng.normal(size=5000)
    pairs = np.column_stack([x, x + 1e-4 * rng.normal(size=5000)])
    for _ in range(10):
        assert update_dyad_cov(pairs, rng)[1] == pytest.approx(0.995)
        assert update_dyad_cov(pairs * [1, -1], rng)[1] == pytest.approx(-0.995)


def test_dyad_cov_fixed_rho():
    rng = np.random.default_rng(6)
    pairs = rng.multivariate_normal(np.zeros(2), [[1.5, 0], [0, 1.5]], size=5000)
    s2, rho = update_dyad_cov(pairs, rng, fix_rho=0.0)
    assert rho == 0.0 and abs(s2 - 1.5) < 0.1


# -- chains ----------------------------------------------------------------------


def _constant_design(n=12, value=3):
    ids = tuple(f"h{i:02d}" for i in range(n))
    mat = np.full((n, n), value)
    np.fill_diagonal(mat, 0)
    dyads = DyadTable(ids, np.ones((n, n)), np.zeros((n, n)))
    return assemble_design(NodeTable(ids, {}), dyads, network_from_matrix(ids, mat),
                           SrmSpec(sender=(), receiver=(), dyad=()))


def test_intercept_only_constant_counts():
    samples = fit_srm(_constant_design(), McmcConfig(burn_in=500, main_iterations=2000, thin=10, seed=1))
    assert abs(samples.column("intercept").mean() - np.log(3)) < 0.1
    assert samples.n_draws == 200


@pytest.fixture(scope="module")
def benchmark():
    truth = SyntheticTruth(n=40, seed=3)
    nodes, dyads, net = simulate_stage1(truth)
    return nodes, dyads, net, truth


def test_same_seed_same_draws(benchmark):
    nodes, dyads, net, truth = benchmark
    design = assemble_design(nodes, dyads, net, truth.spec)
    cfg = McmcConfig(burn_in=100, main_iterations=200, thin=2, seed=9)
    a, b = fit_srm(design, cfg), fit_srm(design, cfg)
    assert np.array_equal(a.draws, b.draws) and np.array_equal(a.a_draws, b.a_draws)
    assert a.to_json() == b.to_json()
    c = fit_srm(design, McmcConfig(burn_in=100, main_iterations=200, thin=2, seed=10))
    assert not np.array_equal(a.draws, c.draws)


def test_posterior_json_round_trip(benchmark):
    nodes, dyads, net, truth = benchmark
    design = assemble_design(nodes, dyads, net, truth.spec)
    s = fit_srm(design, McmcConfig(burn_in=20, main_iterations=40, thin=4, seed=1))
    back = PosteriorSamples.from_json(s.to_json())
    assert back.names == s.names and np.array_equal(back.draws, s.draws)
    assert np.array_equal(back.beta_draws, s.beta_draws) and back.nodes == s.nodes


def test_input_row_order_leaves_draws_unchanged(benchmark):
    nodes, dyads, net, truth = benchmark
    order = tuple(np.random.default_rng(0).permutation(nodes.nodes))
    cfg = McmcConfig(burn_in=50, main_iterations=100, thin=2, seed=4)
    s1 = fit_srm(assemble_design(nodes, dyads, net, truth.spec), cfg)
    s2 = fit_srm(assemble_design(nodes.reorder(order), dyads.reorder(order),
                                 network_from_matrix(order, net.matrix(order)), truth.spec), cfg)
    assert np.array_equal(s1.draws, s2.draws)
    assert np.array_equal(s1.a_draws, s2.a_draws)


def test_acceptance_rates_after_adaptation(benchmark):
    nodes, dyads, net, truth = benchmark
    design = assemble_design(nodes, dyads, net, truth.spec)
    s = fit_srm(design, McmcConfig(burn_in=1000, main_iterations=1000, thin=10, seed=2))
    main = {k: v for k, v in s.acceptance.items() if not k.startswith("burn_in:")}
    assert set(main) >= {"beta", "nu", "ab"}
    for block, rate in main.items():
        assert 0.1 <= rate <= 0.6, (block, rate)


def test_non_finite_state_raises_numerical_error(benchmark, monkeypatch):
    nodes, dyads, net, truth = benchmark
    design = assemble_design(nodes, dyads, net, truth.spec)
    bad = dataclasses.replace(design, X=design.X.copy())
    bad.X[0, 1] = np.nan
    with pytest.raises(NumericalError) as info:
        fit_srm(bad, McmcConfig(burn_in=2, main_iterations=2, thin=1))
    assert info.value.state


# -- prior-predictive stationarity -----------------------------------------------


def _prior_draw(rng, k, cfg):
    beta = rng.normal(0, np.sqrt(cfg.beta_prior_var), k)
    sab = stats.invwishart.rvs(df=cfg.ab_prior_df, scale=np.eye(2), random_state=rng)
    # eigen-variances of the restricted dyad prior are IG((df+1)/2, 1/2)
    lam = stats.invgamma.rvs((cfg.nu_prior_df + 1) / 2, scale=0.5, size=2, random_state=rng)
    s2 = lam.mean()
    rho = (lam[0] - lam[1]) / (lam[0] + lam[1])
    return beta, sab, s2, rho


def _features(beta, sab, s2, rho):
    return np.array([beta[0], beta[1], np.log(sab[0, 0]), np.log(sab[1, 1]), np.log(s2), rho])


@pytest.mark.slow
def test_prior_predictive_stationarity():
    """One posterior draw per prior-predictive dataset is itself a prior draw."""
    cfg0 = McmcConfig(burn_in=400, main_iterations=800, thin=4, beta_prior_var=1.0)
    truth = SyntheticTruth(n=15, seed=0, spec=SrmSpec(sender=(), receiver=(), dyad=("D",)),
                           beta={"intercept": 0.0})
    nodes, dyads, net = simulate_stage1(truth)
    design = assemble_design(nodes, dyads, net, truth.spec)
    k = design.X.shape[1]
    post, prior = [], []
    for r in range(60):
        rng = substream(2024, f"replicate-{r}")
        beta, sab, s2, rho = _prior_draw(rng, k, cfg0)
        ab = rng.multivariate_normal(np.zeros(2), sab, size=design.n)
        pairs = rng.multivariate_normal(np.zeros(2), s2 * np.array([[1, rho], [rho, 1]]),
                                        size=design.n_pairs)
        nu = np.empty(design.n_rows)
        nu[design.pair_rows[:, 0]], nu[design.pair_rows[:, 1]] = pairs[:, 0], pairs[:, 1]
        eta = design.X @ beta + ab[design.src, 0] + ab[design.dst, 1] + nu
        y = rng.poisson(np.exp(np.clip(eta, -30, 30)))
        s = fit_srm(dataclasses.replace(design, y=y),
                    McmcConfig.from_dict({**cfg0.to_dict(), "seed": r}))
        last = s.draws[-1]
        col = {n: last[i] for i, n in enumerate(s.names)}
        post.append(_features(s.beta_draws[-1], np.array([[col["sigma_a2"], col["sigma_ab"]],
                                                          [col["sigma_ab"], col["sigma_b2"]]]),
                              col["sigma_nu2"], col["rho"]))
    rng = np.random.default_rng(99)
    prior = np.array([_features(*_prior_draw(rng, k, cfg0)) for _ in range(4000)])
    post = np.array(post)
    pvals = [stats.ttest_ind(post[:, j], prior[:, j], equal_var=False).pvalue for j in range(post.shape[1])]
    assert min(pvals) > 0.05 / len(pvals), pvals
