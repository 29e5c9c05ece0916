"""Adaptive Metropolis-within-Gibbs sampler for the over-dispersed Poisson SRM.

One sweep updates, in order:

1. beta by adaptive random-walk MH in a sheared parameterisation (node
   effects absorb the sender/receiver-additive part of a step, busy dyads
   absorb most of the rest), followed by a Gibbs refresh of beta with the
   linear predictor held fixed, where the nu and (a, b) priors make the
   conditional Gaussian;
2. every dyad's (nu_ij, nu_ji) by a joint random-walk MH, vectorised over
   pairs;
3. every node's (a_i, b_i) by a joint random-walk MH, then a fixed-predictor
   Gibbs refresh;
4. Sigma_ab from its conjugate inverse-Wishart conditional;
5. (sigma_nu2, rho) from the inverse-Wishart conditional restricted to
   equal-diagonal matrices, followed by a non-centred MH move on the two
   eigen-variances with whitened residuals held fixed.

Proposal scales adapt (Robbins-Monro on the log scale) during burn-in only.
"""

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import InputError, NumericalError
from .rng import substream

log = logging.getLogger(__name__)

VARIANCE_NAMES = ["sigma_a2", "sigma_ab", "sigma_b2", "sigma_nu2", "rho"]


@dataclass
class McmcConfig:
    burn_in: int = 1000
    main_iterations: int = 10000
    thin: int = 25
    seed: int = 0
    adapt_window: int = 50
    target_beta: float = 0.234
    target_scalar: float = 0.44
    beta_prior_var: float = 100.0
    ab_prior_df: float = 4.0
    ab_prior_scale: float = 1.0
    nu_prior_df: float = 4.0
    nu_prior_scale: float = 1.0
    rho_max: float = 0.995
    fix_rho: float = None
    interweave: bool = True

    def __post_init__(self):
        if self.burn_in < 0:
            raise InputError("burn_in must be >= 0")
        if self.thin < 1 or self.main_iterations < 1 or self.main_iterations % self.thin:
            raise InputError(f"thin={self.thin} must divide main_iterations={self.main_iterations}")
        if self.fix_rho is not None and not abs(self.fix_rho) < 1:
            raise InputError("fix_rho must lie in (-1, 1)")

    @property
    def n_draws(self):
        return self.main_iterations // self.thin

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown McmcConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EffectsState:
    beta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    nu: np.ndarray
    Sigma_ab: np.ndarray
    sigma_nu2: float
    rho: float

    def dump(self):
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}


@dataclass
class PosteriorSamples:
    """Thinned draws.  ``draws`` holds coefficients on the raw covariate scale
    followed by the variance parameters; ``beta_draws`` keeps the design scale."""

    names: list
    draws: np.ndarray
    beta_draws: np.ndarray
    a_draws: np.ndarray
    b_draws: np.ndarray
    nodes: tuple
    acceptance: dict
    spec: dict
    config: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def column(self, name):
        return self.draws[:, self.names.index(name)]

    @property
    def include_quality(self):
        return bool(self.spec.get("include_quality", False))

    def to_json(self):
        return json.dumps({
            "names": self.names,
            "draws": self.draws.tolist(),
            "beta_draws": self.beta_draws.tolist(),
            "a_draws": self.a_draws.tolist(),
            "b_draws": self.b_draws.tolist(),
            "nodes": list(self.nodes),
            "acceptance": self.acceptance,
            "spec": self.spec,
            "config": self.config,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        k = len(d["names"]) - len(VARIANCE_NAMES)
        n = len(d["nodes"])
        return cls(d["names"], np.array(d["draws"], dtype=float).reshape(-1, len(d["names"])),
                   np.array(d["beta_draws"], dtype=float).reshape(-1, k),
                   np.array(d["a_draws"], dtype=float).reshape(-1, n),
                   np.array(d["b_draws"], dtype=float).reshape(-1, n),
                   tuple(d["nodes"]), d["acceptance"], d["spec"], d["config"])


# -- conjugate covariance updates --------------------------------------------


def sample_inverse_wishart(df, scale, rng):
    scale = np.asarray(scale, dtype=float)
    if not np.all(np.isfinite(scale)) or np.linalg.eigvalsh(scale).min() <= 0:
        raise NumericalError("degenerate inverse-Wishart scale matrix", {"scale": scale.tolist()})
    draw = stats.invwishart.rvs(df=df, scale=scale, random_state=rng)
    return 0.5 * (draw + draw.T)


def update_sigma_ab(effects, rng, prior_df=4.0, prior_scale=None):
    """Draw Sigma_ab | (a_i, b_i) ~ IW(df0 + N, S0 + sum of outer products)."""
    effects = np.asarray(effects, dtype=float)
    if effects.ndim != 2 or effects.shape[1] != 2 or effects.shape[0] < 2:
        raise InputError("need an (N, 2) array of node effects with N >= 2")
    s0 = np.eye(2) if prior_scale is None else np.asarray(prior_scale, dtype=float)
    return sample_inverse_wishart(prior_df + effects.shape[0], s0 + effects.T @ effects, rng)


def _rotated_scale(prior_scale):
    s0 = np.eye(2) if prior_scale is None else np.asarray(prior_scale, dtype=float)
    v = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    return np.diag(v.T @ s0 @ v)



def clamp_rho(sigma2, rho, rho_max):
    return sigma2, float(np.clip(rho, -rho_max, rho_max))


def update_dyad_cov(nu_pairs, rng, prior_df=4.0, prior_scale=None, rho_max=0.995, fix_rho=None):
    """Draw (sigma_nu2, rho) given the dyad residual pairs.

    Sigma_nu = sigma_nu2 [[1, rho], [rho, 1]] has eigenvalues
    lam_s = sigma_nu2 (1 + rho) and lam_d = sigma_nu2 (1 - rho) on the fixed
    axes (1, 1) and (1, -1).  Restricting the IW(df0, S0) prior to this
    family makes lam_s and lam_d independent inverse-gammas, so the draw is
    exact; rho is clamped to |rho| <= rho_max afterwards.  With ``fix_rho``
    only sigma_nu2 is drawn, along the ray lam = sigma_nu2 (1 +- rho).
    """
    nu_pairs = np.asarray(nu_pairs, dtype=float)
    if nu_pairs.ndim != 2 or nu_pairs.shape[1] != 2 or nu_pairs.shape[0] < 1:
        raise InputError("need a (P, 2) array of dyad residual pairs")
    u1, u2 = nu_pairs[:, 0], nu_pairs[:, 1]
    return dyad_cov_from_moments(u1 @ u1, u2 @ u2, u1 @ u2, nu_pairs.shape[0], rng,
                                 prior_df, prior_scale, rho_max, fix_rho)


def dyad_cov_from_moments(s11, s22, s12, n_pairs, rng, prior_df=4.0, prior_scale=None,
                          rho_max=0.995, fix_rho=None):
    psi = _rotated_scale(prior_scale)
    ss = 0.5 * (s11 + s22) + s12
    dd = 0.5 * (s11 + s22) - s12
    if fix_rho is not None:
        c = np.array([1 + fix_rho, 1 - fix_rho])
        shape = prior_df + 2 + n_pairs
        rate = 0.5 * ((psi / c).sum() + ss / c[0] + dd / c[1])
        return float(rate / rng.gamma(shape)), float(fix_rho)
    shape = (prior_df + 1) / 2 + n_pairs / 2
    lam_s = (psi[0] + ss) / 2 / rng.gamma(shape)
    lam_d = (psi[1] + dd) / 2 / rng.gamma(shape)
    sigma2 = 0.5 * (lam_s + lam_d)
    return clamp_rho(float(sigma2), (lam_s - lam_d) / (lam_s + lam_d), rho_max)


# -- summaries ---------------------------------------------------------------


def stars(p):
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def pseudo_p(draws):
    draws = np.asarray(draws, dtype=float)
    return float(min(1.0, 2 * min(np.mean(draws <= 0), np.mean(draws >= 0))))


def summarize_draws(names, draws):
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] < 2:
        raise InputError("need at least two draws to summarise")
    rows = []
    for k, name in enumerate(names):
        col = draws[:, k]
        p = pseudo_p(col)
        rows.append({"parameter": name, "mean": float(col.mean()), "sd": float(col.std(ddof=1)),
                     "pseudo_p": p, "stars": stars(p)})
    return rows


def summarize_posterior(samples):
    """Posterior mean, sd, two-sided pseudo p-value and significance stars per parameter."""
    return summarize_draws(samples.names, samples.draws)


def credible_interval(draws, level=0.95):
    lo = (1 - level) / 2
    return np.quantile(np.asarray(draws), [lo, 1 - lo], axis=0)


# -- sampler -----------------------------------------------------------------


def _chol2(c00, c01, c11):
    l00 = np.sqrt(c00)
    l10 = c01 / l00
    l11 = np.sqrt(np.maximum(c11 - l10 ** 2, 1e-300))
    return l00, l10, l11


def _inv2(m00, m01, m11):
    det = m00 * m11 - m01 ** 2
    return m11 / det, -m01 / det, m00 / det


def _rm_step(t, window):
    return 1.0 / (1.0 + t / window) ** 0.6


def _ab_quad(a, b, P):
    return P[0, 0] * (a @ a) + 2 * P[0, 1] * (a @ b) + P[1, 1] * (b @ b)


def _node_rows(n):
    """Out-rows and matching in-rows for every node in lexicographic row order."""
    out_rows = np.arange(n * (n - 1)).reshape(n, n - 1)
    in_rows = np.empty((n, n - 1), dtype=np.int64)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        in_rows[i] = [j * (n - 1) + (i if i < j else i - 1) for j in others]
    return out_rows, in_rows


def poisson_glm_start(X, y, ridge=1e-2, iterations=25):
    """Ridge-stabilised IRLS fit used only as a starting value."""
    beta = np.zeros(X.shape[1])
    beta[0] = np.log(y.mean() + 0.1)
    for _ in range(iterations):
        eta = np.clip(X @ beta, -20, 20)
        mu = np.exp(eta)
        z = eta + (y - mu) / mu
        A = X.T @ (mu[:, None] * X) + ridge * np.eye(X.shape[1])
        new = np.linalg.solve(A, X.T @ (mu * z))
        if np.max(np.abs(new - beta)) < 1e-8:
            beta = new
            break
        beta = new
    return beta


def initial_state(design):
    X, y, n = design.X, design.y.astype(float), design.n
    beta = poisson_glm_start(X, y)
    r = np.log(y + 0.5) - X @ beta
    rmat = design.to_matrix(r)
    a = rmat.sum(axis=1) / (n - 1)
    b = (rmat - a[:, None]).sum(axis=0) / (n - 1)
    a -= a.mean()
    b -= b.mean()
    nu = 0.5 * (r - a[design.src] - b[design.dst])
    pairs = nu[design.pair_rows]
    cov = np.cov(pairs.T)
    sigma_nu2 = max(0.5 * (cov[0, 0] + cov[1, 1]), 0.1)
    rho = float(np.clip(cov[0, 1] / sigma_nu2, -0.5, 0.5))
    Sigma_ab = np.cov(np.stack([a, b])) + 0.1 * np.eye(2)
    return EffectsState(beta, a, b, nu, Sigma_ab, sigma_nu2, rho)


class _SrmChain:
    def __init__(self, design, config, rng, state=None):
        self.d = design
        self.cfg = config
        self.rng = rng
        self.bound = design.spec.clamp
        self.X = design.X
        self.y = design.y.astype(float)
        self.k = self.X.shape[1]
        self.p1 = np.ascontiguousarray(design.pair_rows[:, 0])
        self.p2 = np.ascontiguousarray(design.pair_rows[:, 1])
        self.out_rows, self.in_rows = _node_rows(design.n)
        self._additive_split()
        self.curv_pair = (self.y[self.p1] + 0.5, self.y[self.p2] + 0.5)
        ymat = design.to_matrix(self.y)
        self.curv_node = (ymat.sum(axis=1) + 0.5, ymat.sum(axis=0) + 0.5)

        self.s = state or initial_state(design)
        self.s.nu = self.s.nu.copy()
        self.eta = self._eta()
        self.mu = np.empty_like(self.eta)
        _kernels.loglik_fill(self.y, self.eta, self.bound, self.mu)

        self.log_scale_beta = np.log(2.38 / np.sqrt(self.k))
        self.log_scale_pair = np.full(design.n_pairs, np.log(1.5))
        self.log_scale_node = np.full(design.n, np.log(1.5))
        self._refresh_beta_precond()
        self._refresh_pair_weights()
        self.log_scale_lam = np.full(2, np.log(0.05))
        self._mu1 = np.empty(design.n_pairs)
        self._mu2 = np.empty(design.n_pairs)
        self.accept = {"beta": [0, 0], "nu": [0, 0], "ab": [0, 0], "nu_scale": [0, 0]}

    def _eta(self):
        s = self.s
        return self.X @ s.beta + s.a[self.d.src] + s.b[self.d.dst] + s.nu

    def _additive_split(self):
        """Map node-level columns onto the node effects.

        For a column that is exactly a sender term plus a receiver term
        (intercept, origin:*, destination:*), ``Ma[i] + Mb[j]`` reproduces
        row (i, j) and moves on beta shift (a, b) by minus that part.
        Dyadic columns keep zero loadings: pushing their additive part onto
        the node effects costs more prior mass than it saves.
        """
        n, d = self.d.n, self.d
        rows = np.zeros((n, self.k))
        cols = np.zeros((n, self.k))
        np.add.at(rows, d.src, self.X)
        np.add.at(cols, d.dst, self.X)
        off = np.ones((n, n)) - np.eye(n)
        H = np.block([[(n - 1) * np.eye(n), off], [off, (n - 1) * np.eye(n)]])
        sol = np.linalg.lstsq(H, np.vstack([rows, cols]), rcond=None)[0]
        Ma, Mb = sol[:n], sol[n:]
        resid = self.X - Ma[d.src] - Mb[d.dst]
        dyadic = np.abs(resid).max(axis=0) > 1e-9 * (1 + np.abs(self.X).max(axis=0))
        Ma[:, dyadic] = 0.0
        Mb[:, dyadic] = 0.0
        self.Ma, self.Mb = Ma, Mb
        self.X_res = self.X - Ma[d.src] - Mb[d.dst]
        R1, R2 = self.X_res[self.p1], self.X_res[self.p2]
        self.R1, self.R2 = R1, R2
        self.RtR = R1.T @ R1 + R2.T @ R2
        self.Rcross = R1.T @ R2 + R2.T @ R1

    def _node_quad(self, P):
        Ma, Mb = self.Ma, self.Mb
        return P[0, 0] * Ma.T @ Ma + P[0, 1] * (Ma.T @ Mb + Mb.T @ Ma) + P[1, 1] * Mb.T @ Mb

    def _refresh_beta_precond(self):
        """Fix the shear weights and proposal covariance for the beta move.

        Row r's residual absorbs a share ``c_r`` of the dyadic part of a
        coefficient step, with c_r the data share of that row's precision at
        the current fitted mean (about 1 for busy arcs, about 0 for empty
        ones).  Weights are frozen once burn-in ends.
        """
        v = self.s.sigma_nu2 * (1 - self.s.rho ** 2)
        curv = self.mu
        self.shear = curv * v / (1 + curv * v)
        w = (1 - self.shear) ** 2 * curv + self.shear ** 2 / v
        A = (self.X_res.T @ (w[:, None] * self.X_res) + self._node_quad(np.linalg.inv(self.s.Sigma_ab))
             + np.eye(self.k) / self.cfg.beta_prior_var)
        self.beta_chol = np.linalg.cholesky(np.linalg.inv(A))

    def _pair_quad(self, nu, q11, q12):
        s11, s22, s12 = _kernels.pair_moments(nu, self.p1, self.p2)
        return q11 * (s11 + s22) + 2 * q12 * s12

    def _nu_prec(self):
        s = self.s
        c = 1.0 / (s.sigma_nu2 * (1 - s.rho ** 2))
        return c, -s.rho * c

    # 1. coefficients
    def update_beta(self, adapt, t):
        s, cfg, d = self.s, self.cfg, self.d
        z = self.rng.standard_normal(self.k)
        logu = np.log(self.rng.random())
        step = np.exp(self.log_scale_beta) * (self.beta_chol @ z)
        xs = self.X_res @ step
        prop_eta = self.eta + (1 - self.shear) * xs
        prop_nu = s.nu - self.shear * xs
        prop_a, prop_b = s.a - self.Ma @ step, s.b - self.Mb @ step
        prop_mu = np.empty_like(self.mu)
        cur = _kernels.loglik_cached(self.y, self.eta, self.mu, self.bound)
        if not np.isfinite(cur):
            raise NumericalError("non-finite log-likelihood after clamping", self.s.dump())
        new = _kernels.loglik_fill(self.y, prop_eta, self.bound, prop_mu)
        beta1 = s.beta + step
        q11, q12 = self._nu_prec()
        P = np.linalg.inv(s.Sigma_ab)
        delta = (new - cur - 0.5 * (beta1 @ beta1 - s.beta @ s.beta) / cfg.beta_prior_var
                 - 0.5 * (self._pair_quad(prop_nu, q11, q12) - self._pair_quad(s.nu, q11, q12))
                 - 0.5 * (_ab_quad(prop_a, prop_b, P) - _ab_quad(s.a, s.b, P)))
        ok = logu < delta
        if ok:
            s.beta, s.nu, s.a, s.b = beta1, prop_nu, prop_a, prop_b
            self.eta, self.mu = prop_eta, prop_mu
        self.accept["beta"][0] += int(ok)
        self.accept["beta"][1] += 1
        if adapt:
            alpha = np.exp(min(delta, 0.0))
            self.log_scale_beta += _rm_step(t, cfg.adapt_window) * (alpha - cfg.target_beta)
        if not cfg.interweave:
            return
        # Gibbs draw with eta, a + Ma beta and b + Mb beta held fixed
        ta, tb = s.a + self.Ma @ s.beta, s.b + self.Mb @ s.beta
        r = self.eta - ta[d.src] - tb[d.dst]
        r1, r2 = r[self.p1], r[self.p2]
        R1, R2 = self.R1, self.R2
        A = (q11 * self.RtR + q12 * self.Rcross + self._node_quad(P)
             + np.eye(self.k) / cfg.beta_prior_var)
        h = (q11 * (R1.T @ r1 + R2.T @ r2) + q12 * (R1.T @ r2 + R2.T @ r1)
             + self.Ma.T @ (P[0, 0] * ta + P[0, 1] * tb) + self.Mb.T @ (P[0, 1] * ta + P[1, 1] * tb))
        L = np.linalg.cholesky(A)
        s.beta = np.linalg.solve(A, h) + np.linalg.solve(L.T, self.rng.standard_normal(self.k))
        s.a, s.b = ta - self.Ma @ s.beta, tb - self.Mb @ s.beta
        s.nu = r - self.X_res @ s.beta

    # 2. dyad residual pairs
    def update_nu(self, adapt, t):
        s, cfg = self.s, self.cfg
        q11, q12 = self._nu_prec()
        c00, c01, c11 = _inv2(self.curv_pair[0] + q11, q12, self.curv_pair[1] + q11)
        l00, l10, l11 = _chol2(c00, c01, c11)
        z = self.rng.standard_normal((self.d.n_pairs, 2))
        logu = np.log(self.rng.random(self.d.n_pairs))
        alpha = _kernels.srm_pair_mh(self.eta, self.mu, self.y, s.nu, self.p1, self.p2,
                                     l00, l10, l11, np.exp(self.log_scale_pair), z, logu,
                                     q11, q12, self.bound)
        self.accept["nu"][0] += int((logu < np.log(np.maximum(alpha, 1e-300))).sum())
        self.accept["nu"][1] += alpha.size
        if adapt:
            self.log_scale_pair += _rm_step(t, cfg.adapt_window) * (alpha - cfg.target_scalar)

    # 3. node effects
    def update_ab(self, adapt, t):
        s, cfg = self.s, self.cfg
        n = self.d.n
        prec_ab = np.linalg.inv(s.Sigma_ab)
        c00, c01, c11 = _inv2(self.curv_node[0] + prec_ab[0, 0], prec_ab[0, 1],
                              self.curv_node[1] + prec_ab[1, 1])
        l00, l10, l11 = _chol2(c00, c01, c11)
        chol = np.zeros((n, 2, 2))
        chol[:, 0, 0], chol[:, 1, 0], chol[:, 1, 1] = l00, l10, l11
        z = self.rng.standard_normal((n, 2))
        logu = np.log(self.rng.random(n))
        alpha = _kernels.srm_node_mh(self.eta, self.mu, self.y, self.out_rows, self.in_rows,
                                     s.a, s.b, prec_ab, chol, np.exp(self.log_scale_node),
                                     z, logu, self.bound)
        self.accept["ab"][0] += int((logu < np.log(np.maximum(alpha, 1e-300))).sum())
        self.accept["ab"][1] += n
        if adapt:
            self.log_scale_node += _rm_step(t, cfg.adapt_window) * (alpha - cfg.target_scalar)
        if cfg.interweave:
            q11, q12 = self._nu_prec()
            prec_nu = np.array([[q11, q12], [q12, q11]])
            z = self.rng.standard_normal((n, 2))
            _kernels.srm_node_centered(s.nu, self.out_rows, self.in_rows, s.a, s.b,
                                       prec_nu, prec_ab, z)

    # 4 + 5. covariance blocks
    def update_covariances(self, adapt, t):
        s, cfg = self.s, self.cfg
        s.Sigma_ab = update_sigma_ab(np.column_stack([s.a, s.b]), self.rng, cfg.ab_prior_df,
                                     cfg.ab_prior_scale * np.eye(2))
        moments = _kernels.pair_moments(s.nu, self.p1, self.p2)
        s.sigma_nu2, s.rho = dyad_cov_from_moments(*moments, self.d.n_pairs, self.rng, cfg.nu_prior_df,
                                                   cfg.nu_prior_scale * np.eye(2), cfg.rho_max,
                                                   cfg.fix_rho)
        if cfg.interweave:
            self._rescale_dyad_variances(adapt, t)

    def _refresh_pair_weights(self):
        """Data share of each dyad's information, frozen after burn-in."""
        info = 0.5 * (self.mu[self.p1] + self.mu[self.p2])
        lam = self.s.sigma_nu2 * (1 + abs(self.s.rho))
        self.pair_weight = info * lam / (1 + info * lam)

    def _rescale_dyad_variances(self, adapt, t):
        """Partially non-centred MH on the log eigen-variances of Sigma_nu.

        Each pair's sum/difference components scale with the proposed
        standard deviations, damped by the pair's data share, so empty dyads
        follow the variance while busy ones stay put.
        """
        s, cfg = self.s, self.cfg
        psi = _rotated_scale(cfg.nu_prior_scale * np.eye(2)) / 2
        shape = (cfg.nu_prior_df + 1) / 2
        lam = np.array([s.sigma_nu2 * (1 + s.rho), s.sigma_nu2 * (1 - s.rho)])
        if cfg.fix_rho is not None:
            moves = [np.array([1.0, 1.0])]
        else:
            moves = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        for k, direction in enumerate(moves):
            z = self.rng.standard_normal()
            logu = np.log(self.rng.random())
            step = np.exp(self.log_scale_lam[k]) * z * direction
            lam1 = lam * np.exp(step)
            rho1 = (lam1[0] - lam1[1]) / lam1.sum()
            delta = _kernels.pair_scale_move(self.eta, self.mu, self.y, s.nu, self.p1, self.p2,
                                             self.pair_weight, step[0], step[1], lam[0], lam[1],
                                             lam1[0], lam1[1], self.bound, self._mu1, self._mu2)
            # inverse-gamma prior on each eigen-variance, plus the log-scale Jacobian;
            # along the fixed-rho ray the prior on sigma_nu2 has one extra shape unit
            active = direction > 0
            delta += np.sum(-shape * step[active] - psi[active] * (1 / lam1[active] - 1 / lam[active]))
            if cfg.fix_rho is not None:
                delta -= step[0]
            ok = logu < delta and abs(rho1) <= cfg.rho_max
            if ok:
                _kernels.pair_scale_commit(self.eta, self.mu, s.nu, self.p1, self.p2, self.pair_weight,
                                           step[0], step[1], self._mu1, self._mu2)
                lam = lam1
                s.sigma_nu2 = float(0.5 * lam1.sum())
                if cfg.fix_rho is None:
                    s.rho = float(rho1)
            self.accept["nu_scale"][0] += int(ok)
            self.accept["nu_scale"][1] += 1
            if adapt:
                alpha = np.exp(min(delta, 0.0))
                self.log_scale_lam[k] += _rm_step(t, cfg.adapt_window) * (alpha - cfg.target_scalar)

    def sweep(self, adapt, t):
        self.update_beta(adapt, t)
        self.update_nu(adapt, t)
        self.update_ab(adapt, t)
        self.update_covariances(adapt, t)

    def run(self):
        cfg, d = self.cfg, self.d
        if cfg.fix_rho is not None:
            self.s.rho = cfg.fix_rho
        for t in range(cfg.burn_in):
            self.sweep(True, t)
            if (t + 1) % 200 == 0 and t + 1 < cfg.burn_in:
                self._refresh_beta_precond()
                self._refresh_pair_weights()
        burn_accept = {k: v[0] / max(v[1], 1) for k, v in self.accept.items()}
        self.accept = {k: [0, 0] for k in self.accept}

        m = cfg.n_draws
        beta_draws = np.empty((m, self.k))
        var_draws = np.empty((m, len(VARIANCE_NAMES)))
        a_draws = np.empty((m, d.n))
        b_draws = np.empty((m, d.n))
        for t in range(cfg.main_iterations):
            self.sweep(False, t)
            if (t + 1) % cfg.thin == 0:
                k = (t + 1) // cfg.thin - 1
                s = self.s
                beta_draws[k] = s.beta
                a_draws[k], b_draws[k] = s.a, s.b
                var_draws[k] = [s.Sigma_ab[0, 0], s.Sigma_ab[0, 1], s.Sigma_ab[1, 1],
                                s.sigma_nu2, s.rho]
        if not (np.all(np.isfinite(beta_draws)) and np.all(np.isfinite(var_draws))):
            raise NumericalError("non-finite draws", self.s.dump())
        acceptance = {k: v[0] / max(v[1], 1) for k, v in self.accept.items()}
        acceptance.update({f"burn_in:{k}": v for k, v in burn_accept.items()})
        names = list(d.names) + VARIANCE_NAMES
        draws = np.column_stack([d.to_original(beta_draws), var_draws])
        return PosteriorSamples(names, draws, beta_draws, a_draws, b_draws, d.nodes,
                                acceptance, d.spec.to_dict(), cfg.to_dict())


def fit_srm(design, config, state=None):
    """Run one chain; identical (design, config) always gives identical draws."""
    rng = substream(config.seed, "srm-chain")
    return _SrmChain(design, config, rng, state).run()


def fit_srm_chains(design, config, n_chains):
    """Independent chains with seeds derived from ``config.seed``."""
    out = []
    for c in range(n_chains):
        cfg = McmcConfig.from_dict({**config.to_dict(),
                                    "seed": int(substream(config.seed, f"chain{c}").integers(2**63))})
        out.append(fit_srm(design, cfg))
    return out
