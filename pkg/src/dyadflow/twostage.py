"""Second stage: outcome similarity of hospital pairs against predicted transfers.

Predicted transfers come from a first-stage fit that used no quality
covariates and are computed from the fixed part of the model only, so they
carry no hospital random effects.  The outcome of an unordered pair is a
count modelled as

    log E(W_ij | .) = z_ij' gamma + u_i + u_j + eps_ij,

with u_i ~ N(0, sigma_u2) and eps_ij ~ N(0, sigma_e2).  The transfers term
enters as the symmetric total T_ij + T_ji.
"""

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import InputError, NumericalError, ProvenanceError
from .mcmc import McmcConfig, _rm_step, credible_interval, fit_srm, poisson_glm_start, summarize_draws
from .rng import substream
from .srm import CLAMP, QUALITY_COLUMNS, SrmSpec, assemble_design, with_geo_covariates

log = logging.getLogger(__name__)

OWN_LEVELS = ("public-public", "private-private", "public-private")
SHARED_LEVELS = ("neither", "one", "both")
SIGMA_NAMES = ["sigma_u2", "sigma_e2"]
EFFECT_SIZE_NOTE = ("effect size = (1 - exp(coefficient)) * 100, the percent reduction in the expected "
                    "outcome per additional predicted transfer; a coefficient of -0.012 gives 1.193% "
                    "and -0.013 gives 1.292%, whereas published summaries quote 1.9% and 2.2% for "
                    "these coefficients")


def effect_size(xi):
    """Percent reduction of the expected outcome per unit increase in predicted transfers."""
    return (1.0 - np.exp(xi)) * 100.0


# -- predicted transfers ------------------------------------------------------


@dataclass(frozen=True)
class PredictedTransfers:
    nodes: tuple
    matrix: np.ndarray
    provenance: dict

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        off = ~np.eye(len(self.nodes), dtype=bool)
        if m.shape != (len(self.nodes),) * 2 or not np.all(m[off] > 0) or not np.all(np.isfinite(m)):
            raise InputError("predicted transfers must be a positive finite N x N matrix")
        object.__setattr__(self, "matrix", m)
        check_provenance(self.provenance)

    def symmetric(self):
        return self.matrix + self.matrix.T

    def reorder(self, order):
        idx = {v: k for k, v in enumerate(self.nodes)}
        take = np.array([idx[v] for v in order])
        return PredictedTransfers(tuple(order), self.matrix[np.ix_(take, take)], self.provenance)

    def to_json(self):
        return json.dumps({"nodes": list(self.nodes), "matrix": self.matrix.tolist(),
                           "provenance": self.provenance}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(tuple(d["nodes"]), np.array(d["matrix"], dtype=float), d["provenance"])


def check_provenance(provenance):
    """Refuse predictions from fits that saw quality covariates or kept random effects."""
    spec = provenance.get("stage1_spec", {})
    used = set(spec.get("sender", ())) | set(spec.get("receiver", ()))
    leaked = sorted(used & set(QUALITY_COLUMNS))
    if provenance.get("include_quality", True) or spec.get("include_quality", False) or leaked:
        raise ProvenanceError(
            "predicted transfers come from a first-stage fit that used quality covariates "
            f"{leaked or list(QUALITY_COLUMNS)}; the outcome regression would be circular")
    if not provenance.get("effects_excluded", False):
        raise ProvenanceError("predicted transfers must exclude hospital random effects")


def predict_transfers(samples, design):
    """Posterior mean of exp(x_ij' beta) over the saved draws, without a, b or nu."""
    provenance = {"include_quality": bool(samples.include_quality), "effects_excluded": True,
                  "excluded_covariates": list(QUALITY_COLUMNS), "stage1_spec": samples.spec,
                  "n_draws": int(samples.n_draws)}
    check_provenance(provenance)
    if list(design.names) != list(samples.names[:len(design.names)]) or \
            samples.beta_draws.shape[1] != design.X.shape[1]:
        raise InputError("design does not match the posterior's model terms")
    if tuple(design.nodes) != tuple(samples.nodes):
        raise InputError("design and posterior cover different nodes")
    bound = design.spec.clamp
    total = np.zeros(design.n_rows)
    for beta in samples.beta_draws:
        total += np.exp(np.clip(design.X @ beta, -bound, bound))
    return PredictedTransfers(design.nodes, design.to_matrix(total / samples.n_draws), provenance)


# -- outcome matrix and design ------------------------------------------------


@dataclass(frozen=True)
class QualityMatrix:
    """Symmetric pair outcome counts; ``node_counts`` is set when built from per-node counts."""

    nodes: tuple
    matrix: np.ndarray
    node_counts: np.ndarray = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        n = len(self.nodes)
        if m.shape != (n, n):
            raise InputError(f"outcome matrix has shape {m.shape}, expected {(n, n)}")
        off = ~np.eye(n, dtype=bool)
        if np.any(m[off] < 0) or np.any(m[off] != np.round(m[off])):
            raise InputError("pair outcomes must be non-negative integers")
        if np.any(m != m.T):
            raise InputError("pair outcome matrix must be symmetric")
        object.__setattr__(self, "matrix", m)

    def pair_vector(self):
        iu, ju = np.triu_indices(len(self.nodes), k=1)
        return self.matrix[iu, ju]

    def reorder(self, order):
        idx = {v: k for k, v in enumerate(self.nodes)}
        take = np.array([idx[v] for v in order])
        counts = None if self.node_counts is None else np.asarray(self.node_counts)[take]
        return QualityMatrix(tuple(order), self.matrix[np.ix_(take, take)], counts)


def overall_quality(nodes, counts):
    """Pair outcome W_ij = W_i + W_j from per-node adverse-outcome counts."""
    w = np.asarray(counts, dtype=float)
    if w.shape != (len(nodes),):
        raise InputError("need one outcome count per node")
    if np.any(w < 0):
        bad = nodes[int(np.flatnonzero(w < 0)[0])]
        raise InputError(f"negative outcome count for node {bad!r}")
    if np.any(w != np.round(w)):
        raise InputError("outcome counts must be integers")
    mat = w[:, None] + w[None, :]
    np.fill_diagonal(mat, 0.0)
    return QualityMatrix(tuple(nodes), mat, w)


@dataclass
class QualityModelSpec:
    averages: tuple = ("HD", "A", "F", "DW")
    ownership: bool = True
    shared: tuple = ("Teach", "Mono", "Techno")
    interaction: bool = False
    standardize: bool = True
    clamp: float = CLAMP

    def __post_init__(self):
        self.averages = tuple(self.averages)
        self.shared = tuple(self.shared)
        if self.interaction and not self.ownership:
            raise InputError("the transfers x ownership interaction needs the ownership term")

    def reference_levels(self):
        refs = {c: SHARED_LEVELS[0] for c in self.shared}
        if self.ownership:
            refs["own"] = OWN_LEVELS[0]
        return refs

    def to_dict(self):
        d = asdict(self)
        d["averages"], d["shared"] = list(self.averages), list(self.shared)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown QualityModelSpec fields: {sorted(unknown)}")
        return cls(**d)


def ownership_labels(public):
    """Category of every unordered pair (upper triangle order) from a 0/1 public flag."""
    public = np.asarray(public)
    iu, ju = np.triu_indices(public.size, k=1)
    both = public[iu] + public[ju]
    return np.array([OWN_LEVELS[0] if s == 2 else OWN_LEVELS[1] if s == 0 else OWN_LEVELS[2]
                     for s in both])


@dataclass
class QualityDesign:
    nodes: tuple
    names: list
    Z: np.ndarray
    y: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    own: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    spec: QualityModelSpec

    @property
    def n(self):
        return len(self.nodes)

    @property
    def n_pairs(self):
        return self.Z.shape[0]

    def node_pairs(self):
        n = self.n
        slots = np.zeros(n, dtype=np.int64)
        out = np.empty((n, n - 1), dtype=np.int64)
        for p, (i, j) in enumerate(zip(self.pair_i, self.pair_j)):
            out[i, slots[i]] = p
            out[j, slots[j]] = p
            slots[i] += 1
            slots[j] += 1
        return out

    def to_original(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        out = gamma / self.scale
        out[..., 0] = gamma[..., 0] - (gamma[..., 1:] * self.center[1:] / self.scale[1:]).sum(axis=-1)
        return out

    def raw_Z(self):
        return self.Z * self.scale + self.center


def build_quality_design(nodes, outcome, transfers, spec):
    """Pair-level design in canonical node order; returns a QualityDesign.

    Columns: intercept, transfers (T_ij + T_ji), pair averages, ownership
    dummies against public-public, shared-feature dummies against "neither",
    and optionally transfers x ownership products.  Empty non-reference
    levels of shared features are dropped; empty ownership levels are an
    error when the interaction is requested.
    """
    order = tuple(sorted(transfers.nodes))
    for label, have in (("node", nodes.nodes), ("outcome", outcome.nodes)):
        if set(have) != set(order):
            raise InputError(f"{label} table nodes do not match the predicted transfers")
    nodes = nodes.reorder(order)
    outcome = outcome.reorder(order)
    transfers = transfers.reorder(order)
    n = len(order)
    if n < 3:
        raise InputError("the outcome model needs at least three nodes")
    iu, ju = np.triu_indices(n, k=1)
    tsym = transfers.symmetric()[iu, ju]

    names, cols = ["intercept", "transfers"], [np.ones(iu.size), tsym]
    for c in spec.averages:
        v = nodes.column(c)
        names.append(c)
        cols.append(0.5 * (v[iu] + v[ju]))
    own = ownership_labels(nodes.column("Public")) if spec.ownership else np.array([])
    if spec.ownership:
        for level in OWN_LEVELS[1:]:
            ind = (own == level).astype(float)
            if not ind.any() and spec.interaction:
                raise InputError(f"ownership category {level!r} has no pairs; "
                                 "its interaction slope is not estimable")
            names.append(f"own:{level}")
            cols.append(ind)
    for c in spec.shared:
        v = nodes.column(c)
        if not np.all((v == 0) | (v == 1)):
            raise InputError(f"column {c!r} must be 0/1")
        count = v[iu] + v[ju]
        for k, level in ((1, "one"), (2, "both")):
            ind = (count == k).astype(float)
            if not ind.any():
                log.warning("dropping empty level %s:%s", c, level)
                continue
            names.append(f"{c}:{level}")
            cols.append(ind)
    if spec.interaction:
        for level in OWN_LEVELS[1:]:
            names.append(f"transfers:own:{level}")
            cols.append(tsym * (own == level))
    raw = np.column_stack(cols)
    k = raw.shape[1]
    center, scale = np.zeros(k), np.ones(k)
    if spec.standardize:
        for c in range(1, k):
            col = raw[:, c]
            sd = col.std(ddof=1)
            if sd == 0 or np.all((col == 0) | (col == 1)):
                continue
            center[c], scale[c] = col.mean(), sd
    return QualityDesign(order, names, (raw - center) / scale, outcome.matrix[iu, ju].astype(np.int64),
                         iu, ju, own, center, scale, spec)


# -- sampler ------------------------------------------------------------------


@dataclass
class QualityPosterior:
    names: list
    draws: np.ndarray        # raw-scale coefficients then sigma_u2, sigma_e2
    coef_draws: np.ndarray   # design scale
    u_draws: np.ndarray
    nodes: tuple
    acceptance: dict
    spec: dict
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def column(self, name):
        if name not in self.names:
            raise InputError(f"no parameter {name!r} in the outcome model")
        return self.draws[:, self.names.index(name)]

    def to_json(self):
        return json.dumps({"names": self.names, "draws": self.draws.tolist(),
                           "coef_draws": self.coef_draws.tolist(), "u_draws": self.u_draws.tolist(),
                           "nodes": list(self.nodes), "acceptance": self.acceptance,
                           "spec": self.spec, "config": self.config,
                           "provenance": self.provenance}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        k = len(d["names"])
        return cls(d["names"], np.array(d["draws"], dtype=float).reshape(-1, k),
                   np.array(d["coef_draws"], dtype=float).reshape(-1, k - len(SIGMA_NAMES)),
                   np.array(d["u_draws"], dtype=float).reshape(-1, len(d["nodes"])),
                   tuple(d["nodes"]), d["acceptance"], d["spec"], d["config"], d["provenance"])


class _QualityChain:
    prior_shape = 2.0
    prior_rate = 1.0

    def __init__(self, design, config, rng):
        self.d, self.cfg, self.rng = design, config, rng
        self.Z = design.Z
        self.y = design.y.astype(float)
        self.k = self.Z.shape[1]
        self.bound = design.spec.clamp
        self.node_pairs = design.node_pairs()
        # node-additive part of each column: least-squares fit of z_p by w_i + w_j
        n = design.n
        BtZ = np.zeros((n, self.k))
        np.add.at(BtZ, design.pair_i, self.Z)
        np.add.at(BtZ, design.pair_j, self.Z)
        self.M = np.linalg.solve((n - 2) * np.eye(n) + 1.0, BtZ)
        self.Z_res = self.Z - self.M[design.pair_i] - self.M[design.pair_j]
        self.ZrZr = self.Z_res.T @ self.Z_res
        self.MtM = self.M.T @ self.M
        self.curv_node = np.array([self.y[self.node_pairs[i]].sum() for i in range(design.n)]) + 0.5

        self.gamma = poisson_glm_start(self.Z, self.y)
        r = np.log(self.y + 0.5) - self.Z @ self.gamma
        node_mean = np.array([r[self.node_pairs[i]].mean() for i in range(design.n)])
        self.u = node_mean - 0.5 * r.mean()
        self.u -= self.u.mean()
        self.eps = r - self.u[design.pair_i] - self.u[design.pair_j]
        self.sigma_u2 = max(float(self.u.var()), 0.05)
        self.sigma_e2 = max(float(self.eps.var()), 0.05)
        self.eta = self.Z @ self.gamma + self.u[design.pair_i] + self.u[design.pair_j] + self.eps
        self.mu = np.empty_like(self.eta)
        _kernels.loglik_fill(self.y, self.eta, self.bound, self.mu)

        self.log_scale_gamma = np.log(2.38 / np.sqrt(self.k))
        self.log_scale_eps = np.full(design.n_pairs, np.log(1.5))
        self.log_scale_u = np.full(design.n, np.log(1.5))
        self._refresh_precond()
        self.accept = {"coefficients": [0, 0], "pair": [0, 0], "node": [0, 0]}

    def _refresh_precond(self):
        """Shear weights and proposal covariance for the coefficient move.

        A coefficient step moves the node effects by minus its node-additive
        part, and pair residuals absorb a data-weighted share of the rest.
        """
        v = self.sigma_e2
        self.shear = self.mu * v / (1 + self.mu * v)
        w = (1 - self.shear) ** 2 * self.mu + self.shear ** 2 / v
        A = (self.Z_res.T @ (w[:, None] * self.Z_res) + self.M.T @ self.M / self.sigma_u2
             + np.eye(self.k) / self.cfg.beta_prior_var)
        self.gamma_chol = np.linalg.cholesky(np.linalg.inv(A))

    def update_gamma(self, adapt, t):
        cfg = self.cfg
        z = self.rng.standard_normal(self.k)
        logu = np.log(self.rng.random())
        step = np.exp(self.log_scale_gamma) * (self.gamma_chol @ z)
        zs = self.Z_res @ step
        prop_eta = self.eta + (1 - self.shear) * zs
        prop_eps = self.eps - self.shear * zs
        prop_u = self.u - self.M @ step
        prop_mu = np.empty_like(self.mu)
        cur = _kernels.loglik_cached(self.y, self.eta, self.mu, self.bound)
        if not np.isfinite(cur):
            raise NumericalError("non-finite log-likelihood after clamping",
                                 {"gamma": self.gamma.tolist()})
        new = _kernels.loglik_fill(self.y, prop_eta, self.bound, prop_mu)
        g1 = self.gamma + step
        delta = (new - cur - 0.5 * (g1 @ g1 - self.gamma @ self.gamma) / cfg.beta_prior_var
                 - 0.5 * (prop_eps @ prop_eps - self.eps @ self.eps) / self.sigma_e2
                 - 0.5 * (prop_u @ prop_u - self.u @ self.u) / self.sigma_u2)
        ok = logu < delta
        if ok:
            self.gamma, self.eps, self.eta, self.mu = g1, prop_eps, prop_eta, prop_mu
            self.u = prop_u
        self.accept["coefficients"][0] += int(ok)
        self.accept["coefficients"][1] += 1
        if adapt:
            self.log_scale_gamma += _rm_step(t, cfg.adapt_window) * (np.exp(min(delta, 0.0)) - cfg.target_beta)
        if not cfg.interweave:
            return
        # Gibbs draw with the predictor and u + M gamma held fixed
        d = self.d
        shifted = self.u + self.M @ self.gamma
        r = self.eta - shifted[d.pair_i] - shifted[d.pair_j]
        A = self.ZrZr / self.sigma_e2 + self.MtM / self.sigma_u2 + np.eye(self.k) / cfg.beta_prior_var
        h = self.Z_res.T @ r / self.sigma_e2 + self.M.T @ shifted / self.sigma_u2
        L = np.linalg.cholesky(A)
        self.gamma = np.linalg.solve(A, h) + np.linalg.solve(L.T, self.rng.standard_normal(self.k))
        self.u = shifted - self.M @ self.gamma
        self.eps = r - self.Z_res @ self.gamma

    def update_eps(self, adapt, t):
        prec = 1.0 / self.sigma_e2
        scales = np.exp(self.log_scale_eps) / np.sqrt(self.y + 0.5 + prec)
        z = self.rng.standard_normal(self.d.n_pairs)
        logu = np.log(self.rng.random(self.d.n_pairs))
        alpha = _kernels.sym_pair_mh(self.eta, self.mu, self.y, self.eps, scales, z, logu, prec, self.bound)
        self.accept["pair"][0] += int((logu < np.log(np.maximum(alpha, 1e-300))).sum())
        self.accept["pair"][1] += alpha.size
        if adapt:
            self.log_scale_eps += _rm_step(t, self.cfg.adapt_window) * (alpha - self.cfg.target_scalar)

    def update_u(self, adapt, t):
        n = self.d.n
        prec_u = 1.0 / self.sigma_u2
        scales = np.exp(self.log_scale_u) / np.sqrt(self.curv_node + prec_u)
        z = self.rng.standard_normal(n)
        logu = np.log(self.rng.random(n))
        alpha = _kernels.sym_node_mh(self.eta, self.mu, self.y, self.node_pairs, self.u, prec_u,
                                     scales, z, logu, self.bound)
        self.accept["node"][0] += int((logu < np.log(np.maximum(alpha, 1e-300))).sum())
        self.accept["node"][1] += n
        if adapt:
            self.log_scale_u += _rm_step(t, self.cfg.adapt_window) * (alpha - self.cfg.target_scalar)
        if self.cfg.interweave:
            _kernels.sym_node_centered(self.eps, self.node_pairs, self.u, 1.0 / self.sigma_e2, prec_u,
                                       self.rng.standard_normal(n))

    def update_variances(self):
        a, b = self.prior_shape, self.prior_rate
        self.sigma_u2 = (b + 0.5 * self.u @ self.u) / self.rng.gamma(a + 0.5 * self.d.n)
        self.sigma_e2 = (b + 0.5 * self.eps @ self.eps) / self.rng.gamma(a + 0.5 * self.d.n_pairs)

    def sweep(self, adapt, t):
        self.update_gamma(adapt, t)
        self.update_eps(adapt, t)
        self.update_u(adapt, t)
        self.update_variances()

    def run(self):
        cfg, d = self.cfg, self.d
        for t in range(cfg.burn_in):
            self.sweep(True, t)
            if (t + 1) % 200 == 0 and t + 1 < cfg.burn_in:
                self._refresh_precond()
        burn = {k: v[0] / max(v[1], 1) for k, v in self.accept.items()}
        self.accept = {k: [0, 0] for k in self.accept}
        m = cfg.n_draws
        coef = np.empty((m, self.k))
        sig = np.empty((m, 2))
        u = np.empty((m, d.n))
        for t in range(cfg.main_iterations):
            self.sweep(False, t)
            if (t + 1) % cfg.thin == 0:
                k = (t + 1) // cfg.thin - 1
                coef[k], sig[k], u[k] = self.gamma, (self.sigma_u2, self.sigma_e2), self.u
        if not (np.all(np.isfinite(coef)) and np.all(np.isfinite(sig))):
            raise NumericalError("non-finite draws in the outcome model", {"gamma": self.gamma.tolist()})
        acceptance = {k: v[0] / max(v[1], 1) for k, v in self.accept.items()}
        acceptance.update({f"burn_in:{k}": v for k, v in burn.items()})
        draws = np.column_stack([d.to_original(coef), sig])
        return QualityPosterior(list(d.names) + SIGMA_NAMES, draws, coef, u, d.nodes, acceptance,
                                d.spec.to_dict(), cfg.to_dict())


def fit_quality_model(outcome, transfers, spec, config, nodes):
    """Fit the pair-outcome model; ``transfers`` must carry clean provenance."""
    check_provenance(transfers.provenance)
    design = build_quality_design(nodes, outcome, transfers, spec)
    post = _QualityChain(design, config, substream(config.seed, "quality-chain")).run()
    post.provenance = dict(transfers.provenance)
    return post, design


def summarize_quality(post):
    """Summary rows plus an effect-size row for the transfers coefficient."""
    rows = summarize_draws(post.names, post.draws)
    xi = post.column("transfers")
    es = effect_size(xi)
    lo, hi = credible_interval(es)
    rows.append({"parameter": "effect_size_percent", "mean": float(effect_size(xi.mean())),
                 "sd": float(es.std(ddof=1)), "pseudo_p": float("nan"), "stars": "",
                 "ci_low": float(lo), "ci_high": float(hi)})
    return rows


def ownership_interaction(post):
    """Per-ownership marginal transfers slopes, one column of draws per category."""
    if "transfers:own:private-private" not in post.names:
        raise InputError("posterior was fitted without the ownership interaction")
    base = post.column("transfers")
    slopes = {OWN_LEVELS[0]: base}
    for level in OWN_LEVELS[1:]:
        slopes[level] = base + post.column(f"transfers:own:{level}")
    return slopes


# -- exports and robustness ---------------------------------------------------


def expected_outcome(post, design):
    """Posterior mean of E(W_ij | gamma, u, sigma_e2) per unordered pair."""
    total = np.zeros(design.n_pairs)
    sig_e = post.column("sigma_e2")
    for k in range(post.n_draws):
        eta = design.Z @ post.coef_draws[k] + post.u_draws[k, design.pair_i] + post.u_draws[k, design.pair_j]
        total += np.exp(np.clip(eta + 0.5 * sig_e[k], -design.spec.clamp, design.spec.clamp))
    return total / post.n_draws


def heatmap_export(post, design, nodes, network, ownership=None):
    """Long-format heatmap cells sorted by discharges (descending) on both axes.

    Each row is (row_id, col_id, observed_transfers, predicted_outcome_per_discharge,
    log_value, is_zero); ``log_value`` is None for cells with no observed transfer.
    """
    if ownership is not None and ownership not in OWN_LEVELS:
        raise InputError(f"unknown ownership filter {ownership!r}")
    nodes = nodes.reorder(design.nodes)
    hd = nodes.column("HD")
    public = nodes.column("Public")
    n = design.n
    pred = np.zeros((n, n))
    pred[design.pair_i, design.pair_j] = expected_outcome(post, design)
    pred += pred.T
    observed = network.matrix(design.nodes)
    order = sorted(range(n), key=lambda i: (-hd[i], design.nodes[i]))
    rows = []
    for i in order:
        for j in order:
            if i == j:
                continue
            if ownership is not None:
                s = public[i] + public[j]
                level = OWN_LEVELS[0] if s == 2 else OWN_LEVELS[1] if s == 0 else OWN_LEVELS[2]
                if level != ownership:
                    continue
            value = pred[i, j] / (hd[i] + hd[j])
            zero = observed[i, j] == 0
            rows.append((design.nodes[i], design.nodes[j], int(observed[i, j]), float(value),
                         None if zero else float(np.log(value)), bool(zero)))
    return rows


def dc_threshold_robustness(nodes, dyads, net, thresholds, spec, config):
    """Refit the first stage for each DC threshold; Pearson correlations of the predicted transfers."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise InputError("need at least one threshold")
    dmax = dyads.distance.max()
    for t in thresholds:
        if not 0 < t < dmax:
            raise InputError(f"threshold {t} outside (0, {dmax:.3g}) minutes")
    spec = SrmSpec.from_dict({**spec.to_dict(), "include_quality": False})
    vectors = []
    for t in thresholds:
        table = with_geo_covariates(nodes, dyads, t)
        design = assemble_design(table, dyads, net, spec)
        samples = fit_srm(design, config)
        vectors.append(design.from_matrix(predict_transfers(samples, design).matrix))
    if len(vectors) == 1:
        return thresholds, np.ones((1, 1))
    return thresholds, np.corrcoef(np.array(vectors))


def stage2_replicate(truth, config):
    """One two-stage recovery replicate scored on the outcome-model parameters."""
    from .synth import _score, simulate_stage1, simulate_stage2, stage1_truth_values

    nodes, dyads, net = simulate_stage1(truth)
    spec = SrmSpec.from_dict({**truth.spec.to_dict(), "include_quality": False})
    design1 = assemble_design(nodes, dyads, net, spec)
    samples = fit_srm(design1, config)
    transfers = predict_transfers(samples, design1)
    outcome = simulate_stage2(truth, transfers, nodes)
    qspec = truth.stage2.model_spec()
    cfg2 = McmcConfig.from_dict({**config.to_dict(),
                                 "seed": int(substream(config.seed, "stage2").integers(2**62))})
    post, _ = fit_quality_model(outcome, transfers, qspec, cfg2, nodes)
    true_values = truth.stage2.true_values()
    result = _score(post.names, post.draws, true_values, post.acceptance)
    result["stage1"] = _score(samples.names, samples.draws, stage1_truth_values(truth),
                              samples.acceptance)
    if qspec.interaction:
        slopes = ownership_interaction(post)
        result["slope_means"] = {k: float(v.mean()) for k, v in slopes.items()}
    return result
