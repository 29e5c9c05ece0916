"""Social-relations model for directed counts: data tables, design, likelihood.

Every ordered pair (i, j), i != j, is one observation, zero counts included.
The log-mean is

    eta_ij = x_ij' beta + a_i + b_j + nu_ij

with (a_i, b_i) ~ MVN(0, Sigma_ab) and (nu_ij, nu_ji) ~ MVN(0, Sigma_nu),
Sigma_nu = sigma_nu2 * [[1, rho], [rho, 1]].
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import InputError
from .network import geo_threshold_network

NODE_COLUMNS = ("HD", "DW", "A", "F", "DC", "BW", "Teach", "Mono", "Techno",
                "Public", "AM", "AR", "BS", "BT")
BINARY_COLUMNS = ("Teach", "Mono", "Techno", "Public")
QUALITY_COLUMNS = ("AM", "AR")
DYAD_COLUMNS = ("D", "CM")
LOG_COLUMNS = ("HD",)
CLAMP = 30.0


@dataclass
class NodeTable:
    """Per-node covariates; ``columns`` maps a covariate name to a length-N array."""

    nodes: tuple
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        cols = {}
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (len(self.nodes),):
                raise InputError(f"column {name!r} has {arr.size} values for {len(self.nodes)} nodes")
            cols[name] = arr
        self.columns = cols
        self._validate()

    def _validate(self):
        for name in ("F",):
            if name in self.columns and np.any((self.columns[name] < 0) | (self.columns[name] > 1)):
                raise InputError(f"share column {name!r} must lie in [0, 1]")
        if "BS" in self.columns and np.any((self.columns["BS"] < 0) | (self.columns["BS"] > 100)):
            raise InputError("BS must lie in [0, 100]")
        if "HD" in self.columns and np.any(self.columns["HD"] <= 0):
            raise InputError("HD must be positive (it enters on the log scale)")

    def column(self, name):
        if name not in self.columns:
            raise InputError(f"node table has no column {name!r}")
        values = self.columns[name]
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise InputError(f"missing value for node {self.nodes[bad[0]]!r} in column {name!r}")
        return values

    def reorder(self, order):
        idx = {v: k for k, v in enumerate(self.nodes)}
        take = np.array([idx[v] for v in order])
        return NodeTable(tuple(order), {k: v[take] for k, v in self.columns.items()})

    def with_column(self, name, values):
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=float)
        return NodeTable(self.nodes, cols)


@dataclass
class DyadTable:
    """Symmetric travel times (minutes) and LHA co-membership over ordered pairs."""

    nodes: tuple
    distance: np.ndarray
    co_membership: np.ndarray

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        n = len(self.nodes)
        self.distance = np.asarray(self.distance, dtype=float)
        self.co_membership = np.asarray(self.co_membership, dtype=float)
        for name, mat in (("distance", self.distance), ("co_membership", self.co_membership)):
            if mat.shape != (n, n):
                raise InputError(f"dyad {name} matrix has shape {mat.shape}, expected {(n, n)}")
            off = ~np.eye(n, dtype=bool)
            if not np.all(np.isfinite(mat[off])):
                raise InputError(f"dyad table incomplete: missing {name} values")
            if np.any(np.abs(mat - mat.T)[off] > 1e-9):
                raise InputError(f"dyad {name} is not symmetric")
        if np.any(self.distance[~np.eye(n, dtype=bool)] < 0):
            raise InputError("negative travel time")
        np.fill_diagonal(self.distance, 0.0)
        np.fill_diagonal(self.co_membership, 0.0)

    def matrix(self, name):
        if name == "D":
            return self.distance
        if name == "CM":
            return self.co_membership
        raise InputError(f"unknown dyad covariate {name!r}")

    def reorder(self, order):
        idx = {v: k for k, v in enumerate(self.nodes)}
        take = np.array([idx[v] for v in order])
        return DyadTable(tuple(order), self.distance[np.ix_(take, take)],
                         self.co_membership[np.ix_(take, take)])


def with_geo_covariates(nodes, dyads, threshold=30.0):
    """Add DC (degree) and BW (rescaled betweenness) from the travel-time threshold network."""
    geo = geo_threshold_network(dyads.nodes, dyads.distance, threshold)
    deg, bw = geo.degree(), geo.betweenness()
    table = nodes.with_column("DC", [deg[v] for v in nodes.nodes])
    return table.with_column("BW", [bw[v] for v in nodes.nodes])


@dataclass
class SrmSpec:
    sender: tuple = ("HD", "DC")
    receiver: tuple = ("HD", "DC")
    dyad: tuple = ("D", "CM")
    include_quality: bool = False
    standardize: bool = True
    clamp: float = CLAMP

    def __post_init__(self):
        self.sender = tuple(self.sender)
        self.receiver = tuple(self.receiver)
        self.dyad = tuple(self.dyad)
        if self.include_quality:
            self.sender += tuple(c for c in QUALITY_COLUMNS if c not in self.sender)
            self.receiver += tuple(c for c in QUALITY_COLUMNS if c not in self.receiver)
        else:
            self.sender = tuple(c for c in self.sender if c not in QUALITY_COLUMNS)
            self.receiver = tuple(c for c in self.receiver if c not in QUALITY_COLUMNS)
        for c in self.dyad:
            if c not in DYAD_COLUMNS:
                raise InputError(f"unknown dyad covariate {c!r}")
        if self.clamp <= 0:
            raise InputError("clamp bound must be positive")

    def term_names(self):
        return (["intercept"] + [f"origin:{c}" for c in self.sender]
                + [f"destination:{c}" for c in self.receiver] + list(self.dyad))

    def to_dict(self):
        d = asdict(self)
        for k in ("sender", "receiver", "dyad"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown SrmSpec fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class DyadDesign:
    """Design over the N(N-1) ordered pairs, in canonical (sorted node id) order.

    Rows are ordered lexicographically by (src, dst).  ``pair_rows[p]`` holds
    the two row indices (i->j, j->i) of unordered pair p, with i < j.
    """

    nodes: tuple
    names: list
    X: np.ndarray          # (n_rows, k), standardized when spec.standardize
    y: np.ndarray          # (n_rows,)
    src: np.ndarray
    dst: np.ndarray
    pair_rows: np.ndarray  # (P, 2)
    center: np.ndarray
    scale: np.ndarray
    spec: SrmSpec

    @property
    def n(self):
        return len(self.nodes)

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def n_pairs(self):
        return self.pair_rows.shape[0]

    def to_matrix(self, rows, fill=0.0):
        out = np.full((self.n, self.n), fill, dtype=np.asarray(rows).dtype)
        out[self.src, self.dst] = rows
        return out

    def from_matrix(self, mat):
        return np.asarray(mat)[self.src, self.dst]

    def to_original(self, beta):
        """Map coefficients fitted on the standardized design back to raw covariate units.

        Works row-wise on a (..., k) array of draws.
        """
        beta = np.asarray(beta, dtype=float)
        out = beta / self.scale
        shift = (beta[..., 1:] * self.center[1:] / self.scale[1:]).sum(axis=-1)
        out[..., 0] = beta[..., 0] - shift
        return out

    def raw_X(self):
        return self.X * self.scale + self.center


def ordered_pairs(n):
    src, dst = np.nonzero(~np.eye(n, dtype=bool))
    return src, dst


def _pair_rows(n, src, dst):
    row_of = np.full((n, n), -1)
    row_of[src, dst] = np.arange(src.size)
    iu, ju = np.triu_indices(n, k=1)
    return np.stack([row_of[iu, ju], row_of[ju, iu]], axis=1)


def _is_binary(col):
    return bool(np.all((col == 0) | (col == 1)))


def assemble_design(nodes, dyads, net, spec):
    """Stack sender, receiver and dyad terms for every ordered pair."""
    order = tuple(sorted(net.nodes))
    for table, label in ((nodes, "node"), (dyads, "dyad")):
        if set(table.nodes) != set(order):
            raise InputError(f"{label} table nodes do not match the network nodes")
    nodes = nodes.reorder(order)
    dyads = dyads.reorder(order)
    n = len(order)
    if n < 2:
        raise InputError("need at least two nodes")
    src, dst = ordered_pairs(n)
    counts = net.matrix(order)

    cols = [np.ones(src.size)]
    for side, idx in ((spec.sender, src), (spec.receiver, dst)):
        for name in side:
            values = nodes.column(name)
            if name in LOG_COLUMNS:
                values = np.log(values)
            cols.append(values[idx])
    for name in spec.dyad:
        cols.append(dyads.matrix(name)[src, dst])
    raw = np.column_stack(cols)

    k = raw.shape[1]
    center, scale = np.zeros(k), np.ones(k)
    if spec.standardize:
        for c in range(1, k):
            col = raw[:, c]
            sd = col.std(ddof=1)
            if _is_binary(col) or sd == 0:
                continue
            center[c], scale[c] = col.mean(), sd
    X = (raw - center) / scale
    return DyadDesign(order, spec.term_names(), X, counts[src, dst].astype(np.int64),
                      src, dst, _pair_rows(n, src, dst), center, scale, spec)


def linear_predictor(design, beta, a, b, nu, clamp=True):
    """eta over ordered-pair rows; clamped to +-spec.clamp unless ``clamp`` is False."""
    beta = np.asarray(beta, dtype=float)
    a, b, nu = (np.asarray(v, dtype=float) for v in (a, b, nu))
    if beta.shape != (design.X.shape[1],):
        raise InputError(f"beta has shape {beta.shape}, design has {design.X.shape[1]} columns")
    if a.shape != (design.n,) or b.shape != (design.n,):
        raise InputError("node effect vectors must have one entry per node")
    if nu.shape != (design.n_rows,):
        raise InputError("nu must have one entry per ordered pair")
    eta = design.X @ beta + a[design.src] + b[design.dst] + nu
    if clamp:
        bound = design.spec.clamp
        eta = np.clip(eta, -bound, bound)
    return eta


def poisson_loglik(counts, eta):
    counts = np.asarray(counts)
    eta = np.asarray(eta, dtype=float)
    if counts.shape != eta.shape:
        raise InputError("counts and eta differ in shape")
    if np.any(counts < 0):
        raise InputError("negative counts")
    if not np.all(np.asarray(counts, dtype=float) == np.round(counts)):
        raise InputError("Poisson counts must be integers")
    return float(np.sum(counts * eta - np.exp(eta) - gammaln(counts + 1.0)))


@dataclass(frozen=True)
class DyadCovarianceParams:
    sigma_a2: float
    sigma_b2: float
    sigma_ab: float
    sigma_nu2: float
    rho: float

    def __post_init__(self):
        if self.sigma_a2 < 0 or self.sigma_b2 < 0 or self.sigma_nu2 < 0:
            raise InputError("variances must be non-negative")
        if self.sigma_ab ** 2 > self.sigma_a2 * self.sigma_b2 + 1e-12:
            raise InputError("Sigma_ab is not positive semidefinite")
        if not -1 < self.rho < 1:
            raise InputError("rho must lie in (-1, 1)")

    @property
    def sigma_ab_matrix(self):
        return np.array([[self.sigma_a2, self.sigma_ab], [self.sigma_ab, self.sigma_b2]])

    @property
    def sigma_nu_matrix(self):
        return self.sigma_nu2 * np.array([[1.0, self.rho], [self.rho, 1.0]])


def implied_moments(params):
    """Second moments of eps_ij = a_i + b_j + nu_ij for the six index patterns (i, j, k, l distinct)."""
    p = params
    return {
        "ij,ij": p.sigma_a2 + p.sigma_b2 + p.sigma_nu2,
        "ij,ik": p.sigma_a2,
        "ij,ji": p.rho * p.sigma_nu2 + 2 * p.sigma_ab,
        "ij,kj": p.sigma_b2,
        "ij,kl": 0.0,
        "ij,ki": p.sigma_ab,
    }
