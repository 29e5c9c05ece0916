"""Posterior-predictive goodness of fit on three network statistics.

The statistics are the spread of row means, the spread of column means and
the within-dyad correlation of a count matrix.  Replicate networks redraw
node effects and dyad residuals from their fitted distributions, so the check
targets the marginal law of the network rather than the fitted effects.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .rng import substream

STATISTICS = ("sd_row_means", "sd_col_means", "dyad_correlation")


@dataclass(frozen=True)
class GofTriple:
    sd_row_means: float
    sd_col_means: float
    dyad_correlation: float  # nan when undefined
    correlation_undefined: bool = False

    def as_tuple(self):
        return (self.sd_row_means, self.sd_col_means, self.dyad_correlation)

    def to_dict(self):
        return {"sd_row_means": self.sd_row_means, "sd_col_means": self.sd_col_means,
                "dyad_correlation": None if self.correlation_undefined else self.dyad_correlation,
                "correlation_undefined": self.correlation_undefined}

    @classmethod
    def from_dict(cls, d):
        undefined = bool(d["correlation_undefined"])
        corr = float("nan") if undefined else float(d["dyad_correlation"])
        return cls(float(d["sd_row_means"]), float(d["sd_col_means"]), corr, undefined)


def _triples_batch(counts):
    """Vectorised triples for a stack of (R, N, N) matrices; returns (R, 3) with nan corr when undefined."""
    counts = np.asarray(counts, dtype=float)
    n = counts.shape[-1]
    off = ~np.eye(n, dtype=bool)
    masked = counts * off
    row_means = masked.sum(axis=-1) / (n - 1)
    col_means = masked.sum(axis=-2) / (n - 1)
    x = counts[:, off]
    y = np.swapaxes(counts, -1, -2)[:, off]
    xc = x - x.mean(axis=1, keepdims=True)
    # x and y hold the same multiset, so both variances are equal
    var = (xc * xc).sum(axis=1)
    cov = (xc * (y - y.mean(axis=1, keepdims=True))).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(var > 0, cov / np.where(var > 0, var, 1.0), np.nan)
    corr = np.clip(corr, -1.0, 1.0)
    return np.column_stack([row_means.std(axis=1, ddof=1), col_means.std(axis=1, ddof=1), corr])


def network_stat_triple(counts):
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise InputError("count matrix must be square")
    if counts.shape[0] < 3:
        raise InputError("network statistics need at least 3 nodes")
    row = _triples_batch(counts[None])[0]
    undefined = bool(np.isnan(row[2]))
    return GofTriple(float(row[0]), float(row[1]), float(row[2]), undefined)


@dataclass
class GofReport:
    observed: GofTriple
    replicates: list
    quantiles: dict

    def replicate_array(self):
        return np.array([t.as_tuple() for t in self.replicates], dtype=float)

    def flagged(self, level=0.95):
        """Statistics whose observed quantile falls outside the central ``level`` interval."""
        lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
        return [k for k, q in self.quantiles.items() if q is not None and not lo < q < hi]

    def to_json(self):
        return json.dumps({"observed": self.observed.to_dict(),
                           "replicates": [t.to_dict() for t in self.replicates],
                           "quantiles": self.quantiles}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(GofTriple.from_dict(d["observed"]),
                   [GofTriple.from_dict(t) for t in d["replicates"]], d["quantiles"])

    def histogram_rows(self, statistic):
        """(draw, value) rows for one statistic, skipping undefined correlations."""
        k = STATISTICS.index(statistic)
        return [(i, t.as_tuple()[k]) for i, t in enumerate(self.replicates)
                if not (k == 2 and t.correlation_undefined)]


def predictive_quantile(observed, replicates):
    """Mid-rank share of replicates below the observed value (ties count half)."""
    reps = np.asarray(replicates, dtype=float)
    reps = reps[~np.isnan(reps)]
    if reps.size == 0 or np.isnan(observed):
        return None
    return float((np.sum(reps < observed) + 0.5 * np.sum(reps == observed)) / reps.size)


def simulate_replicate_counts(design, beta, sigma_ab, sigma_nu2, rho, rng):
    """One count matrix from the generative law with freshly drawn effects."""
    n = design.n
    ab = rng.multivariate_normal(np.zeros(2), sigma_ab, size=n, method="cholesky")
    cov_nu = sigma_nu2 * np.array([[1.0, rho], [rho, 1.0]])
    pairs = rng.multivariate_normal(np.zeros(2), cov_nu, size=design.n_pairs, method="cholesky")
    nu = np.empty(design.n_rows)
    nu[design.pair_rows[:, 0]], nu[design.pair_rows[:, 1]] = pairs[:, 0], pairs[:, 1]
    eta = design.X @ beta + ab[design.src, 0] + ab[design.dst, 1] + nu
    counts = rng.poisson(np.exp(np.clip(eta, -design.spec.clamp, design.spec.clamp)))
    return design.to_matrix(counts)


def posterior_predictive_gof(samples, design, observed, seed=0):
    """Compare the observed triple with one replicate network per saved draw.

    ``seed`` may be an int or a numpy Generator; each draw uses its own
    substream when an int is given, so results do not depend on draw order.
    """
    if samples.n_draws < 1:
        raise InputError("posterior has no draws")
    if tuple(samples.nodes) != tuple(design.nodes):
        raise InputError("posterior and design cover different nodes")
    obs_matrix = observed.matrix(design.nodes) if hasattr(observed, "matrix") else observed
    obs = network_stat_triple(obs_matrix)
    var = {name: samples.column(name) for name in ("sigma_a2", "sigma_ab", "sigma_b2",
                                                     "sigma_nu2", "rho")}
    reps = []
    for k in range(samples.n_draws):
        rng = seed if isinstance(seed, np.random.Generator) else substream(seed, f"gof-draw-{k}")
        sab = np.array([[var["sigma_a2"][k], var["sigma_ab"][k]],
                        [var["sigma_ab"][k], var["sigma_b2"][k]]])
        mat = simulate_replicate_counts(design, samples.beta_draws[k], sab, var["sigma_nu2"][k],
                                        var["rho"][k], rng)
        reps.append(network_stat_triple(mat))
    arr = np.array([t.as_tuple() for t in reps], dtype=float)
    quantiles = {name: predictive_quantile(obs.as_tuple()[i], arr[:, i])
                 for i, name in enumerate(STATISTICS)}
    return GofReport(obs, reps, quantiles)

