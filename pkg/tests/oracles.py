"""Brute-force reference implementations used only by the tests.

Nothing here shares code with the package; each function works straight from
the definition, trading speed for obviousness.
"""

from functools import lru_cache

import numpy as np


def random_digraph(rng, n, p=0.35, max_count=4):
    mat = rng.integers(1, max_count + 1, size=(n, n)) * (rng.random((n, n)) < p)
    np.fill_diagonal(mat, 0)
    return mat


def degree_oracle(mat, direction):
    arcs = (np.asarray(mat) > 0).astype(int)
    return arcs.sum(axis=1) if direction == "out" else arcs.sum(axis=0)


def floyd_warshall(mat):
    n = len(mat)
    inf = float("inf")
    dist = [[0 if i == j else (1 if mat[i][j] > 0 else inf) for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    return dist


def closeness_oracle(mat, direction):
    mat = np.asarray(mat)
    if direction == "in":
        mat = mat.T
    n = len(mat)
    dist = floyd_warshall(mat.tolist())
    out = []
    for v in range(n):
        reach = [d for u, d in enumerate(dist[v]) if u != v and d < float("inf")]
        if not reach:
            out.append(0.0)
        else:
            out.append(len(reach) / sum(reach) * len(reach) / (n - 1))
    return np.array(out)


def all_simple_paths(mat, s, t):
    n = len(mat)
    paths = []

    def walk(path, seen):
        u = path[-1]
        if u == t:
            paths.append(list(path))
            return
        for w in range(n):
            if mat[u][w] > 0 and w not in seen:
                seen.add(w)
                path.append(w)
                walk(path, seen)
                path.pop()
                seen.discard(w)

    walk([s], {s})
    return paths


def betweenness_oracle(mat):
    """Raw directed betweenness by enumerating every s->t shortest path."""
    mat = np.asarray(mat).tolist()
    n = len(mat)
    bc = np.zeros(n)
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            paths = all_simple_paths(mat, s, t)
            if not paths:
                continue
            shortest = min(len(p) for p in paths)
            best = [p for p in paths if len(p) == shortest]
            for v in range(n):
                if v in (s, t):
                    continue
                bc[v] += sum(v in p for p in best) / len(best)
    return bc


def modularity_oracle(weights, labels):
    """Double sum straight from the definition."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    k = w.sum(axis=1)
    two_m = w.sum()
    q = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += w[i, j] - k[i] * k[j] / two_m
    return q / two_m


@lru_cache(maxsize=None)
def set_partitions(n):
    """All partitions of range(n) as restricted growth strings, shape (Bell(n), n)."""
    out = []

    def grow(prefix, top):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for c in range(top + 2):
            grow(prefix + [c], max(top, c))

    grow([0], 0)
    return np.array(out, dtype=np.int64)


def best_modularity(weights):
    """Exhaustive optimum over every set partition, vectorised over partitions."""
    w = np.asarray(weights, dtype=float)
    parts = set_partitions(len(w))
    k = w.sum(axis=1)
    two_m = w.sum()
    b = w - np.outer(k, k) / two_m
    same = parts[:, :, None] == parts[:, None, :]
    q = (same * b).sum(axis=(1, 2)) / two_m
    best = int(np.argmax(q))
    return float(q[best]), parts[best]


def pearson_by_hand(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx * syy) ** 0.5


def simulate_error_moments(params, n_samples, rng):
    """Monte Carlo second moments of eps_ij = a_i + b_j + nu_ij for the six index patterns.

    Each sample draws four fresh nodes i, j, k, l and the residual pairs it
    needs, straight from the generative law.  Returns (estimates, standard errors).
    """
    p = params
    sab = np.array([[p.sigma_a2, p.sigma_ab], [p.sigma_ab, p.sigma_b2]])
    snu = p.sigma_nu2 * np.array([[1.0, p.rho], [p.rho, 1.0]])
    ab = rng.multivariate_normal(np.zeros(2), sab, size=(n_samples, 4))
    a, b = ab[..., 0], ab[..., 1]
    i, j, k, l = range(4)
    nu_ij, nu_ji = rng.multivariate_normal(np.zeros(2), snu, size=n_samples).T
    nu_ik, nu_ki = rng.multivariate_normal(np.zeros(2), snu, size=n_samples).T
    nu_kj = rng.multivariate_normal(np.zeros(2), snu, size=n_samples)[:, 0]
    nu_kl = rng.multivariate_normal(np.zeros(2), snu, size=n_samples)[:, 0]
    e_ij = a[:, i] + b[:, j] + nu_ij
    products = {
        "ij,ij": e_ij * e_ij,
        "ij,ik": e_ij * (a[:, i] + b[:, k] + nu_ik),
        "ij,ji": e_ij * (a[:, j] + b[:, i] + nu_ji),
        "ij,kj": e_ij * (a[:, k] + b[:, j] + nu_kj),
        "ij,kl": e_ij * (a[:, k] + b[:, l] + nu_kl),
        "ij,ki": e_ij * (a[:, k] + b[:, i] + nu_ki),
    }
    est = {key: float(v.mean()) for key, v in products.items()}
    se = {key: float(v.std(ddof=1) / np.sqrt(n_samples)) for key, v in products.items()}
    return est, se
