"""Directed count networks, centralities and modularity communities.

Shortest paths are unweighted: an arc i->j exists iff T_ij > 0.  Modularity
and community detection work on the symmetrized weights w_ij = T_ij + T_ji.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

IN, OUT = "in", "out"


@dataclass(frozen=True)
class DirectedCountNetwork:
    nodes: tuple
    counts: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.nodes)

    @property
    def index(self):
        return {v: k for k, v in enumerate(self.nodes)}

    def count(self, src, dst):
        return self.counts.get((src, dst), 0)

    def matrix(self, order=None):
        """Dense N x N integer matrix in ``order`` (defaults to ``nodes``)."""
        order = tuple(self.nodes if order is None else order)
        idx = {v: k for k, v in enumerate(order)}
        out = np.zeros((len(order), len(order)), dtype=np.int64)
        for (s, d), c in self.counts.items():
            if s in idx and d in idx:
                out[idx[s], idx[d]] = c
        return out

    def total(self):
        return sum(self.counts.values())

    def subnetwork(self, keep):
        keep = set(keep)
        nodes = tuple(v for v in self.nodes if v in keep)
        counts = {(s, d): c for (s, d), c in self.counts.items() if s in keep and d in keep}
        return DirectedCountNetwork(nodes, counts)

    def successors(self, direction=OUT):
        """Adjacency lists of positive-count arcs, as node-index lists sorted ascending."""
        idx = self.index
        adj = [[] for _ in self.nodes]
        for (s, d), c in self.counts.items():
            if c > 0:
                if direction == OUT:
                    adj[idx[s]].append(idx[d])
                else:
                    adj[idx[d]].append(idx[s])
        for lst in adj:
            lst.sort()
        return adj


def build_network(nodes, edges):
    """Build a network from (src, dst, count) triples, summing duplicates."""
    nodes = tuple(nodes)
    if len(set(nodes)) != len(nodes):
        raise InputError("duplicate node ids in node list")
    known = set(nodes)
    counts = {}
    for src, dst, c in edges:
        for v in (src, dst):
            if v not in known:
                raise InputError(f"unknown node id {v!r}")
        if src == dst:
            raise InputError(f"self-loop on node {src!r}")
        if int(c) != c:
            raise InputError(f"non-integer count {c!r} on ({src!r}, {dst!r})")
        if c < 0:
            raise InputError(f"negative count {c} on ({src!r}, {dst!r})")
        counts[(src, dst)] = counts.get((src, dst), 0) + int(c)
    counts = {k: v for k, v in counts.items() if v > 0}
    return DirectedCountNetwork(nodes, counts)


def network_from_matrix(nodes, mat):
    mat = np.asarray(mat)
    edges = [(nodes[i], nodes[j], int(mat[i, j]))
             for i in range(len(nodes)) for j in range(len(nodes)) if i != j and mat[i, j]]
    return build_network(nodes, edges)


def _check_direction(direction):
    if direction not in (IN, OUT):
        raise InputError(f"direction must be 'in' or 'out', got {direction!r}")


def degree_scores(net, direction):
    """Distinct in/out neighbours per node and the Freeman centralization.

    Centralization is sum(max - score) / (N - 1)**2, which is 1 for a star.
    """
    _check_direction(direction)
    adj = net.successors(direction)
    scores = {v: len(adj[k]) for k, v in enumerate(net.nodes)}
    n = net.n
    if n < 2:
        return scores, 0.0
    top = max(scores.values())
    central = sum(top - s for s in scores.values()) / (n - 1) ** 2
    return scores, float(central)


def strength_scores(net, direction):
    _check_direction(direction)
    scores = {v: 0 for v in net.nodes}
    for (s, d), c in net.counts.items():
        scores[s if direction == OUT else d] += c
    return scores


def _bfs(adj, source):
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def closeness_scores(net, direction):
    """Closeness on the reachable set, scaled by the reachable fraction.

    For node v with R reachable nodes at total distance S this is
    (R / S) * (R / (N - 1)); isolated nodes get 0.
    """
    _check_direction(direction)
    adj = net.successors(direction)
    n = net.n
    out = {}
    for k, v in enumerate(net.nodes):
        dist = _bfs(adj, k)
        reach = len(dist) - 1
        total = sum(dist.values())
        if reach == 0 or total == 0:
            out[v] = 0.0
        else:
            out[v] = (reach / total) * (reach / (n - 1))
    return out


def raw_betweenness(adj):
    """Brandes accumulation of pair dependencies on an adjacency list."""
    n = len(adj)
    bc = np.zeros(n)
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc


def minmax_rescale(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def betweenness_scores(net, rescale=True):
    """Directed shortest-path betweenness, min-max rescaled to [0, 1] by default."""
    bc = raw_betweenness(net.successors(OUT))
    if rescale:
        bc = minmax_rescale(bc)
    return {v: float(bc[k]) for k, v in enumerate(net.nodes)}


# -- modularity ---------------------------------------------------------------


def symmetric_weights(net):
    mat = net.matrix().astype(float)
    return mat + mat.T


def _labels_array(net, assignment):
    missing = [v for v in net.nodes if v not in assignment]
    if missing:
        raise InputError(f"partition does not cover node {missing[0]!r}")
    return np.array([assignment[v] for v in net.nodes])


def modularity_matrix(weights, labels):
    weights = np.asarray(weights, dtype=float)
    two_m = weights.sum()
    if two_m <= 0:
        raise InputError("empty network has undefined modularity")
    k = weights.sum(axis=1)
    _, labels = np.unique(labels, return_inverse=True)
    n_comm = labels.max() + 1
    member = np.zeros((weights.shape[0], n_comm))
    member[np.arange(weights.shape[0]), labels] = 1.0
    within = np.trace(member.T @ weights @ member)
    tot = member.T @ k
    return float(within / two_m - np.sum(tot ** 2) / two_m ** 2)


def modularity(net, assignment):
    """Newman modularity of ``assignment`` (node -> label) on w_ij = T_ij + T_ji."""
    return modularity_matrix(symmetric_weights(net), _labels_array(net, assignment))


@dataclass(frozen=True)
class CommunityPartition:
    assignment: dict
    modularity: float

    @property
    def n_communities(self):
        return len(set(self.assignment.values()))

    def communities(self):
        groups = {}
        for v, c in self.assignment.items():
            groups.setdefault(c, []).append(v)
        return [sorted(groups[c]) for c in sorted(groups)]


def _local_moves(weights, rng):
    """One Louvain level: greedily move nodes until no strict gain remains."""
    n = weights.shape[0]
    k = weights.sum(axis=1)
    two_m = k.sum()
    comm = np.arange(n)
    tot = k.copy()
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in rng.permutation(n):
            ci = comm[i]
            tot[ci] -= k[i]
            links = np.bincount(comm, weights=weights[i], minlength=n)
            links[ci] -= weights[i, i]
            # gain of placing i into community c, up to a common factor
            gain = links - tot * k[i] / two_m
            candidates = np.flatnonzero(links > 0)
            best, best_gain = ci, gain[ci]
            for c in candidates:
                if gain[c] > best_gain + 1e-12:
                    best, best_gain = c, gain[c]
            comm[i] = best
            tot[best] += k[i]
            if best != ci:
                improved = True
                moved_any = True
    _, comm = np.unique(comm, return_inverse=True)
    return comm, moved_any


def louvain_communities(net, seed=0):
    """Multilevel (Louvain) modularity maximisation on symmetrized weights.

    Nodes are swept in a seeded random order; a node moves to the community
    with the largest strictly positive gain, ties going to the lowest label.
    """
    weights = symmetric_weights(net)
    if weights.sum() <= 0:
        raise InputError("empty network has undefined modularity")
    rng = np.random.default_rng(seed)
    membership = np.arange(net.n)
    level_w = weights
    while True:
        comm, moved = _local_moves(level_w, rng)
        if not moved:
            break
        membership = comm[membership]
        n_comm = comm.max() + 1
        agg = np.zeros((n_comm, n_comm))
        np.add.at(agg, (comm[:, None], comm[None, :]), level_w)
        level_w = agg
    # dense labels by first appearance in node order
    relabel = {}
    labels = [relabel.setdefault(c, len(relabel)) for c in membership]
    assignment = {v: labels[k] for k, v in enumerate(net.nodes)}
    return CommunityPartition(assignment, modularity(net, assignment))


# -- geographic network -------------------------------------------------------


@dataclass(frozen=True)
class GeoNetwork:
    nodes: tuple
    adjacency: np.ndarray

    def degree(self):
        return {v: int(d) for v, d in zip(self.nodes, self.adjacency.sum(axis=1))}

    def betweenness(self):
        """Shortest-path betweenness on the undirected links, rescaled to [0, 1]."""
        adj = [list(np.flatnonzero(row)) for row in self.adjacency]
        bc = minmax_rescale(raw_betweenness(adj))
        return {v: float(b) for v, b in zip(self.nodes, bc)}

    def links(self):
        n = len(self.nodes)
        return {(self.nodes[i], self.nodes[j])
                for i in range(n) for j in range(i + 1, n) if self.adjacency[i, j]}


def geo_threshold_network(nodes, travel_minutes, threshold):
    """Link i and j (i != j) when their travel time is strictly below ``threshold``."""
    mat = np.asarray(travel_minutes, dtype=float)
    nodes = tuple(nodes)
    if mat.shape != (len(nodes), len(nodes)):
        raise InputError(f"travel matrix shape {mat.shape} does not match {len(nodes)} nodes")
    if threshold <= 0:
        raise InputError("threshold must be positive")
    if np.any(np.abs(mat - mat.T) > 1e-9):
        raise InputError("travel-time matrix is not symmetric")
    if np.any(mat < 0):
        raise InputError("travel-time matrix has negative entries")
    adj = mat < threshold
    np.fill_diagonal(adj, False)
    return GeoNetwork(nodes, adj)
