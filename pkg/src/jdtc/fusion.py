"""Generalized covariance intersection (GCI) of augmented Bernoulli densities.

The fused density is the normalized weighted geometric mean of the inputs.
For Gaussian-mixture state densities the geometric mean of two mixtures is
approximated component-pairwise; fusing more than two densities is done as a
left fold of pairwise fusions.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .density import AugmentedBernoulli, ClassModePmf, GaussianMixture
from .reduce import ReductionPolicy

log = logging.getLogger(__name__)


def gm_geometric_mean(a: GaussianMixture, b: GaussianMixture, omega: float) -> GaussianMixture:
    """Unnormalized GM approximation of ``a**omega * b**(1 - omega)``.

    The result has ``len(a) * len(b)`` components; its total weight
    approximates the integral of the geometric mean.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError("fusion weight must lie in (0, 1)")
    if a.dim != b.dim:
        raise ValueError(f"state dimensions differ: {a.dim} vs {b.dim}")
    if len(a) == 0 or len(b) == 0:
        return GaussianMixture.empty(a.dim)
    try:
        w, m, p = kernels.geometric_mean(a.weights, a.means, a.covs, b.weights, b.means, b.covs, float(omega))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular covariance combination in geometric mean: {exc}") from exc
    return GaussianMixture(w, m, p)


def _wlog(x: float, w: float) -> float:
    # w * log(x) with 0 ** w == 0
    return w * np.log(x) if x > 0.0 else -np.inf


def fuse_pair(
    f1: AugmentedBernoulli,
    f2: AugmentedBernoulli,
    omega: float,
    policy: Optional[ReductionPolicy] = None,
) -> AugmentedBernoulli:
    """GCI fusion ``f1**omega * f2**(1 - omega)`` (normalized).

    ``policy`` optionally reduces each fused slot mixture. When one input is
    certain the target exists and the other certain it does not, the fused
    existence is undefined; the input carrying the larger weight (``f1`` on a
    tie) is returned unchanged.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError("fusion weight must lie in (0, 1)")
    om2 = 1.0 - omega
    log_r = _wlog(f1.r, omega) + _wlog(f2.r, om2)
    log_z = _wlog(1.0 - f1.r, omega) + _wlog(1.0 - f2.r, om2)
    if log_r == -np.inf and log_z == -np.inf:
        log.warning("degenerate GCI fusion: r=%s vs r=%s; keeping the heavier side", f1.r, f2.r)
        return f1 if omega >= 0.5 else f2

    if policy is None:
        red = (0.0, 1.0, 1, False)
    else:
        red = (float(policy.prune_threshold), float(policy.merge_threshold), int(policy.max_components), True)
    classes = list(f1.gamma)
    dim = f1.dim
    spdf: dict[tuple[int, int], GaussianMixture] = {}
    slot_log: dict[int, np.ndarray] = {}
    class_log = np.full(len(classes), -np.inf)
    for ci, c in enumerate(classes):
        ms = list(f1.beta[c])
        a = np.full(len(ms), -np.inf)
        for mi, m in enumerate(ms):
            lb = _wlog(f1.beta[c][m], omega) + _wlog(f2.beta[c][m], om2)
            if lb == -np.inf:
                spdf[(c, m)] = GaussianMixture.empty(dim)
                continue
            g1, g2 = f1.spdf[(c, m)], f2.spdf[(c, m)]
            if len(g1) == 0 or len(g2) == 0:
                spdf[(c, m)] = GaussianMixture.empty(dim)
                continue
            try:
                w, mu, cov, log_int = kernels.fuse_slot(
                    g1.weights, g1.means, g1.covs, g2.weights, g2.means, g2.covs, omega, *red
                )
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"singular covariance combination in slot {(c, m)}: {exc}") from exc
            if not np.isfinite(log_int):
                spdf[(c, m)] = GaussianMixture.empty(dim)
                continue
            spdf[(c, m)] = GaussianMixture(w, mu, cov)
            a[mi] = lb + log_int
        slot_log[c] = a
        top = a.max()
        if np.isfinite(top):
            lg = _wlog(f1.gamma[c], omega) + _wlog(f2.gamma[c], om2)
            class_log[ci] = lg + top + np.log(np.exp(a - top).sum())

    top = class_log.max()
    if not np.isfinite(top):
        # the class/mode supports of the two inputs do not overlap
        log.warning("GCI fusion: no overlapping class/mode support; existence fused to 0")
        base = f1 if omega >= 0.5 else f2
        return AugmentedBernoulli(0.0, base.pmf, base.spdf)
    log_total = top + np.log(np.exp(class_log - top).sum())

    g = np.exp(class_log - log_total)
    gamma = dict(zip(classes, (g / g.sum()).tolist()))
    beta: dict[int, dict[int, float]] = {}
    for c in classes:
        a = slot_log[c]
        ms = list(f1.beta[c])
        if np.isfinite(a.max()):
            b = np.exp(a - a.max())
            beta[c] = dict(zip(ms, (b / b.sum()).tolist()))
        else:
            # gamma(c) is 0 here; any valid conditional will do
            base = f1 if omega >= 0.5 else f2
            beta[c] = dict(base.beta[c])
            for m in ms:
                spdf[(c, m)] = base.spdf[(c, m)]

    with np.errstate(over="ignore"):
        odds = np.exp(log_z - (log_r + log_total))
    r = float(1.0 / (1.0 + odds))
    return AugmentedBernoulli(r, ClassModePmf(gamma, beta), spdf)


def fuse(
    densities: Sequence[AugmentedBernoulli],
    weights: Sequence[float],
    policy: Optional[ReductionPolicy] = None,
) -> AugmentedBernoulli:
    """GCI fusion of several densities as a left fold of ``fuse_pair``.

    Fold step k combines the running result (weight w_1 + ... + w_{k-1}) with
    density k (weight w_k).
    """
    if len(densities) != len(weights) or not densities:
        raise ValueError("need one weight per density and at least one density")
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0.0):
        raise ValueError("fusion weights must be positive")
    acc = densities[0]
    running = w[0]
    for d, wk in zip(densities[1:], w[1:]):
        running += wk
        acc = fuse_pair(acc, d, 1.0 - wk / running, policy)
    return acc


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Undirected communication graph with per-node consensus weights.

    ``weights[i]`` maps every member of node i's neighbourhood (itself
    included) to its consensus weight.
    """

    nodes: tuple[int, ...]
    adjacency: Mapping[int, frozenset]
    weights: Mapping[int, Mapping[int, float]]

    def neighbourhood(self, i: int) -> list[int]:
        return sorted(set(self.adjacency[i]) | {i})

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for j in self.adjacency[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == len(self.nodes)

    def weight_matrix(self) -> np.ndarray:
        idx = {n: k for k, n in enumerate(self.nodes)}
        W = np.zeros((len(self.nodes), len(self.nodes)))
        for i, row in self.weights.items():
            for j, w in row.items():
                W[idx[i], idx[j]] = w
        return W


def _adjacency(nodes, edges) -> dict[int, frozenset]:
    adj: dict[int, set] = {n: set() for n in nodes}
    for i, j in edges:
        if i == j:
            continue
        adj[i].add(j)
        adj[j].add(i)
    return {n: frozenset(s) for n, s in adj.items()}


def metropolis_weights(nodes: Sequence[int], edges) -> NetworkGraph:
    """Metropolis-Hastings consensus weights (symmetric, doubly stochastic)."""
    nodes = tuple(sorted(nodes))
    adj = _adjacency(nodes, edges)
    deg = {n: len(adj[n]) for n in nodes}
    weights = {}
    for i in nodes:
        row = {j: 1.0 / (1.0 + max(deg[i], deg[j])) for j in sorted(adj[i])}
        row[i] = 1.0 - sum(row.values())
        weights[i] = dict(sorted(row.items()))
    return NetworkGraph(nodes, adj, weights)


def uniform_weights(nodes: Sequence[int], edges) -> NetworkGraph:
    """Each node weights its neighbourhood (itself included) equally."""
    nodes = tuple(sorted(nodes))
    adj = _adjacency(nodes, edges)
    weights = {}
    for i in nodes:
        hood = sorted(adj[i] | {i})
        weights[i] = {j: 1.0 / len(hood) for j in hood}
    return NetworkGraph(nodes, adj, weights)


def geometric_edges(positions: Mapping[int, Sequence[float]], radius: float) -> list[tuple[int, int]]:
    ids = sorted(positions)
    edges = []
    for a, i in enumerate(ids):
        for j in ids[a + 1 :]:
            if np.hypot(*(np.asarray(positions[i]) - np.asarray(positions[j]))) < radius:
                edges.append((i, j))
    return edges


def consensus_round(
    states: Mapping[int, AugmentedBernoulli],
    graph: NetworkGraph,
    L: int,
    policy: Optional[ReductionPolicy] = None,
) -> dict[int, AugmentedBernoulli]:
    """``L`` synchronous consensus iterations of neighbourhood GCI fusion.

    Every node reads iteration l-1 of all its neighbours before anyone writes
    iteration l. Neighbourhoods are folded in ascending node id.
    """
    if L < 1:
        raise ValueError("need at least one consensus step")
    if L > 1 and not graph.is_connected():
        warnings.warn("consensus over a disconnected graph cannot reach global agreement", RuntimeWarning)
    current = dict(states)
    for _ in range(L):
        nxt = {}
        for i in graph.nodes:
            hood = graph.neighbourhood(i)
            nxt[i] = fuse([current[j] for j in hood], [graph.weights[i][j] for j in hood], policy)
        current = nxt
    return current
