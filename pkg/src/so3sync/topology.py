"""Oriented undirected trees and their incidence structures.

Agents and edges are 1-based in the public API (``build_tree``, ``edges``),
matching how scenarios are written; arrays are indexed from 0.
"""

from dataclasses import dataclass, field

import numpy as np


class TopologyError(ValueError):
    pass


class SelfLoopError(TopologyError):
    pass


class DuplicateEdgeError(TopologyError):
    pass


class CycleError(TopologyError):
    pass


class DisconnectedError(TopologyError):
    pass


@dataclass(frozen=True)
class OrientedTree:
    n_agents: int
    edges: tuple  # ((head, tail), ...) 1-based, in config order
    heads: np.ndarray = field(repr=False, compare=False)  # 0-based
    tails: np.ndarray = field(repr=False, compare=False)

    @property
    def n_edges(self):
        return len(self.edges)

    def out_edges(self, i):
        """M_i^+ : 1-based indices of edges headed by agent ``i`` (1-based)."""
        return [k + 1 for k, (h, _) in enumerate(self.edges) if h == i]

    def in_edges(self, i):
        """M_i^- : 1-based indices of edges whose tail is agent ``i``."""
        return [k + 1 for k, (_, t) in enumerate(self.edges) if t == i]

    def neighbors(self, i):
        nb = [t for h, t in self.edges if h == i]
        nb += [h for h, t in self.edges if t == i]
        return sorted(nb)

    def incident(self, i):
        """(neighbor, edge, side) triples for 0-based agent ``i``.

        ``side`` is +1 when ``i`` heads the edge and -1 when it is the tail;
        ``neighbor`` and ``edge`` are 0-based.
        """
        out = []
        for k in range(self.n_edges):
            if self.heads[k] == i:
                out.append((int(self.tails[k]), k, 1))
            elif self.tails[k] == i:
                out.append((int(self.heads[k]), k, -1))
        return out


def build_tree(n, edge_list):
    n = int(n)
    if n < 1:
        raise TopologyError("need at least one agent")
    edges = []
    seen = set()
    for pair in edge_list:
        h, t = (int(x) for x in pair)
        if not (1 <= h <= n and 1 <= t <= n):
            raise TopologyError("edge (%d, %d) references an unknown agent" % (h, t))
        if h == t:
            raise SelfLoopError("self-loop at agent %d" % h)
        key = frozenset((h, t))
        if key in seen:
            raise DuplicateEdgeError("duplicate edge between %d and %d" % (h, t))
        seen.add(key)
        edges.append((h, t))

    # union-find: a repeated component means a cycle
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for h, t in edges:
        rh, rt = find(h), find(t)
        if rh == rt:
            raise CycleError("edge (%d, %d) closes a cycle" % (h, t))
        parent[rh] = rt
    if len({find(a) for a in range(1, n + 1)}) != 1:
        raise DisconnectedError("graph is not connected")

    heads = np.array([h - 1 for h, _ in edges], dtype=np.int64)
    tails = np.array([t - 1 for _, t in edges], dtype=np.int64)
    return OrientedTree(n, tuple(edges), heads, tails)


def incidence(tree):
    h = np.zeros((tree.n_agents, tree.n_edges))
    for k in range(tree.n_edges):
        h[tree.heads[k], k] = 1.0
        h[tree.tails[k], k] = -1.0
    return h


def laplacian(tree):
    h = incidence(tree)
    return h @ h.T


def _check_edges(tree, edge_rotations):
    edge_rotations = np.asarray(edge_rotations, dtype=float)
    if edge_rotations.shape != (tree.n_edges, 3, 3):
        raise ValueError("expected %d edge rotations" % tree.n_edges)
    return edge_rotations


def hbar_matrix(tree, edge_rotations):
    """Dense 3N x 3M rotation-weighted incidence matrix."""
    rb = _check_edges(tree, edge_rotations)
    out = np.zeros((3 * tree.n_agents, 3 * tree.n_edges))
    for k in range(tree.n_edges):
        i, j = tree.heads[k], tree.tails[k]
        out[3 * i:3 * i + 3, 3 * k:3 * k + 3] = np.eye(3)
        out[3 * j:3 * j + 3, 3 * k:3 * k + 3] = -rb[k]
    return out


def hbar_apply(tree, edge_rotations, w):
    """Edge relative velocities: ``w_i - Rbar_k^T w_j`` per edge (head i, tail j)."""
    rb = _check_edges(tree, edge_rotations)
    w = np.asarray(w, dtype=float)
    if w.shape != (3 * tree.n_agents,):
        raise ValueError("expected a stacked %d-vector" % (3 * tree.n_agents))
    w = w.reshape(-1, 3)
    out = w[tree.heads] - np.einsum("kji,kj->ki", rb, w[tree.tails])
    return out.reshape(-1)


def hbar_premultiply(tree, edge_rotations, v):
    """Adjoint of :func:`hbar_apply`: head gets ``+v_k``, tail ``-Rbar_k v_k``."""
    rb = _check_edges(tree, edge_rotations)
    v = np.asarray(v, dtype=float)
    if v.shape != (3 * tree.n_edges,):
        raise ValueError("expected a stacked %d-vector" % (3 * tree.n_edges))
    v = v.reshape(-1, 3)
    out = np.zeros((tree.n_agents, 3))
    np.add.at(out, tree.heads, v)
    np.add.at(out, tree.tails, -np.einsum("kij,kj->ki", rb, v))
    return out.reshape(-1)


def random_tree(n, rng):
    """Random labelled tree with random edge orientation (for property tests)."""
    order = rng.permutation(n) + 1
    edges = []
    for pos in range(1, n):
        a = int(order[pos])
        b = int(order[rng.integers(0, pos)])
        edges.append((a, b) if rng.random() < 0.5 else (b, a))
    return build_tree(n, edges)
