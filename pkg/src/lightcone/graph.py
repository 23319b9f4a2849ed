"""Lattices as undirected hopping graphs.

A :class:`Lattice` carries the adjacency matrix, the all-pairs hop distance,
the maximal vertex degree and half the maximal row sum of the adjacency
matrix. Every bound in :mod:`lightcone.envelope` is a function of these.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path


class LatticeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Lattice:
    num_sites: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    dist: np.ndarray = field(repr=False)
    max_degree: int
    delta: float
    kind: str = "edges"
    coords: tuple[tuple[int, ...], ...] | None = field(default=None, repr=False)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def adjacency_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.adjacency.astype(float))

    def neighbors(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[j])

    def site(self, s) -> int:
        """Map a site label (int index or grid coordinate tuple) to its index."""
        if isinstance(s, (tuple, list)):
            if self.coords is None:
                raise LatticeError(f"lattice of kind {self.kind!r} has no coordinates")
            try:
                return self.coords.index(tuple(int(c) for c in s))
            except ValueError:
                raise LatticeError(f"coordinate {tuple(s)} not on lattice") from None
        j = int(s)
        if not 0 <= j < self.num_sites:
            raise LatticeError(f"site {j} out of range [0, {self.num_sites})")
        return j

    def distance_to_region(self, region: Iterable) -> np.ndarray:
        """d(j, R) = min over r in R of dist(j, r), for every site j."""
        idx = sorted({self.site(r) for r in region})
        if not idx:
            raise LatticeError("empty region")
        return self.dist[:, idx].min(axis=1)


def _make(n: int, pairs: Iterable[tuple[int, int]], kind: str,
          coords=None) -> Lattice:
    if n < 1:
        raise LatticeError("need at least one site")
    edges = set()
    for a, b in pairs:
        a, b = int(a), int(b)
        if a == b:
            raise LatticeError(f"self-loop at site {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise LatticeError(f"edge ({a}, {b}) out of range for {n} sites")
        edges.add((min(a, b), max(a, b)))
    edges = tuple(sorted(edges))
    adj = np.zeros((n, n), dtype=np.int8)
    for a, b in edges:
        adj[a, b] = adj[b, a] = 1
    if n > 1:
        ncomp, _ = connected_components(sp.csr_matrix(adj), directed=False)
        if ncomp != 1:
            raise LatticeError(f"lattice is disconnected ({ncomp} components)")
    # unweighted BFS from every source
    d = shortest_path(sp.csr_matrix(adj), method="D", directed=False, unweighted=True)
    dist = d.astype(np.int64)
    dist.flags.writeable = False
    adj.flags.writeable = False
    D = int(adj.sum(axis=1).max()) if n > 1 else 0
    return Lattice(n, edges, adj, dist, D, D / 2, kind, coords)


def from_edge_list(n: int, edges: Sequence[tuple[int, int]]) -> Lattice:
    return _make(n, edges, "edges")


def single_site() -> Lattice:
    """One site, no edges. Used for single-mode checks."""
    return _make(1, [], "single")


def build_chain(L: int, periodic: bool = False) -> Lattice:
    if L < 2:
        raise LatticeError(f"chain needs L >= 2, got {L}")
    if periodic and L < 3:
        raise LatticeError("periodic chain needs L >= 3")
    pairs = [(j, j + 1) for j in range(L - 1)]
    if periodic:
        pairs.append((L - 1, 0))
    return _make(L, pairs, "chain", tuple((j,) for j in range(L)))


def build_grid(w: int, h: int, periodic: bool = False) -> Lattice:
    """Square grid; site (x, y) has index x + w*y."""
    if w < 2 or h < 2:
        raise LatticeError(f"grid needs w, h >= 2, got {w}x{h}")
    if periodic and (w < 3 or h < 3):
        raise LatticeError("periodic grid needs w, h >= 3")
    idx = lambda x, y: x + w * y
    pairs = []
    for y in range(h):
        for x in range(w):
            if x + 1 < w or periodic:
                pairs.append((idx(x, y), idx((x + 1) % w, y)))
            if y + 1 < h or periodic:
                pairs.append((idx(x, y), idx(x, (y + 1) % h)))
    coords = tuple((x, y) for y in range(h) for x in range(w))
    return _make(w * h, pairs, "grid", coords)


def region_distance(lat: Lattice, S: Iterable, R: Iterable) -> int:
    """min over s in S, r in R of d(s, r)."""
    s_idx = {lat.site(s) for s in S}
    r_idx = {lat.site(r) for r in R}
    if not s_idx or not r_idx:
        raise LatticeError("regions must be nonempty")
    if s_idx & r_idx:
        raise LatticeError(f"regions overlap at sites {sorted(s_idx & r_idx)}")
    return int(lat.dist[np.ix_(sorted(s_idx), sorted(r_idx))].min())
