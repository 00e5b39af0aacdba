"""Directed capacitated flow networks and their node-arc incidence matrices.

Nodes are 0-based inside the library. JSON I/O (``to_dict``/``from_dict``)
uses 1-based node labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

MAX_ER_RETRIES = 10_000


class NetworkError(ValueError):
    """Raised for malformed networks or impossible generator requests."""


@dataclass(frozen=True)
class IncidenceSet:
    A: np.ndarray
    Aplus: np.ndarray
    Aminus: np.ndarray


@dataclass(frozen=True, eq=False)
class FlowNetwork:
    """Directed graph with positive arc capacities.

    ``arcs[k] = (tail, head)`` with 0-based node indices. The arc order is the
    column order of the incidence matrix and of every flow/dual vector.
    """

    n: int
    arcs: tuple[tuple[int, int], ...]
    u: np.ndarray
    _inc: IncidenceSet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arcs = tuple((int(t), int(h)) for t, h in self.arcs)
        u = np.array(self.u, dtype=float).reshape(-1)
        object.__setattr__(self, "arcs", arcs)
        if self.n < 1:
            raise NetworkError("network needs at least one node")
        if len(arcs) != u.size:
            raise NetworkError(f"{len(arcs)} arcs but {u.size} capacities")
        for t, h in arcs:
            if not (0 <= t < self.n and 0 <= h < self.n):
                raise NetworkError(f"arc ({t}, {h}) references a missing node")
            if t == h:
                raise NetworkError(f"self-loop at node {t}")
        if len(set(arcs)) != len(arcs):
            raise NetworkError("parallel arcs are not supported")
        if np.any(~np.isfinite(u)) or np.any(u <= 0):
            raise NetworkError("arc capacities must be finite and > 0")
        if not _connected(self.n, arcs):
            raise NetworkError("underlying undirected graph is not connected")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "_inc", _incidence(self.n, arcs))

    @property
    def m(self) -> int:
        return len(self.arcs)

    @property
    def incidence(self) -> IncidenceSet:
        return self._inc

    def with_capacities(self, u) -> "FlowNetwork":
        return FlowNetwork(self.n, self.arcs, u)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "arcs": [[t + 1, h + 1] for t, h in self.arcs],
            "u": [float(v) for v in self.u],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowNetwork":
        arcs = [(int(t) - 1, int(h) - 1) for t, h in d["arcs"]]
        return cls(int(d["n"]), tuple(arcs), np.asarray(d["u"], dtype=float))


def _connected(n: int, arcs: Sequence[tuple[int, int]]) -> bool:
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(arcs)
    return nx.is_connected(g)


def _incidence(n: int, arcs: Sequence[tuple[int, int]]) -> IncidenceSet:
    m = len(arcs)
    Aplus = np.zeros((n, m))
    Aminus = np.zeros((n, m))
    for k, (t, h) in enumerate(arcs):
        Aplus[t, k] = 1.0
        Aminus[h, k] = -1.0
    A = Aplus + Aminus
    for M in (A, Aplus, Aminus):
        M.setflags(write=False)
    return IncidenceSet(A, Aplus, Aminus)


def build_incidence(net: FlowNetwork) -> IncidenceSet:
    """Node-arc incidence matrix: +1 at the tail row, -1 at the head row."""
    return net.incidence


def net_flow(net: FlowNetwork, y) -> np.ndarray:
    """Per-node net outflow ``e = A y`` (supply > 0, demand < 0)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (net.m,):
        raise NetworkError(f"flow vector has shape {y.shape}, expected ({net.m},)")
    return net.incidence.A @ y


def capacity_bounds(net: FlowNetwork, i: int) -> tuple[float, float]:
    """Return ``(Aminus_i u, Aplus_i u)``: minus total in-capacity, total out-capacity."""
    if not 0 <= i < net.n:
        raise IndexError(f"node {i} out of range for n={net.n}")
    inc = net.incidence
    return float(inc.Aminus[i] @ net.u), float(inc.Aplus[i] @ net.u)


def all_capacity_bounds(net: FlowNetwork) -> tuple[np.ndarray, np.ndarray]:
    inc = net.incidence
    return inc.Aminus @ net.u, inc.Aplus @ net.u


def generate_er(n: int, edges: int, cap_low: float, cap_high: float, seed) -> FlowNetwork:
    """Connected G(n, M) random graph with each undirected edge as two arcs.

    Draws are repeated until the graph is connected. Each undirected edge
    ``{i, j}`` (i < j, sorted) contributes arcs ``(i, j)`` and ``(j, i)`` in that
    order, and each arc gets an independent capacity from U[cap_low, cap_high].
    """
    if n < 1:
        raise NetworkError("n must be positive")
    if edges < n - 1:
        raise NetworkError(f"{edges} edges cannot connect {n} nodes")
    if edges > n * (n - 1) // 2:
        raise NetworkError(f"{edges} edges exceed the simple-graph maximum for n={n}")
    if not cap_high > cap_low >= 0:
        raise NetworkError("need cap_high > cap_low >= 0")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ER_RETRIES):
        g = nx.gnm_random_graph(n, edges, seed=int(rng.integers(2**32)))
        if nx.is_connected(g):
            break
    else:
        raise NetworkError(f"no connected G({n}, {edges}) after {MAX_ER_RETRIES} draws")
    arcs = []
    for i, j in sorted(tuple(sorted(e)) for e in g.edges()):
        arcs += [(i, j), (j, i)]
    u = rng.uniform(cap_low, cap_high, size=len(arcs))
    # U[0, h) can return exactly 0.0; capacities must stay positive
    u = np.where(u > 0, u, np.nextafter(0.0, 1.0) if cap_low == 0 else cap_low)
    return FlowNetwork(n, tuple(arcs), u)


def star_graph(n: int, u) -> FlowNetwork:
    """Star with center 0: arcs 0..n-2 go center->leaf, arcs n-1..2n-3 leaf->center."""
    if n < 2:
        raise NetworkError("a star needs at least 2 nodes")
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = np.full(2 * (n - 1), float(u))
    if u.shape != (2 * (n - 1),):
        raise NetworkError(f"star with n={n} needs {2 * (n - 1)} capacities, got {u.size}")
    out_arcs = [(0, k) for k in range(1, n)]
    in_arcs = [(k, 0) for k in range(1, n)]
    return FlowNetwork(n, tuple(out_arcs + in_arcs), u)


def is_canonical_star(net: FlowNetwork) -> bool:
    n = net.n
    if n < 2 or net.m != 2 * (n - 1):
        return False
    expected = tuple((0, k) for k in range(1, n)) + tuple((k, 0) for k in range(1, n))
    return net.arcs == expected
