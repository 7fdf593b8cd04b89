"""
Communication graphs and the spectral quantities used by the rate analysis.

All matrices are dense; the networks here are desk-scale.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DisconnectedGraph, InvalidEdge, NotPSD, NotSymmetric, ZeroMatrix

SYM_TOL = 1e-10
PSD_TOL = 1e-10
REL_ZERO = 1e-10
ABS_ZERO = 1e-12


@dataclass(frozen=True)
class Network:
    """Undirected, connected, unweighted graph over ``n_nodes`` nodes.

    Build through :func:`build_network` (or the topology helpers) so the
    invariants are checked.
    """

    n_nodes: int
    edges: frozenset
    neighbor_lists: tuple = field(repr=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbor_lists], dtype=int)

    def neighbors(self, i: int) -> tuple:
        return self.neighbor_lists[i]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=int)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def degree_matrix(self) -> np.ndarray:
        return np.diag(self.degrees)

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


@dataclass(frozen=True)
class SpectralSummary:
    sigma_min_nonzero: float
    sigma_max: float


def build_network(n_nodes: int, edges: Iterable[Sequence[int]]) -> Network:
    """Validate an edge list and return a :class:`Network`.

    Raises
    ------
    InvalidEdge
        Out-of-range index, self-loop or duplicate edge.
    DisconnectedGraph
        Some node is not reachable from node 0.
    """
    if int(n_nodes) != n_nodes or n_nodes < 1:
        raise InvalidEdge(f"n_nodes must be a positive integer, got {n_nodes!r}")
    n_nodes = int(n_nodes)
    seen: set[tuple[int, int]] = set()
    for e in edges:
        if len(e) != 2:
            raise InvalidEdge(f"edge must be a pair, got {e!r}")
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise InvalidEdge(f"edge ({i}, {j}) out of range for N={n_nodes}")
        if i == j:
            raise InvalidEdge(f"self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidEdge(f"duplicate edge {key}")
        seen.add(key)

    nbrs: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, j in seen:
        nbrs[i].append(j)
        nbrs[j].append(i)

    # breadth-first reachability from node 0
    reached = [False] * n_nodes
    reached[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if not reached[v]:
                reached[v] = True
                queue.append(v)
    if not all(reached):
        missing = [k for k, r in enumerate(reached) if not r]
        raise DisconnectedGraph(f"nodes {missing} unreachable from node 0")

    return Network(
        n_nodes=n_nodes,
        edges=frozenset(seen),
        neighbor_lists=tuple(tuple(sorted(nb)) for nb in nbrs),
    )


def path_graph(n: int) -> Network:
    return build_network(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Network:
    if n < 3:
        return path_graph(n)
    return build_network(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Network:
    return build_network(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def ring_with_chord(n: int = 5) -> Network:
    """Ring plus one chord between node 0 and node ``n // 2``.

    This is the default five-node topology used for the convergence
    experiments.
    """
    edges = [(i, (i + 1) % n) for i in range(n)] if n >= 3 else [(0, 1)]
    if n >= 4:
        edges.append((0, n // 2))
    return build_network(n, edges)


def erdos_renyi(n: int, p: float, seed: int, max_tries: int = 1000) -> Network:
    """Connected G(n, p) sample; redraws until connected."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < p
        try:
            return build_network(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))
        except DisconnectedGraph:
            continue
    raise DisconnectedGraph(f"no connected G({n}, {p}) sample in {max_tries} draws")


def read_edge_list(path: str | Path, n_nodes: int | None = None) -> Network:
    """Read a whitespace-separated ``i j`` edge list (0-indexed, ``#`` comments)."""
    edges = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidEdge(f"bad edge line: {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if n_nodes is None:
        n_nodes = 1 + max((max(e) for e in edges), default=0)
    return build_network(n_nodes, edges)


def write_edge_list(net: Network, path: str | Path) -> None:
    Path(path).write_text("".join(f"{i} {j}\n" for i, j in net.edge_list()))


def laplacian(net: Network) -> np.ndarray:
    """Return ``D - A`` as a float matrix (built from integers)."""
    return (net.degree_matrix() - net.adjacency()).astype(float)


def signless_laplacian(net: Network) -> np.ndarray:
    """Return ``D + A``."""
    return (net.degree_matrix() + net.adjacency()).astype(float)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero, as are positive
    eigenvalues at the rounding level of the decomposition.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > SYM_TOL:
        raise NotSymmetric("matrix asymmetry exceeds 1e-10")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    if w.size and w.min() < -PSD_TOL:
        raise NotPSD(f"eigenvalue {w.min():.3e} below -1e-10")
    # eigenvalues at rounding level are zero; their square roots would not be
    w = np.where(w > w.size * np.finfo(float).eps * max(1.0, np.abs(w).max(initial=0.0)), w, 0.0)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values, descending.

    Symmetric inputs go through ``eigh``; general products (diagonal times
    symmetric) fall back to an SVD of the product itself.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[0] == m.shape[1] and np.allclose(m, m.T, atol=SYM_TOL, rtol=0.0):
        return np.sort(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T))))[::-1]
    return np.linalg.svd(m, compute_uv=False)


def spectral_bounds(m: np.ndarray) -> SpectralSummary:
    """Smallest nonzero and largest singular value of ``m``."""
    s = singular_values(m)
    smax = float(s[0]) if s.size else 0.0
    if smax < ABS_ZERO:
        raise ZeroMatrix("all singular values below 1e-12")
    nonzero = s[s > REL_ZERO * smax]
    return SpectralSummary(sigma_min_nonzero=float(nonzero.min()), sigma_max=smax)
