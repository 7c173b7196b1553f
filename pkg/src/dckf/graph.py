"""Sensor-network topology: Laplacian construction and spectral services."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Topology",
    "LaplacianSpectrum",
    "laplacian",
    "is_connected",
    "laplacian_spectrum",
    "ring",
    "complete",
    "path",
]


@dataclass(frozen=True)
class Topology:
    """Undirected sensor graph given by a 0/1 adjacency matrix, zero diagonal."""

    adjacency: np.ndarray

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if adj.shape[0] < 1:
            raise ValueError("topology needs at least one node")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric (undirected graph)")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency diagonal must be zero (no self loops)")
        if not np.all(np.isin(adj, (0.0, 1.0))):
            raise ValueError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", adj)

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "Topology":
        adj = np.zeros((node_count, node_count))
        for i, j in edges:
            if i == j:
                raise ValueError(f"self loop ({i}, {j}) not allowed")
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise ValueError(f"edge ({i}, {j}) out of range for {node_count} nodes")
            adj[i, j] = adj[j, i] = 1.0
        return cls(adj)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])


def ring(n: int) -> Topology:
    """Cycle graph on n nodes."""
    if n < 3:
        raise ValueError("a ring needs at least 3 nodes")
    return Topology.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete(n: int) -> Topology:
    return Topology.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path(n: int) -> Topology:
    if n < 2:
        raise ValueError("a path needs at least 2 nodes")
    return Topology.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def laplacian(t: Topology) -> np.ndarray:
    """Graph Laplacian: degree matrix minus adjacency.  Symmetric PSD, zero row sums."""
    adj = t.adjacency
    return np.diag(adj.sum(axis=1)) - adj


def is_connected(t: Topology) -> bool:
    """Breadth-first search reachability from node 0."""
    n = t.node_count
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(t.adjacency[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Laplacian eigenvalues (decreasing) and an orthonormal diagonalizer.

    ``transform`` has the normalized all-ones vector as its first row, so
    ``transform @ L @ transform.T`` is ``diag(0, lam[0], ..., lam[n-2])``.
    ``eigenvalues[-2]`` is the algebraic connectivity.
    """

    eigenvalues: np.ndarray
    transform: np.ndarray

    @property
    def algebraic_connectivity(self) -> float:
        if self.eigenvalues.size < 2:
            raise ValueError("algebraic connectivity needs at least two nodes")
        return float(self.eigenvalues[-2])


def laplacian_spectrum(t: Topology, connectivity_rtol: float = 1e-9) -> LaplacianSpectrum:
    """Eigen-decompose the Laplacian of a connected topology.

    Raises ``ValueError`` when the graph is disconnected (BFS is the
    authoritative check; the spectral gap is verified as well).
    """
    if not is_connected(t):
        raise ValueError("topology is disconnected; Laplacian spectrum requires a connected graph")
    lap = laplacian(t)
    w, v = np.linalg.eigh(lap)  # increasing order
    n = t.node_count
    decreasing = w[::-1].copy()
    if n > 1 and decreasing[-2] <= connectivity_rtol * max(decreasing[0], 1.0):
        raise ValueError("algebraic connectivity is numerically zero on a BFS-connected graph")
    # First row: the zero eigenvector, fixed to 1/sqrt(N); remaining rows are
    # the eigenvectors of the positive eigenvalues, largest first.
    rows = [np.full(n, 1.0 / np.sqrt(n))]
    for k in range(n - 1, 0, -1):
        rows.append(v[:, k])
    transform = np.vstack(rows)
    return LaplacianSpectrum(eigenvalues=decreasing, transform=transform)
