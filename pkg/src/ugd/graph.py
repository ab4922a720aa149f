"""Graph data model and the spectral operators shared by every stage.

Graphs are undirected and simple. Edges are stored once per pair as ``(u, v)``
with ``u < v``, sorted lexicographically, next to a CSR neighbor index whose
rows list neighbors in ascending order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np
import scipy.sparse as sp

MASK_NAMES = ("train", "val", "test")


class GraphError(ValueError):
    """Raised for malformed graph inputs."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def canonical_edges(edge_list, n: int) -> np.ndarray:
    """Canonicalize pairs to a sorted, deduplicated ``(m, 2)`` array with ``u < v``.

    Self-loops are dropped. Raises :class:`GraphError` on ids outside ``[0, n)``.
    """
    pairs = np.asarray(list(edge_list) if not isinstance(edge_list, np.ndarray) else edge_list,
                       dtype=np.int64)
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs = pairs.reshape(-1, 2)
    if pairs.min() < 0 or pairs.max() >= n:
        bad = pairs[(pairs < 0) | (pairs >= n)][0]
        raise GraphError(f"node id {int(bad)} out of range [0, {n})")
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    keys = np.unique(lo[keep] * n + hi[keep])
    return np.stack([keys // n, keys % n], axis=1)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable snapshot of edges, features, and optional labels/masks.

    Build instances with :func:`build_graph`; the constructor trusts its inputs.
    """

    edges: np.ndarray
    X: np.ndarray
    labels: Optional[np.ndarray] = None
    masks: Optional[Mapping[str, np.ndarray]] = None
    indptr: np.ndarray = field(repr=False, default=None)
    indices: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def mask(self, name: str) -> np.ndarray:
        if self.masks is None or name not in self.masks:
            raise GraphError(f"graph has no {name!r} mask")
        return self.masks[name]

    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric adjacency in CSR form."""
        data = np.ones(self.indices.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def edge_list(self) -> list[tuple[int, int]]:
        return [(int(u), int(v)) for u, v in self.edges]

    def with_edges(self, edges) -> "Graph":
        return build_graph(edges, self.X, self.labels, self.masks)

    def with_features(self, X: np.ndarray) -> "Graph":
        return build_graph(self.edges, X, self.labels, self.masks)


def build_graph(edge_list, X, labels=None, masks: Optional[Mapping[str, Iterable[bool]]] = None) -> Graph:
    """Validate inputs and assemble a canonical :class:`Graph`.

    Node count is taken from the row count of ``X``.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise GraphError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise GraphError("feature matrix contains non-finite entries")
    n = X.shape[0]
    edges = canonical_edges(edge_list, n)

    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((cols, rows))
    indices = cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])

    if labels is not None:
        labels = np.array(labels, dtype=np.int64, copy=True).reshape(-1)
        if labels.shape[0] != n:
            raise GraphError(f"labels have length {labels.shape[0]}, expected {n}")
        if labels.size and labels.min() < 0:
            raise GraphError("labels must be non-negative class ids")
        labels = _frozen(labels)

    frozen_masks = None
    if masks is not None:
        frozen_masks = {}
        for name in MASK_NAMES:
            if name not in masks:
                continue
            m = np.array(masks[name], dtype=bool, copy=True).reshape(-1)
            if m.shape[0] != n:
                raise GraphError(f"{name} mask has length {m.shape[0]}, expected {n}")
            frozen_masks[name] = _frozen(m)
        unknown = set(masks) - set(MASK_NAMES)
        if unknown:
            raise GraphError(f"unknown mask names: {sorted(unknown)}")
        present = list(frozen_masks.values())
        for i in range(len(present)):
            for j in range(i + 1, len(present)):
                if np.any(present[i] & present[j]):
                    raise GraphError("train/val/test masks must be disjoint")

    return Graph(
        edges=_frozen(edges),
        X=_frozen(X),
        labels=labels,
        masks=frozen_masks,
        indptr=_frozen(indptr),
        indices=_frozen(indices),
    )


def sym_norm_adj(g: Graph) -> sp.csr_matrix:
    """GCN propagation operator ``D~^-1/2 (A + I) D~^-1/2``."""
    a = g.adjacency() + sp.identity(g.n, format="csr")
    inv_sqrt = 1.0 / np.sqrt(g.degrees + 1.0)
    d = sp.diags(inv_sqrt)
    return (d @ a @ d).tocsr()


def normalized_laplacian(g: Graph) -> sp.csr_matrix:
    """``I - D^-1/2 A D^-1/2`` without self-loops.

    Isolated nodes keep 1 on the diagonal and zeros elsewhere.
    """
    deg = g.degrees.astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    d = sp.diags(inv_sqrt)
    return (sp.identity(g.n, format="csr") - d @ g.adjacency() @ d).tocsr()


def _edge_keys(edges) -> set[tuple[int, int]]:
    if isinstance(edges, np.ndarray):
        return {(int(u), int(v)) for u, v in edges.reshape(-1, 2)}
    return {(min(u, v), max(u, v)) for u, v in edges}


def edge_set_difference(a, b) -> int:
    """Size of the symmetric difference between two edge sets."""
    return len(_edge_keys(a) ^ _edge_keys(b))
