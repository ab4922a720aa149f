"""Structure denoising: neighborhood prototypes, proximity scores, edge filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class ThresholdSchedule:
    """Cosine thresholds: ``warmup_theta`` for the first ``warmup_iters`` SD-steps."""

    warmup_theta: float = 0.0
    main_theta: float = 0.1
    warmup_iters: int = 1

    @classmethod
    def from_main(cls, theta: float, slack: float = 0.1, warmup_iters: int = 1) -> "ThresholdSchedule":
        return cls(max(-1.0, theta - slack), theta, warmup_iters)

    def validate(self) -> None:
        for name in ("main_theta", "warmup_theta"):
            t = getattr(self, name)
            if not -1.0 <= t <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1], got {t}")
        if self.warmup_theta > self.main_theta:
            raise ValueError("warmup_theta must not exceed main_theta")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")

    def theta(self, iteration: int) -> float:
        """Threshold for the 1-based SD-step ``iteration``."""
        return self.warmup_theta if iteration <= self.warmup_iters else self.main_theta


@dataclass(frozen=True)
class EdgeWeightTable:
    """Edge weights aligned row-for-row with ``edges`` (canonical ``u < v``)."""

    edges: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.weights.shape[0]

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(u), int(v)): float(w) for (u, v), w in zip(self.edges, self.weights)}

    def weight(self, u: int, v: int) -> float:
        if u > v:
            u, v = v, u
        hit = np.flatnonzero((self.edges[:, 0] == u) & (self.edges[:, 1] == v))
        if hit.size == 0:
            raise KeyError((u, v))
        return float(self.weights[hit[0]])


def prototypes(g: Graph, X: np.ndarray) -> np.ndarray:
    """Mean neighbor feature for every node; isolated nodes fall back to their own row."""
    X = np.asarray(X, dtype=np.float64)
    deg = g.degrees
    summed = g.adjacency() @ X
    out = np.array(X, copy=True)
    has = deg > 0
    out[has] = summed[has] / deg[has, None]
    return out


def prototype(g: Graph, X: np.ndarray, u: int) -> np.ndarray:
    nbrs = g.neighbors(u)
    if nbrs.size == 0:
        return np.array(X[u], dtype=np.float64)
    return np.asarray(X, dtype=np.float64)[nbrs].mean(axis=0)


def proximity(p: np.ndarray, x: np.ndarray) -> float:
    """Cosine similarity, defined as 0 when either vector has zero norm."""
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(x))):
        raise ValueError("proximity inputs must be finite")
    np_, nx = np.linalg.norm(p), np.linalg.norm(x)
    if np_ == 0.0 or nx == 0.0:
        return 0.0
    return float(np.clip(p @ x / (np_ * nx), -1.0, 1.0))


def _row_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    dots = np.einsum("ij,ij->i", a, b)
    out = np.zeros(a.shape[0])
    ok = (na > 0) & (nb > 0)
    out[ok] = dots[ok] / (na[ok] * nb[ok])
    return np.clip(out, -1.0, 1.0)


def compute_edge_weights(g: Graph, X: np.ndarray) -> EdgeWeightTable:
    """Min-symmetrized prototype/feature cosine for every edge of ``g``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.n:
        raise ValueError(f"feature matrix has {X.shape[0]} rows, graph has {g.n} nodes")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite entries")
    P = prototypes(g, X)
    u, v = g.edges[:, 0], g.edges[:, 1]
    forward = _row_cosines(P[u], X[v])
    backward = _row_cosines(P[v], X[u])
    return EdgeWeightTable(g.edges.copy(), np.minimum(forward, backward))


def filter_edges(g: Graph, table: EdgeWeightTable, theta: float) -> np.ndarray:
    """Edges of ``g`` whose weight is at least ``theta``."""
    if len(table) != g.num_edges or not np.array_equal(table.edges, g.edges):
        raise ValueError("weight table does not cover the graph's edges")
    return g.edges[table.weights >= theta]


def sd_step(g: Graph, X: np.ndarray, theta: float) -> tuple[np.ndarray, EdgeWeightTable]:
    table = compute_edge_weights(g, X)
    return filter_edges(g, table, theta), table
