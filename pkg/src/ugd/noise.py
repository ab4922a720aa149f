"""Seeded feature/structure noise injectors and a stochastic block model generator.

All randomness comes from :class:`numpy.random.Generator` over PCG64, seeded
through :class:`numpy.random.SeedSequence`. Feature and structure noise draw
from independent child streams of the same seed, so either can be applied
alone without shifting the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import Graph, build_graph

FEATURE_MODES = ("gaussian-replace", "bernoulli-resample")
STRUCTURE_MODES = ("uniform-random", "cross-class")


class NoiseError(ValueError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class NoiseSpec:
    feature_ratio: float = 0.0
    feature_mode: str = "gaussian-replace"
    # None means the per-dimension std of the clean features.
    gaussian_sigma: Optional[float] = None
    structure_ratio: float = 0.0
    structure_mode: str = "cross-class"
    seed: int = 0

    def validate(self) -> None:
        for name in ("feature_ratio", "structure_ratio"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise NoiseError(f"{name} must be in [0, 1], got {r}")
        if self.feature_mode not in FEATURE_MODES:
            raise NoiseError(f"unknown feature_mode {self.feature_mode!r}")
        if self.structure_mode not in STRUCTURE_MODES:
            raise NoiseError(f"unknown structure_mode {self.structure_mode!r}")
        if self.gaussian_sigma is not None and not self.gaussian_sigma > 0:
            raise NoiseError("gaussian_sigma must be > 0")
        if self.seed < 0:
            raise NoiseError("seed must be non-negative")

    def streams(self) -> tuple[np.random.Generator, np.random.Generator]:
        feat, struct = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(feat), np.random.default_rng(struct)


@dataclass
class NoiseLedger:
    """Ground truth for one injection.

    ``replacement_rows`` holds the new feature rows (aligned with the sorted
    ``corrupted_nodes``) so the ledger can be replayed in memory; it is not
    part of the JSON form.
    """

    corrupted_nodes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    injected_edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    replacement_rows: Optional[np.ndarray] = None

    def merge(self, other: "NoiseLedger") -> "NoiseLedger":
        if self.corrupted_nodes.size and other.corrupted_nodes.size:
            raise NoiseError("cannot merge two feature ledgers")
        feat = self if self.corrupted_nodes.size else other
        edges = np.concatenate([self.injected_edges, other.injected_edges]).reshape(-1, 2)
        return NoiseLedger(feat.corrupted_nodes, edges, feat.replacement_rows)

    def to_json(self) -> dict:
        return {
            "corrupted_nodes": [int(v) for v in self.corrupted_nodes],
            "injected_edges": [[int(u), int(v)] for u, v in self.injected_edges],
        }


def inject_feature_noise(g: Graph, spec: NoiseSpec) -> tuple[Graph, NoiseLedger]:
    spec.validate()
    rng, _ = spec.streams()
    count = round_half_up(spec.feature_ratio * g.n)
    nodes = np.sort(rng.choice(g.n, size=count, replace=False)).astype(np.int64)
    X = np.array(g.X, copy=True)
    if spec.feature_mode == "gaussian-replace":
        if spec.gaussian_sigma is not None:
            sigma = np.full(g.d, float(spec.gaussian_sigma))
        else:
            sigma = g.X.std(axis=0)
            sigma[sigma == 0] = 1.0
        rows = rng.standard_normal((count, g.d)) * sigma
    else:
        density = float(np.mean(g.X != 0)) if g.X.size else 0.0
        rows = (rng.random((count, g.d)) < density).astype(np.float64)
    X[nodes] = rows
    return g.with_features(X), NoiseLedger(nodes, np.empty((0, 2), dtype=np.int64), rows)


def _count_candidates(g: Graph, cross_class: bool) -> int:
    if not cross_class:
        return g.n * (g.n - 1) // 2 - g.num_edges
    sizes = np.bincount(g.labels)
    same = int(np.sum(sizes * (sizes - 1) // 2))
    total_cross = g.n * (g.n - 1) // 2 - same
    existing_cross = int(np.sum(g.labels[g.edges[:, 0]] != g.labels[g.edges[:, 1]]))
    return total_cross - existing_cross


def inject_structure_noise(g: Graph, spec: NoiseSpec) -> tuple[Graph, NoiseLedger]:
    spec.validate()
    _, rng = spec.streams()
    cross = spec.structure_mode == "cross-class"
    if cross:
        if g.labels is None:
            raise NoiseError("cross-class structure noise requires labels")
        if np.unique(g.labels).size < 2:
            raise NoiseError("cross-class structure noise requires at least 2 classes")
    count = round_half_up(spec.structure_ratio * g.num_edges)
    if count == 0:
        return g, NoiseLedger()
    available = _count_candidates(g, cross)
    if available < count:
        raise NoiseError(f"need {count} candidate non-edges, only {available} exist")

    n = g.n
    taken = set((g.edges[:, 0] * n + g.edges[:, 1]).tolist())
    chosen: list[int] = []
    if available <= 4 * count:
        # Dense regime: enumerate every candidate and sample without replacement.
        iu, iv = np.triu_indices(n, k=1)
        keys = iu * n + iv
        ok = ~np.isin(keys, np.fromiter(taken, dtype=np.int64, count=len(taken)))
        if cross:
            ok &= g.labels[iu] != g.labels[iv]
        pool = keys[ok]
        chosen = np.sort(rng.choice(pool, size=count, replace=False)).tolist()
    else:
        picked: set[int] = set()
        while len(chosen) < count:
            batch = rng.integers(0, n, size=(2 * (count - len(chosen)) + 16, 2))
            for a, b in batch:
                if a == b:
                    continue
                u, v = (a, b) if a < b else (b, a)
                if cross and g.labels[u] == g.labels[v]:
                    continue
                key = int(u) * n + int(v)
                if key in taken or key in picked:
                    continue
                picked.add(key)
                chosen.append(key)
                if len(chosen) == count:
                    break
        chosen.sort()
    keys = np.asarray(chosen, dtype=np.int64)
    injected = np.stack([keys // n, keys % n], axis=1)
    noisy = g.with_edges(np.concatenate([g.edges, injected]))
    return noisy, NoiseLedger(np.empty(0, dtype=np.int64), injected)


def inject_noise(g: Graph, spec: NoiseSpec) -> tuple[Graph, NoiseLedger]:
    """Apply structure noise and feature noise from ``spec`` together."""
    g1, structure = inject_structure_noise(g, spec)
    g2, features = inject_feature_noise(g1, spec)
    return g2, structure.merge(features)


def apply_ledger(clean: Graph, ledger: NoiseLedger) -> Graph:
    """Rebuild the noisy graph from the clean graph and a ledger."""
    X = np.array(clean.X, copy=True)
    if ledger.corrupted_nodes.size:
        if ledger.replacement_rows is None:
            raise NoiseError("ledger carries no replacement rows")
        X[ledger.corrupted_nodes] = ledger.replacement_rows
    edges = np.concatenate([clean.edges, ledger.injected_edges]).reshape(-1, 2)
    return build_graph(edges, X, clean.labels, clean.masks)


def _pair_from_triu_index(idx: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices of the strict upper triangle of an m x m matrix to (i, j)."""
    # Row i starts at offset i*m - i*(i+1)/2; invert the quadratic and fix rounding.
    i = np.floor((2 * m - 1 - np.sqrt((2 * m - 1) ** 2 - 8 * idx.astype(np.float64))) / 2).astype(np.int64)
    start = i * m - i * (i + 1) // 2
    over = idx < start
    i[over] -= 1
    start = i * m - i * (i + 1) // 2
    under = idx >= start + (m - 1 - i)
    i[under] += 1
    start = i * m - i * (i + 1) // 2
    j = idx - start + i + 1
    return i, j


def generate_sbm(n: int, k: int, p_in: float, p_out: float, feature_centers_sep: float = 1.0,
                 seed: int = 0, dim: Optional[int] = None, feature_std: float = 1.0) -> Graph:
    """Sample a homophilous SBM graph with Gaussian class features.

    Blocks have ``n // k`` nodes each; the last block takes the remainder.
    Class ``c`` features are ``N(sep * e_c, feature_std^2 I)`` in ``dim`` dimensions, where
    ``e_c`` is the c-th standard basis vector; ``dim`` defaults to ``k`` and must be ``>= k``.
    Masks are a seeded 10/10/80 train/val/test split.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise NoiseError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if k < 1 or n < k:
        raise NoiseError(f"need 1 <= k <= n, got n={n}, k={k}")
    if feature_std <= 0:
        raise NoiseError("feature_std must be > 0")
    dim = k if dim is None else dim
    if dim < k:
        raise NoiseError(f"feature dim {dim} must be >= number of classes {k}")
    edge_rng, feat_rng, split_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))

    size = n // k
    starts = np.arange(k) * size
    sizes = np.full(k, size)
    sizes[-1] = n - size * (k - 1)
    labels = np.repeat(np.arange(k), sizes)

    parts = []
    for a in range(k):
        for b in range(a, k):
            if a == b:
                m = int(sizes[a])
                pairs = m * (m - 1) // 2
                p = p_in
            else:
                pairs = int(sizes[a] * sizes[b])
                p = p_out
            count = edge_rng.binomial(pairs, p) if pairs else 0
            if count == 0:
                continue
            idx = np.sort(edge_rng.choice(pairs, size=count, replace=False))
            if a == b:
                i, j = _pair_from_triu_index(idx, m)
            else:
                i, j = idx // sizes[b], idx % sizes[b]
            parts.append(np.stack([starts[a] + i, starts[b] + j], axis=1))
    edges = np.concatenate(parts) if parts else np.empty((0, 2), dtype=np.int64)

    centers = np.zeros((k, dim))
    centers[np.arange(k), np.arange(k)] = feature_centers_sep
    X = centers[labels] + feature_std * feat_rng.standard_normal((n, dim))

    perm = split_rng.permutation(n)
    n_train = round_half_up(0.1 * n)
    n_val = round_half_up(0.1 * n)
    masks = {name: np.zeros(n, dtype=bool) for name in ("train", "val", "test")}
    masks["train"][perm[:n_train]] = True
    masks["val"][perm[n_train:n_train + n_val]] = True
    masks["test"][perm[n_train + n_val:]] = True
    return build_graph(edges, X, labels, masks)
