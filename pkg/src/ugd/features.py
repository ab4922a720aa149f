"""Feature denoising with a residual graph auto-encoder.

The denoised features are ``beta * X0 + (1 - beta) * Dec(Enc(X0))`` where the
encoder and decoder are two GCN layers each. Training minimizes the mean
per-node reconstruction distance plus ``gamma`` times the normalized
Laplacian smoothness of the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .graph import Graph, sym_norm_adj
from .nn import (AdamState, GcnLayerParams, NumericalError, adam_step, check_finite,
                 gcn_backward, gcn_layer_forward)

LAYER_NAMES = ("enc1", "enc2", "dec1", "dec2")
_ACTS = ("relu", "relu", "relu", "identity")


@dataclass(frozen=True)
class FdConfig:
    beta: float = 0.0
    gamma: float = 1e-3
    lr: float = 1e-3
    epochs_per_step: int = 200
    hidden: tuple[int, int] = (64, 32)
    warm_start: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.epochs_per_step < 0:
            raise ValueError("epochs_per_step must be >= 0")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError(f"hidden must be two positive widths, got {self.hidden}")


@dataclass
class AutoEncoderParams:
    enc1: GcnLayerParams
    enc2: GcnLayerParams
    dec1: GcnLayerParams
    dec2: GcnLayerParams
    adam: AdamState = field(default_factory=AdamState)

    @classmethod
    def init(cls, d: int, hidden=(64, 32), seed: int = 0) -> "AutoEncoderParams":
        h1, h2 = hidden
        rng = np.random.default_rng(seed)
        dims = [(d, h1), (h1, h2), (h2, h1), (h1, d)]
        layers = [GcnLayerParams.glorot(a, b, rng) for a, b in dims]
        params = cls(*layers)
        params.adam = AdamState.for_params(params.weights())
        return params

    def layers(self) -> list[GcnLayerParams]:
        return [self.enc1, self.enc2, self.dec1, self.dec2]

    def weights(self) -> list[np.ndarray]:
        return [layer.W for layer in self.layers()]

    def copy(self) -> "AutoEncoderParams":
        new = AutoEncoderParams(*(GcnLayerParams(layer.W.copy()) for layer in self.layers()))
        new.adam = AdamState([m.copy() for m in self.adam.m], [v.copy() for v in self.adam.v],
                             self.adam.t, self.adam.beta1, self.adam.beta2, self.adam.eps)
        return new


def _forward(a_hat, X0: np.ndarray, params: AutoEncoderParams, beta: float):
    H = X0
    caches = []
    for layer, act in zip(params.layers(), _ACTS):
        H, cache = gcn_layer_forward(a_hat, H, layer, act)
        caches.append(cache)
    return beta * X0 + (1.0 - beta) * H, caches


def autoencoder_forward(g: Graph, X0: np.ndarray, params: AutoEncoderParams, beta: float,
                        a_hat=None) -> np.ndarray:
    """Residual reconstruction of ``X0`` over the edges of ``g``."""
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.shape[0] != g.n or X0.shape[1] != params.enc1.W.shape[0]:
        raise ValueError(f"features {X0.shape} incompatible with graph/params")
    if a_hat is None:
        a_hat = sym_norm_adj(g)
    X_hat, _ = _forward(a_hat, X0, params, beta)
    return X_hat


def recon_loss(X_hat: np.ndarray, X0: np.ndarray) -> float:
    """Mean over nodes of the Euclidean distance between rows."""
    if X_hat.shape != X0.shape:
        raise ValueError(f"shape mismatch {X_hat.shape} vs {X0.shape}")
    return float(np.mean(np.linalg.norm(X_hat - X0, axis=1))) if X0.shape[0] else 0.0


def recon_grad(X_hat: np.ndarray, X0: np.ndarray) -> np.ndarray:
    diff = X_hat - X0
    norms = np.linalg.norm(diff, axis=1, keepdims=True)
    # Zero rows sit at the kink of the norm; take the zero subgradient there.
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, diff / safe, 0.0) / X0.shape[0]


def smoothing_operator(g: Graph) -> sp.csr_matrix:
    """Normalized Laplacian with isolated nodes' diagonal zeroed.

    Isolated nodes have no pair terms in the edge-sum form of the smoothness
    loss, so they must not contribute through the diagonal either.
    """
    deg = g.degrees.astype(np.float64)
    has = deg > 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[has] = 1.0 / np.sqrt(deg[has])
    d = sp.diags(inv_sqrt)
    return (sp.diags(has.astype(np.float64)) - d @ g.adjacency() @ d).tocsr()


def smooth_loss(X_hat: np.ndarray, L) -> float:
    """``tr(X^T L X)``; pass :func:`smoothing_operator` output as ``L``."""
    if L.shape[0] != X_hat.shape[0]:
        raise ValueError(f"operator {L.shape} does not match features {X_hat.shape}")
    return float(np.sum(X_hat * np.asarray(L @ X_hat)))


def smooth_loss_pairwise(X_hat: np.ndarray, g: Graph) -> float:
    """Edge-sum form of the smoothness loss (each undirected edge counted once)."""
    deg = g.degrees.astype(np.float64)
    u, v = g.edges[:, 0], g.edges[:, 1]
    diff = X_hat[u] / np.sqrt(deg[u])[:, None] - X_hat[v] / np.sqrt(deg[v])[:, None]
    return float(np.sum(diff * diff))


@dataclass
class FdObjective:
    total: float
    recon: float
    smooth: float
    X_hat: np.ndarray
    grads: Optional[list] = None


def fd_objective(a_hat, L, X0: np.ndarray, params: AutoEncoderParams, beta: float, gamma: float,
                 with_grad: bool = True) -> FdObjective:
    """Loss ``recon + gamma * smooth`` and its gradient w.r.t. the four weight matrices."""
    X_hat, caches = _forward(a_hat, X0, params, beta)
    rec = recon_loss(X_hat, X0)
    LX = np.asarray(L @ X_hat)
    smo = float(np.sum(X_hat * LX))
    total = rec + gamma * smo
    if not np.isfinite(total):
        raise NumericalError(f"non-finite feature-denoising loss (recon={rec}, smooth={smo})")
    result = FdObjective(total, rec, smo, X_hat)
    if not with_grad:
        return result
    upstream = (1.0 - beta) * (recon_grad(X_hat, X0) + 2.0 * gamma * LX)
    grads = [None] * 4
    for i in range(3, -1, -1):
        grads[i], upstream = gcn_backward(caches[i], upstream, params.layers()[i])
    result.grads = grads
    return result


@dataclass
class FdStepResult:
    X_hat: np.ndarray
    params: AutoEncoderParams
    losses: list[float]
    recon: float
    smooth: float
    total: float


def fd_train_step(g: Graph, X0: np.ndarray, params: AutoEncoderParams, cfg: FdConfig) -> FdStepResult:
    """Train the auto-encoder on the edges of ``g`` for ``cfg.epochs_per_step`` epochs.

    ``params`` is updated in place. ``losses`` holds the objective evaluated
    before each update; the returned features and loss parts come from a final
    forward pass after the last update.
    """
    cfg.validate()
    X0 = np.asarray(X0, dtype=np.float64)
    a_hat = sym_norm_adj(g)
    L = smoothing_operator(g)
    weights = params.weights()
    losses = []
    for _ in range(cfg.epochs_per_step):
        obj = fd_objective(a_hat, L, X0, params, cfg.beta, cfg.gamma)
        losses.append(obj.total)
        adam_step(weights, obj.grads, params.adam, cfg.lr)
    for w in weights:
        check_finite(w, "auto-encoder weights")
    final = fd_objective(a_hat, L, X0, params, cfg.beta, cfg.gamma, with_grad=False)
    return FdStepResult(final.X_hat, params, losses, final.recon, final.smooth, final.total)
