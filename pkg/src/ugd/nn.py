"""Dense numpy building blocks: GCN layers with manual backprop, Adam, softmax CE.

Matrices are plain float64 ``np.ndarray``; the propagation operator is any
object supporting ``@`` with a dense matrix (typically scipy CSR).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")


class NumericalError(ArithmeticError):
    """A non-finite value showed up during training."""


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what}")
    return arr


@dataclass
class GcnLayerParams:
    W: np.ndarray

    @classmethod
    def glorot(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "GcnLayerParams":
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-limit, limit, size=(in_dim, out_dim)))


@dataclass
class GcnCache:
    a_hat: object
    propagated: np.ndarray  # A_hat @ H
    pre: np.ndarray  # A_hat @ H @ W
    activation: str


def gcn_layer_forward(a_hat, H: np.ndarray, params: GcnLayerParams,
                      activation: str = "relu") -> tuple[np.ndarray, GcnCache]:
    """``act(A_hat @ H @ W)``; returns the output and the cache for backward."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if H.shape[1] != params.W.shape[0]:
        raise ValueError(f"input width {H.shape[1]} does not match W {params.W.shape}")
    if a_hat.shape[1] != H.shape[0]:
        raise ValueError(f"operator {a_hat.shape} does not match input rows {H.shape[0]}")
    propagated = np.asarray(a_hat @ H)
    pre = propagated @ params.W
    out = np.maximum(pre, 0.0) if activation == "relu" else pre
    check_finite(out, "GCN layer output")
    return out, GcnCache(a_hat, propagated, pre, activation)


def gcn_backward(cache: Optional[GcnCache], upstream: np.ndarray,
                 params: GcnLayerParams) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. ``W`` and ``H``. The operator is assumed symmetric."""
    if cache is None:
        raise ValueError("gcn_backward needs the cache from gcn_layer_forward")
    g_pre = upstream * (cache.pre > 0) if cache.activation == "relu" else upstream
    grad_w = cache.propagated.T @ g_pre
    grad_h = np.asarray(cache.a_hat @ (g_pre @ params.W.T))
    return grad_w, grad_h


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0) -> Sequence[np.ndarray]:
    """One bias-corrected Adam update, applied in place.

    Weight decay is added to the gradient (L2 style), as in ``torch.optim.Adam``.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        if weight_decay:
            g = g + weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                          mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over masked rows and its gradient w.r.t. ``logits``."""
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("softmax_cross_entropy needs a non-empty mask")
    rows = np.flatnonzero(mask)
    z = logits[rows]
    y = np.asarray(labels)[rows]
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise ValueError("labels out of range for the logits")
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(count), y]))
    probs = np.exp(z - log_norm[:, None])
    probs[np.arange(count), y] -= 1.0
    grad = np.zeros_like(logits, dtype=np.float64)
    grad[rows] = probs / count
    return loss, grad
