"""Downstream node classification with a two-layer GCN, and the benchmark harness."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .driver import ABLATIONS, DenoiseConfig, denoise
from .graph import Graph, GraphError, sym_norm_adj
from .nn import AdamState, GcnLayerParams, adam_step, gcn_backward, gcn_layer_forward, softmax_cross_entropy
from .noise import NoiseSpec, inject_noise
from .structure import ThresholdSchedule

log = logging.getLogger(__name__)

CONTROL = "none"
BENCH_VARIANTS = (CONTROL, "no-hnp", "no-fr", "pipeline-fs", "pipeline-sf", "full")


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 16
    lr: float = 0.01
    weight_decay: float = 1e-3
    epochs: int = 100
    dropout: float = 0.5
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")


@dataclass
class ClassifierParams:
    layer1: GcnLayerParams
    layer2: GcnLayerParams
    best_epoch: int = -1
    best_val_acc: float = float("nan")


def _logits(a_hat, X, params: ClassifierParams, rng=None, dropout: float = 0.0):
    caches = []
    masks = []
    H = X
    for layer, act in ((params.layer1, "relu"), (params.layer2, "identity")):
        if rng is not None and dropout > 0:
            keep = (rng.random(H.shape) >= dropout) / (1.0 - dropout)
            H = H * keep
            masks.append(keep)
        else:
            masks.append(None)
        H, cache = gcn_layer_forward(a_hat, H, layer, act)
        caches.append(cache)
    return H, caches, masks


def _require_labels(g: Graph) -> None:
    if g.labels is None or g.masks is None:
        raise GraphError("classification needs labels and train/val/test masks")
    for name in ("train", "val"):
        if not g.mask(name).any():
            raise GraphError(f"{name} mask is empty")


def train_classifier(g: Graph, cfg: ClassifierConfig, seed: int) -> ClassifierParams:
    """Full-batch training on the train mask; keeps the weights of the best validation epoch."""
    cfg.validate()
    _require_labels(g)
    rng = np.random.default_rng(seed)
    C = max(g.num_classes, 2)
    params = ClassifierParams(GcnLayerParams.glorot(g.d, cfg.hidden, rng),
                              GcnLayerParams.glorot(cfg.hidden, C, rng))
    weights = [params.layer1.W, params.layer2.W]
    state = AdamState.for_params(weights)
    a_hat = sym_norm_adj(g)
    X = np.asarray(g.X, dtype=np.float64)
    train, val = g.mask("train"), g.mask("val")
    best = (-1.0, -1, [w.copy() for w in weights])
    for epoch in range(cfg.epochs):
        logits, caches, drops = _logits(a_hat, X, params, rng, cfg.dropout)
        _, grad = softmax_cross_entropy(logits, g.labels, train)
        gw2, gh = gcn_backward(caches[1], grad, params.layer2)
        if drops[1] is not None:
            gh = gh * drops[1]
        gw1, _ = gcn_backward(caches[0], gh, params.layer1)
        adam_step(weights, [gw1, gw2], state, cfg.lr, cfg.weight_decay)
        val_acc = _masked_accuracy(_logits(a_hat, X, params)[0], g.labels, val)
        if val_acc > best[0]:
            best = (val_acc, epoch, [w.copy() for w in weights])
    params.layer1.W[...] = best[2][0]
    params.layer2.W[...] = best[2][1]
    params.best_epoch, params.best_val_acc = best[1], best[0]
    return params


def _masked_accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("accuracy needs a non-empty mask")
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))


def predict(params: ClassifierParams, g: Graph) -> np.ndarray:
    logits, _, _ = _logits(sym_norm_adj(g), np.asarray(g.X, dtype=np.float64), params)
    return np.argmax(logits, axis=1)


def accuracy(params: ClassifierParams, g: Graph, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("accuracy needs a non-empty mask")
    return float(np.mean(predict(params, g)[mask] == g.labels[mask]))


@dataclass(frozen=True)
class ResultRow:
    variant: str
    seed: int
    val_acc: float
    test_acc: float


@dataclass
class BenchmarkResult:
    rows: list[ResultRow] = field(default_factory=list)

    def variants(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def test_accs(self, variant: str) -> np.ndarray:
        return np.array([r.test_acc for r in self.rows if r.variant == variant])

    def mean(self, variant: str) -> float:
        return float(np.mean(self.test_accs(variant)))

    def std(self, variant: str) -> float:
        accs = self.test_accs(variant)
        return float(np.std(accs, ddof=1)) if accs.size > 1 else 0.0

    def summary(self) -> list[tuple[str, float, float]]:
        return [(v, self.mean(v), self.std(v)) for v in self.variants()]

    def to_csv(self) -> str:
        lines = ["variant,seed,val_acc,test_acc"]
        lines += [f"{r.variant},{r.seed},{r.val_acc:.6f},{r.test_acc:.6f}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        out = [f"{'variant':<12} {'mean':>7} {'std':>7}"]
        for v, m, s in self.summary():
            out.append(f"{v:<12} {100 * m:7.2f} {100 * s:7.2f}")
        return "\n".join(out)


def evaluate_graph(g: Graph, cls: ClassifierConfig, seed: int, variant: str = "graph") -> ResultRow:
    params = train_classifier(g, cls, seed)
    return ResultRow(variant, seed, accuracy(params, g, g.mask("val")), accuracy(params, g, g.mask("test")))


def _run_seed(clean: Graph, noise: NoiseSpec, cfg: DenoiseConfig, cls: ClassifierConfig,
              variants: Sequence[str], seed: int) -> list[ResultRow]:
    noisy, _ = inject_noise(clean, replace(noise, seed=seed))
    rows = []
    for variant in variants:
        if variant == CONTROL:
            g = noisy
        else:
            g, _ = denoise(noisy, replace(cfg, ablation=variant, seed=seed))
        rows.append(evaluate_graph(g, cls, seed, variant))
        log.info("seed %d %-12s test=%.4f", seed, variant, rows[-1].test_acc)
    return rows


def benchmark(clean: Graph, noise: NoiseSpec, denoise_cfg: DenoiseConfig, cls: ClassifierConfig,
              variants: Sequence[str] = BENCH_VARIANTS, workers: int = 1) -> BenchmarkResult:
    """Inject noise, denoise with each variant, and classify, once per seed in ``cls.seeds``.

    The seed drives the noise, the denoiser, and the classifier together.
    ``workers > 1`` runs seeds on threads; rows come back in seed order either way.
    """
    cls.validate()
    noise.validate()
    denoise_cfg.validate()
    for v in variants:
        if v != CONTROL and v not in ABLATIONS:
            raise ValueError(f"unknown variant {v!r}")
    job: Callable[[int], list[ResultRow]] = lambda s: _run_seed(clean, noise, denoise_cfg, cls, variants, s)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(job, cls.seeds))
    else:
        per_seed = [job(s) for s in cls.seeds]
    result = BenchmarkResult()
    for variant in variants:
        for rows in per_seed:
            result.rows.extend(r for r in rows if r.variant == variant)
    return result


def sweep_feature_noise(clean: Graph, noise: NoiseSpec, denoise_cfg: DenoiseConfig, cls: ClassifierConfig,
                        ratios: Sequence[float], variants: Sequence[str] = (CONTROL, "full"),
                        workers: int = 1) -> dict[float, BenchmarkResult]:
    """Benchmark at each feature-noise ratio, holding everything else fixed."""
    return {r: benchmark(clean, replace(noise, feature_ratio=r), denoise_cfg, cls, variants, workers)
            for r in ratios}


def tune_theta(noisy: Graph, denoise_cfg: DenoiseConfig, cls: ClassifierConfig, thetas: Sequence[float],
               slack: float = 0.1, seed: int = 0) -> tuple[float, dict[float, float]]:
    """Pick the main threshold with the best validation accuracy after denoising ``noisy``."""
    scores = {}
    for theta in thetas:
        cfg = replace(denoise_cfg, theta_schedule=ThresholdSchedule.from_main(
            theta, slack, denoise_cfg.theta_schedule.warmup_iters), seed=seed)
        g, _ = denoise(noisy, cfg)
        scores[theta] = evaluate_graph(g, cls, seed).val_acc
    best = max(scores, key=lambda t: (scores[t], -t))
    return best, scores

