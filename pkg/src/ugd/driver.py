"""Alternating structure/feature denoising loop and its ablation variants."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .features import AutoEncoderParams, FdConfig, fd_train_step
from .graph import Graph, edge_set_difference
from .structure import ThresholdSchedule, sd_step

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no-hnp", "no-fr", "pipeline-fs", "pipeline-sf")
PROTOTYPE_SOURCES = ("denoised", "raw")


@dataclass(frozen=True)
class DenoiseConfig:
    theta_schedule: ThresholdSchedule = field(default_factory=ThresholdSchedule)
    fd: FdConfig = field(default_factory=FdConfig)
    epsilon: int = 2
    max_iters: int = 10
    ablation: str = "full"
    seed: int = 0
    # Which features the SD-step scores edges with after the first iteration.
    prototype_features: str = "denoised"

    def validate(self) -> None:
        self.theta_schedule.validate()
        self.fd.validate()
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.prototype_features not in PROTOTYPE_SOURCES:
            raise ValueError(f"prototype_features must be one of {PROTOTYPE_SOURCES}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class IterationRecord:
    iteration: int
    num_edges: int
    removed: int
    theta: Optional[float]
    recon: Optional[float]
    smooth: Optional[float]
    total: Optional[float]
    wall_time: float = 0.0


@dataclass
class RunReport:
    ablation: str
    initial_edges: int
    iterations: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def final_edges(self) -> int:
        return self.iterations[-1].num_edges if self.iterations else self.initial_edges

    @property
    def total_removed(self) -> int:
        return sum(r.removed for r in self.iterations)

    def to_json(self, timings: bool = False) -> dict:
        records = []
        for rec in self.iterations:
            item = asdict(rec)
            if not timings:
                item.pop("wall_time")
            records.append(item)
        return {
            "ablation": self.ablation,
            "initial_edges": self.initial_edges,
            "final_edges": self.final_edges,
            "converged": self.converged,
            "reason": self.reason,
            "iterations": records,
        }


class _Runner:
    """Shared state for one denoising run."""

    def __init__(self, g0: Graph, cfg: DenoiseConfig):
        cfg.validate()
        self.cfg = cfg
        self.X0 = np.asarray(g0.X, dtype=np.float64)
        self.graph = g0
        self.X = self.X0
        self.report = RunReport(cfg.ablation, g0.num_edges)
        self.params = AutoEncoderParams.init(g0.d, cfg.fd.hidden, seed=cfg.seed)
        self._fd_runs = 0

    def sd(self, iteration: int, features: np.ndarray,
           theta: Optional[float] = None) -> tuple[int, float]:
        theta = self.cfg.theta_schedule.theta(iteration) if theta is None else theta
        kept, _ = sd_step(self.graph, features, theta)
        removed = self.graph.num_edges - kept.shape[0]
        self.graph = self.graph.with_edges(kept)
        if removed and self.graph.num_edges == 0:
            log.warning("threshold %.3f removed every edge", theta)
        return removed, theta

    def fd(self):
        if self._fd_runs and not self.cfg.fd.warm_start:
            self.params = AutoEncoderParams.init(self.graph.d, self.cfg.fd.hidden,
                                                 seed=self.cfg.seed + self._fd_runs)
        self._fd_runs += 1
        step = fd_train_step(self.graph, self.X0, self.params, self.cfg.fd)
        self.X = step.X_hat
        return step

    def record(self, iteration: int, removed: int, step, theta, started: float) -> None:
        self.report.iterations.append(IterationRecord(
            iteration=iteration,
            num_edges=self.graph.num_edges,
            removed=removed,
            theta=theta,
            recon=None if step is None else step.recon,
            smooth=None if step is None else step.smooth,
            total=None if step is None else step.total,
            wall_time=time.perf_counter() - started,
        ))

    def result(self) -> tuple[Graph, RunReport]:
        return self.graph.with_features(self.X), self.report


Observer = Callable[[IterationRecord, Graph], None]


def _run_iterative(runner: _Runner, with_fd: bool, observer: Optional[Observer] = None) -> None:
    cfg = runner.cfg
    for i in range(1, cfg.max_iters + 1):
        started = time.perf_counter()
        if i == 1 or cfg.prototype_features == "raw":
            scored = runner.X0
        else:
            scored = runner.X
        before = runner.graph.edges
        removed, theta = runner.sd(i, scored)
        step = runner.fd() if with_fd else None
        runner.record(i, removed, step, theta, started)
        if observer is not None:
            observer(runner.report.iterations[-1], runner.graph)
        change = edge_set_difference(before, runner.graph.edges)
        log.debug("iteration %d: %d edges, removed %d", i, runner.graph.num_edges, removed)
        # A change below epsilon only counts once the threshold has stopped moving.
        settled = cfg.theta_schedule.theta(i + 1) == theta
        if change <= cfg.epsilon and settled:
            runner.report.converged = True
            runner.report.reason = f"edge change {change} <= epsilon {cfg.epsilon}"
            return
    runner.report.reason = f"reached max_iters={cfg.max_iters}"


def ugd_run(g0: Graph, cfg: DenoiseConfig, observer: Optional[Observer] = None) -> tuple[Graph, RunReport]:
    """Alternate SD- and FD-steps until the edge set changes by at most ``epsilon``.

    Each iteration filters edges first, scoring them with the raw features in
    iteration 1 and the latest denoised features afterwards, then retrains the
    auto-encoder on the surviving edges. Returns the cleaned graph and a trace.
    ``observer`` is called after every iteration with its record and the current graph.
    """
    if cfg.ablation != "full":
        return run_ablation(g0, cfg)
    runner = _Runner(g0, cfg)
    _run_iterative(runner, with_fd=True, observer=observer)
    return runner.result()


def run_ablation(g0: Graph, cfg: DenoiseConfig) -> tuple[Graph, RunReport]:
    """Run one of the reduced variants named by ``cfg.ablation``.

    ``no-hnp`` trains the auto-encoder once on the input edges. ``no-fr`` iterates
    edge filtering on the input features. The two pipelines run one FD pass and
    one SD pass (at the main threshold) in the named order.
    """
    runner = _Runner(g0, cfg)
    variant = cfg.ablation
    started = time.perf_counter()
    if variant == "full":
        _run_iterative(runner, with_fd=True)
    elif variant == "no-hnp":
        step = runner.fd()
        runner.record(1, 0, step, None, started)
        runner.report.converged = True
        runner.report.reason = "single feature-denoising pass"
    elif variant == "no-fr":
        _run_iterative(runner, with_fd=False)
    elif variant == "pipeline-fs":
        step = runner.fd()
        removed, theta = runner.sd(1, runner.X, cfg.theta_schedule.main_theta)
        runner.record(1, removed, step, theta, started)
        runner.report.converged = True
        runner.report.reason = "single pass (features then structure)"
    elif variant == "pipeline-sf":
        removed, theta = runner.sd(1, runner.X0, cfg.theta_schedule.main_theta)
        step = runner.fd()
        runner.record(1, removed, step, theta, started)
        runner.report.converged = True
        runner.report.reason = "single pass (structure then features)"
    else:
        raise ValueError(f"unknown ablation {variant!r}")
    return runner.result()


def denoise(g0: Graph, cfg: DenoiseConfig) -> tuple[Graph, RunReport]:
    return ugd_run(g0, cfg) if cfg.ablation == "full" else run_ablation(g0, cfg)


def with_ablation(cfg: DenoiseConfig, variant: str, seed: Optional[int] = None) -> DenoiseConfig:
    return replace(cfg, ablation=variant, seed=cfg.seed if seed is None else seed)
