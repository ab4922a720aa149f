"""Command-line entry point: ``ugd <command> [options]``.

Every command writes its artifacts plus a ``manifest.json`` (or, for single-file
outputs, ``<file>.manifest.json``). Failures print one line to stderr,
``ugd: error: <kind>: <message>``, and exit with 2 (usage or config), 3 (I/O or
malformed input), or 4 (numerical failure).
"""

from __future__ import annotations

import os

# BLAS threads must be pinned before numpy loads; UGD_THREADS is validated again in main().
_env_threads = os.environ.get("UGD_THREADS", "1")
if _env_threads.isdigit() and int(_env_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _env_threads)

import argparse
import hashlib
import logging
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, NamedTuple, Optional, Sequence

import numpy as np

from . import __version__
from .config import (PRESETS, ConfigError, Preset, SbmSpec, config_hash, from_dict, load_config, load_json,
                     to_dict, validated, with_overrides)
from .driver import ABLATIONS, PROTOTYPE_SOURCES, DenoiseConfig, denoise
from .evaluate import (BENCH_VARIANTS, CONTROL, BenchmarkResult, ClassifierConfig, benchmark,
                       evaluate_graph, sweep_feature_noise)
from .features import AutoEncoderParams, FdConfig, fd_train_step
from .graph import Graph, GraphError
from .io import atomic_write_text, graph_files, read_graph, write_features, write_graph, write_json
from .nn import NumericalError
from .noise import FEATURE_MODES, STRUCTURE_MODES, NoiseSpec, inject_noise
from .structure import compute_edge_weights

log = logging.getLogger("ugd")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        text = action.help or ""
        if "(default:" in text or action.required:
            return text
        return super()._get_help_string(action)


class Flag(NamedTuple):
    flag: str
    path: str
    kind: Any
    help: str
    choices: Optional[Sequence[str]] = None


def _widths(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


DENOISE_FLAGS = (
    Flag("--theta", "theta_schedule.main_theta", float,
         "SD-step cosine threshold after warm-up; alone, it shifts the warm-up threshold by the same amount"),
    Flag("--warmup-theta", "theta_schedule.warmup_theta", float, "threshold for the warm-up SD-steps"),
    Flag("--warmup-iters", "theta_schedule.warmup_iters", int, "number of warm-up SD-steps"),
    Flag("--beta", "fd.beta", float, "residual weight of the raw features"),
    Flag("--gamma", "fd.gamma", float, "smoothness weight"),
    Flag("--lr", "fd.lr", float, "auto-encoder learning rate"),
    Flag("--epochs", "fd.epochs_per_step", int, "auto-encoder epochs per FD-step"),
    Flag("--hidden", "fd.hidden", _widths, "encoder widths, e.g. 64,32"),
    Flag("--warm-start", "fd.warm_start", bool, "reuse auto-encoder weights across iterations"),
    Flag("--epsilon", "epsilon", int, "stop once an iteration changes at most this many edges"),
    Flag("--max-iters", "max_iters", int, "iteration cap"),
    Flag("--ablation", "ablation", str, "variant to run", ABLATIONS),
    Flag("--seed", "seed", int, "auto-encoder initialization seed"),
    Flag("--prototype-features", "prototype_features", str,
         "features the SD-step scores with after iteration 1", PROTOTYPE_SOURCES),
)

FD_FLAGS = tuple(f for f in DENOISE_FLAGS if f.path.startswith("fd.") and f.flag != "--warm-start")
# The benchmark sets the seed per run and compares every variant itself.
BENCH_FLAGS = tuple(f for f in DENOISE_FLAGS if f.flag not in ("--seed", "--ablation"))

CLASSIFIER_FLAGS = (
    Flag("--cls-hidden", "hidden", int, "classifier hidden width"),
    Flag("--cls-lr", "lr", float, "classifier learning rate"),
    Flag("--cls-weight-decay", "weight_decay", float, "classifier weight decay"),
    Flag("--cls-epochs", "epochs", int, "classifier epochs"),
    Flag("--cls-dropout", "dropout", float, "classifier dropout"),
)


def _flatten(data: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


def _dest(path: str) -> str:
    return "cfg__" + path.replace(".", "__")


def _add_flags(parser: argparse.ArgumentParser, title: str, flags: Sequence[Flag], base: Any,
               prefix: str = "") -> None:
    defaults = _flatten(to_dict(base))
    group = parser.add_argument_group(title)
    for f in flags:
        shown = defaults[prefix + f.path]
        if isinstance(shown, list):
            shown = ",".join(str(x) for x in shown)
        text = f"{f.help} (default: {shown})"
        if f.kind is bool:
            group.add_argument(f.flag, dest=_dest(f.path), action=argparse.BooleanOptionalAction,
                               default=None, help=text)
        else:
            group.add_argument(f.flag, dest=_dest(f.path), type=f.kind, choices=f.choices, default=None,
                               help=text, metavar=None if f.choices else f.flag[2:].upper().replace("-", "_"))


def _overrides(args: argparse.Namespace, flags: Sequence[Flag], prefix: str = "") -> dict:
    return {prefix + f.path: getattr(args, _dest(f.path), None) for f in flags}


def _denoise_config(args: argparse.Namespace, base: DenoiseConfig) -> DenoiseConfig:
    overrides = _overrides(args, DENOISE_FLAGS)
    main = overrides["theta_schedule.main_theta"]
    if main is not None and overrides["theta_schedule.warmup_theta"] is None:
        slack = base.theta_schedule.main_theta - base.theta_schedule.warmup_theta
        overrides["theta_schedule.warmup_theta"] = max(-1.0, main - slack)
    return validated(with_overrides(base, overrides))


def _classifier_config(args: argparse.Namespace, base: ClassifierConfig) -> ClassifierConfig:
    cfg = with_overrides(base, _overrides(args, CLASSIFIER_FLAGS))
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg = replace(cfg, seeds=tuple(range(args.seeds)))
    return validated(cfg)


def _base_denoise(args: argparse.Namespace) -> DenoiseConfig:
    if args.config and args.preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    if args.preset:
        return PRESETS[args.preset].denoise
    return load_config(DenoiseConfig, args.config)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def graph_hash(directory: Path) -> str:
    h = hashlib.sha256()
    for path in graph_files(directory):
        h.update(path.name.encode() + b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Provenance record written next to every command's outputs."""

    def __init__(self, command: str, argv: Sequence[str]):
        self.command = command
        self.argv = list(argv)
        self.started = _now()
        self.timings: dict[str, float] = {}
        self.config: Any = None
        self.input_hash: Optional[str] = None
        self._clock = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round(now - self._clock, 6)
        self._clock = now

    def write(self, path: Path, outputs: Sequence[Path], root: Path) -> None:
        write_json(path, {
            "tool": "ugd",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "input_graph_hash": self.input_hash,
            "started": self.started,
            "finished": _now(),
            "timings": self.timings,
            "outputs": [{"path": p.relative_to(root).as_posix(), "sha256": _sha256(p)} for p in outputs],
        })


def _load_input(args: argparse.Namespace, manifest: Manifest) -> Graph:
    directory = Path(args.graph)
    if not directory.is_dir():
        raise FileNotFoundError(f"graph directory {directory} not found")
    manifest.input_hash = graph_hash(directory)
    g = read_graph(directory)
    manifest.lap("read")
    return g


def _finish_dir(out: Path, files: Sequence[str], manifest: Manifest) -> None:
    paths = [out / f for f in files]
    manifest.lap("write")
    manifest.write(out / "manifest.json", paths, out)


def _finish_file(out: Path, manifest: Manifest) -> None:
    manifest.lap("write")
    manifest.write(out.with_name(out.name + ".manifest.json"), [out], out.parent)


def _table_rows(result: BenchmarkResult, out: Path) -> None:
    atomic_write_text(out / "results.csv", result.to_csv())
    print(result.format_table())


# Commands ------------------------------------------------------------------

def cmd_gen_sbm(args, manifest: Manifest) -> None:
    spec = SbmSpec(args.n, args.k, args.p_in, args.p_out, args.sep, args.seed, args.dim)
    manifest.config = to_dict(spec)
    g = spec.build()
    manifest.lap("generate")
    out = Path(args.out)
    files = write_graph(out, g)
    _finish_dir(out, files, manifest)
    print(f"wrote {g.n} nodes, {g.num_edges} edges to {out}")


def cmd_inject(args, manifest: Manifest) -> None:
    spec = validated(NoiseSpec(args.feature_ratio, args.feature_mode, args.sigma, args.structure_ratio,
                               args.mode, args.seed))
    manifest.config = to_dict(spec)
    g = _load_input(args, manifest)
    noisy, ledger = inject_noise(g, spec)
    manifest.lap("inject")
    out = Path(args.out)
    files = write_graph(out, noisy)
    write_json(out / "ledger.json", ledger.to_json())
    _finish_dir(out, files + ["ledger.json"], manifest)
    print(f"corrupted {ledger.corrupted_nodes.size} feature rows, injected {len(ledger.injected_edges)} edges")


def cmd_weights(args, manifest: Manifest) -> None:
    manifest.config = {}
    g = _load_input(args, manifest)
    table = compute_edge_weights(g, np.asarray(g.X, dtype=np.float64))
    manifest.lap("weights")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, "".join(f"{u}\t{v}\t{w:.17g}\n" for (u, v), w in zip(table.edges, table.weights)))
    _finish_file(out, manifest)


def cmd_fd(args, manifest: Manifest) -> None:
    overrides = {k.removeprefix("fd."): v for k, v in _overrides(args, FD_FLAGS).items()}
    cfg = validated(with_overrides(FdConfig(), overrides))
    manifest.config = {"fd": to_dict(cfg), "seed": args.seed}
    g = _load_input(args, manifest)
    params = AutoEncoderParams.init(g.d, cfg.hidden, seed=args.seed)
    step = fd_train_step(g, g.X, params, cfg)
    manifest.lap("train")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features(out, step.X_hat)
    _finish_file(out, manifest)
    print(f"recon={step.recon:.6g} smooth={step.smooth:.6g} total={step.total:.6g}")


def cmd_denoise(args, manifest: Manifest) -> None:
    cfg = _denoise_config(args, _base_denoise(args))
    manifest.config = to_dict(cfg)
    g = _load_input(args, manifest)
    clean, report = denoise(g, cfg)
    manifest.lap("denoise")
    manifest.timings["iterations"] = [round(r.wall_time, 6) for r in report.iterations]
    out = Path(args.out)
    files = write_graph(out, clean)
    write_json(out / "report.json", report.to_json())
    _finish_dir(out, files + ["report.json"], manifest)
    print(f"{report.initial_edges} -> {report.final_edges} edges in {len(report.iterations)} iteration(s); "
          f"{report.reason}")


def cmd_eval(args, manifest: Manifest) -> None:
    cls = _classifier_config(args, load_config(ClassifierConfig, args.cls_config))
    manifest.config = to_dict(cls)
    g = _load_input(args, manifest)
    result = BenchmarkResult([evaluate_graph(g, cls, s) for s in cls.seeds])
    manifest.lap("eval")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _table_rows(result, out)
    _finish_dir(out, ["results.csv"], manifest)


def cmd_ablate(args, manifest: Manifest) -> None:
    cfg = _denoise_config(args, _base_denoise(args))
    cls = _classifier_config(args, load_config(ClassifierConfig, args.cls_config))
    variants = args.variants.split(",")
    for v in variants:
        if v != CONTROL and v not in ABLATIONS:
            raise ConfigError(f"unknown variant {v!r}")
    manifest.config = {"denoise": to_dict(cfg), "classifier": to_dict(cls), "variants": variants}
    g = _load_input(args, manifest)
    out = Path(args.out)
    files: list[str] = []
    result = BenchmarkResult()
    labelled = g.labels is not None and g.masks is not None
    for v in variants:
        if v == CONTROL:
            cleaned = g
        else:
            cleaned, report = denoise(g, replace(cfg, ablation=v))
            files += [f"{v}/{f}" for f in write_graph(out / v, cleaned)]
            write_json(out / v / "report.json", report.to_json())
            files.append(f"{v}/report.json")
        if labelled:
            result.rows += [replace(evaluate_graph(cleaned, cls, s), variant=v) for s in cls.seeds]
        manifest.lap(v)
    if labelled:
        _table_rows(result, out)
        files.append("results.csv")
    out.mkdir(parents=True, exist_ok=True)
    _finish_dir(out, files, manifest)


def cmd_bench(args, manifest: Manifest) -> None:
    if args.config:
        preset = from_dict(Preset, load_json(args.config))
    else:
        preset = PRESETS[args.preset]
    noise = validated(with_overrides(preset.noise, {"feature_ratio": args.feature_ratio,
                                                    "structure_ratio": args.structure_ratio}))
    preset = replace(preset, noise=noise, denoise=_denoise_config(args, preset.denoise),
                     classifier=_classifier_config(args, preset.classifier))
    variants = args.variants.split(",")
    manifest.config = {"preset": to_dict(preset), "variants": variants, "sweep": args.sweep}
    g = preset.sbm.build()
    manifest.lap("generate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = benchmark(g, preset.noise, preset.denoise, preset.classifier, variants, args.workers)
    manifest.lap("benchmark")
    _table_rows(result, out)
    files = ["results.csv"]
    if args.sweep:
        curves = sweep_feature_noise(g, preset.noise, preset.denoise, preset.classifier, preset.sweep_ratios,
                                     (CONTROL, "full"), args.workers)
        manifest.lap("sweep")
        lines = ["feature_ratio,variant,seed,val_acc,test_acc"]
        print(f"\n{'ratio':>6} " + " ".join(f"{v:>8}" for v in (CONTROL, "full")))
        for ratio, res in curves.items():
            lines += [f"{ratio:g}," + line for line in res.to_csv().splitlines()[1:]]
            print(f"{ratio:>6g} " + " ".join(f"{100 * res.mean(v):8.2f}" for v in (CONTROL, "full")))
        atomic_write_text(out / "sweep.csv", "\n".join(lines) + "\n")
        files.append("sweep.csv")
    _finish_dir(out, files, manifest)


# Parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = _Parser(prog="ugd", description="Unified graph denoising: structure filtering plus feature "
                                             "reconstruction, with noise injection and evaluation tools.")
    parser.add_argument("--version", action="version", version=f"ugd {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = command("gen-sbm", cmd_gen_sbm, "generate a stochastic block model graph")
    p.add_argument("--n", type=int, default=400, help="number of nodes")
    p.add_argument("--k", type=int, default=4, help="number of classes")
    p.add_argument("--p-in", type=float, default=0.05, help="intra-block edge probability")
    p.add_argument("--p-out", type=float, default=0.005, help="inter-block edge probability")
    p.add_argument("--sep", type=float, default=1.0, help="distance of class centers from the origin")
    p.add_argument("--dim", type=int, default=None, help="feature dimension (None means k)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output graph directory")

    p = command("inject", cmd_inject, "add structure and feature noise to a graph")
    p.add_argument("--graph", required=True, help="input graph directory")
    p.add_argument("--feature-ratio", type=float, default=0.0, help="fraction of nodes whose features are replaced")
    p.add_argument("--feature-mode", choices=FEATURE_MODES, default="gaussian-replace", help="feature noise model")
    p.add_argument("--sigma", type=float, default=None,
                   help="gaussian noise std (None means the per-dimension std of the input)")
    p.add_argument("--structure-ratio", type=float, default=0.0, help="injected edges as a fraction of |E|")
    p.add_argument("--mode", choices=STRUCTURE_MODES, default="cross-class", help="edge injection model")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output graph directory")

    p = command("weights", cmd_weights, "write the SD-step weight of every edge as u<TAB>v<TAB>weight")
    p.add_argument("--graph", required=True, help="input graph directory")
    p.add_argument("--out", required=True, help="output TSV file")

    p = command("fd", cmd_fd, "run one FD-step and write the denoised features")
    p.add_argument("--graph", required=True, help="input graph directory")
    _add_flags(p, "auto-encoder", FD_FLAGS, DenoiseConfig())
    p.add_argument("--seed", type=int, default=0, help="initialization seed")
    p.add_argument("--out", required=True, help="output feature file")

    def denoise_inputs(p):
        p.add_argument("--graph", required=True, help="input graph directory")
        p.add_argument("--config", default=None, help="JSON file mirroring the denoise config; flags override it")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None, help="use a preset's denoise config")
        _add_flags(p, "denoise config", DENOISE_FLAGS, DenoiseConfig())

    def classifier_inputs(p, seeds_default):
        p.add_argument("--cls-config", default=None, help="JSON file mirroring the classifier config")
        p.add_argument("--seeds", type=int, default=None,
                       help=f"run classifier seeds 0..N-1 (default: {seeds_default})")
        _add_flags(p, "classifier config", CLASSIFIER_FLAGS, ClassifierConfig())

    p = command("denoise", cmd_denoise, "denoise a graph and write the result with a run report")
    denoise_inputs(p)
    p.add_argument("--out", required=True, help="output graph directory")

    p = command("eval", cmd_eval, "train the downstream classifier and report accuracy")
    p.add_argument("--graph", required=True, help="input graph directory")
    classifier_inputs(p, len(ClassifierConfig().seeds))
    p.add_argument("--out", required=True, help="output directory for results.csv")

    p = command("ablate", cmd_ablate, "run ablation variants on one graph and compare accuracy")
    denoise_inputs(p)
    classifier_inputs(p, len(ClassifierConfig().seeds))
    p.add_argument("--variants", default=",".join(BENCH_VARIANTS), help="comma-separated variants")
    p.add_argument("--out", required=True, help="output directory")

    p = command("bench", cmd_bench, "inject, denoise and classify on a synthetic benchmark")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper-synthetic", help="benchmark preset")
    p.add_argument("--config", default=None, help="JSON preset file (overrides --preset)")
    p.add_argument("--feature-ratio", type=float, default=None, help="override the preset's feature noise")
    p.add_argument("--structure-ratio", type=float, default=None, help="override the preset's structure noise")
    p.add_argument("--variants", default=",".join(BENCH_VARIANTS), help="comma-separated variants")
    p.add_argument("--sweep", action="store_true", help="also sweep the feature-noise ratio (writes sweep.csv)")
    p.add_argument("--workers", type=int, default=None, help="seed-level worker threads (default: UGD_THREADS)")
    _add_flags(p, "denoise config (defaults shown are library defaults; the preset's values apply)",
               BENCH_FLAGS, DenoiseConfig())
    classifier_inputs(p, len(ClassifierConfig().seeds))
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _threads() -> int:
    raw = os.environ.get("UGD_THREADS", "1")
    if not raw.isdigit() or int(raw) < 1:
        raise ConfigError(f"UGD_THREADS must be a positive integer, got {raw!r}")
    return int(raw)


def _fail(kind: str, exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"ugd: error: {kind}: {message}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("ugd: a command is required (see ugd --help)")
        threads = _threads()
        if getattr(args, "workers", "unset") is None:
            args.workers = threads
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        # Overflow surfaces as NumericalError from the finite-value guards, not as warnings.
        with np.errstate(over="ignore", invalid="ignore"):
            args.func(args, Manifest(args.command, argv))
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except NumericalError as exc:
        return _fail("numerical", exc, EXIT_NUMERIC)
    except (OSError, GraphError) as exc:
        return _fail("io", exc, EXIT_IO)
    except ValueError as exc:
        return _fail("config", exc, EXIT_USAGE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
