"""On-disk graph format.

A graph directory holds up to four files:

``graph.edges``
    UTF-8 text, one ``u<TAB>v`` pair per line (canonical ``u < v``, sorted).
``graph.features``
    Binary: magic ``b"UGDF"``, u32 version (1), u64 n, u64 d, then ``n*d``
    little-endian float32 values in row-major order.
``graph.labels``
    Text, one integer class id per line.
``graph.masks``
    Text, one of ``train``, ``val``, ``test`` or ``none`` per line.

Features are stored as float32, so a float64 matrix is rounded on write.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .graph import MASK_NAMES, Graph, GraphError, build_graph

FEATURE_MAGIC = b"UGDF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

EDGES_FILE = "graph.edges"
FEATURES_FILE = "graph.features"
LABELS_FILE = "graph.labels"
MASKS_FILE = "graph.masks"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def encode_features(X: np.ndarray) -> bytes:
    X = np.ascontiguousarray(X, dtype="<f4")
    n, d = X.shape
    return _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d) + X.tobytes()


def decode_features(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise GraphError("feature file truncated")
    magic, version, n, d = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise GraphError(f"bad feature magic {magic!r}")
    if version != FEATURE_VERSION:
        raise GraphError(f"unsupported feature version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(data) != expected:
        raise GraphError(f"feature file has {len(data)} bytes, expected {expected}")
    X = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n, d)
    return X.astype(np.float64)


def write_features(path, X: np.ndarray) -> None:
    atomic_write_bytes(path, encode_features(X))


def read_features(path) -> np.ndarray:
    return decode_features(Path(path).read_bytes())


def write_edges(path, edges: np.ndarray) -> None:
    atomic_write_text(path, "".join(f"{int(u)}\t{int(v)}\n" for u, v in edges))


def read_edges(path) -> list[tuple[int, int]]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'u<TAB>v'")
        pairs.append((int(parts[0]), int(parts[1])))
    return pairs


def write_graph(directory, g: Graph) -> list[str]:
    """Write ``g`` into ``directory`` and return the file names written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = [EDGES_FILE, FEATURES_FILE]
    write_edges(directory / EDGES_FILE, g.edges)
    write_features(directory / FEATURES_FILE, g.X)
    if g.labels is not None:
        atomic_write_text(directory / LABELS_FILE, "".join(f"{int(y)}\n" for y in g.labels))
        written.append(LABELS_FILE)
    if g.masks:
        names = np.full(g.n, "none", dtype=object)
        for name in MASK_NAMES:
            if name in g.masks:
                names[g.masks[name]] = name
        atomic_write_text(directory / MASKS_FILE, "".join(f"{s}\n" for s in names))
        written.append(MASKS_FILE)
    return written


def read_graph(directory) -> Graph:
    directory = Path(directory)
    if not (directory / FEATURES_FILE).exists():
        raise FileNotFoundError(f"{directory / FEATURES_FILE} not found")
    X = read_features(directory / FEATURES_FILE)
    edges_path = directory / EDGES_FILE
    edges = read_edges(edges_path) if edges_path.exists() else []
    labels = None
    if (directory / LABELS_FILE).exists():
        lines = (directory / LABELS_FILE).read_text(encoding="utf-8").split()
        labels = np.array([int(s) for s in lines], dtype=np.int64)
    masks = None
    if (directory / MASKS_FILE).exists():
        tags = (directory / MASKS_FILE).read_text(encoding="utf-8").split()
        bad = set(tags) - set(MASK_NAMES) - {"none"}
        if bad:
            raise GraphError(f"unknown mask tags: {sorted(bad)}")
        tags = np.array(tags)
        masks = {name: tags == name for name in MASK_NAMES}
    return build_graph(edges, X, labels, masks)


def graph_files(directory) -> list[Path]:
    directory = Path(directory)
    return [directory / f for f in (EDGES_FILE, FEATURES_FILE, LABELS_FILE, MASKS_FILE)
            if (directory / f).exists()]
