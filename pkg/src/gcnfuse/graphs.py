"""Graph and dataset containers plus ingestion, synthesis, and batch sampling.

Graphs are undirected, stored without self-loops (the propagation rule adds
the vertex itself to its own neighborhood), and carry one dense feature row
per vertex. Datasets are ordered and immutable so that every sampling or
evaluation step is replayable from a seed.

Dataset files are line-delimited JSON: an optional header record declaring
``feature_dim`` (and ``vocab`` for categorical features), followed by one
record per graph with fields ``n``, ``edges``, ``x`` (dense rows) or ``atom``
(categorical indices, expanded to one-hot on load), and optional ``y``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, InvalidSpecError


def _frozen_array(values, dtype=np.float64, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise DatasetFormatError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Graph:
    """Undirected graph with per-vertex feature rows and an optional target.

    Edges are canonicalized to ``(min(u, v), max(u, v))`` and deduplicated at
    construction; self-loops are rejected because degree normalization counts
    the vertex itself exactly once.
    """

    num_vertices: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray
    target: float | None = None

    def __post_init__(self):
        if self.num_vertices < 1:
            raise DatasetFormatError("graph must have at least one vertex")
        seen = set()
        canon = []
        for e in self.edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise DatasetFormatError(f"self-loop on vertex {u} is not stored explicitly")
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise DatasetFormatError(
                    f"edge ({u}, {v}) references a vertex outside 0..{self.num_vertices - 1}"
                )
            key = (min(u, v), max(u, v))
            if key in seen:
                raise DatasetFormatError(f"duplicate edge ({u}, {v})")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "edges", tuple(canon))
        feats = _frozen_array(self.features, ndim=2)
        if feats.shape[0] != self.num_vertices:
            raise DatasetFormatError(
                f"features have {feats.shape[0]} rows for {self.num_vertices} vertices"
            )
        object.__setattr__(self, "features", feats)
        if self.target is not None:
            object.__setattr__(self, "target", float(self.target))

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        """Vertex degrees counting the vertex itself, so an isolated vertex has degree 1."""
        deg = np.ones(self.num_vertices, dtype=np.float64)
        for u, v in self.edges:
            deg[u] += 1.0
            deg[v] += 1.0
        return deg

    def same_structure(self, other: "Graph") -> bool:
        return self.num_vertices == other.num_vertices and self.edges == other.edges


@dataclass(frozen=True)
class ScalarGraph:
    """One real value per vertex of a shared graph structure.

    A single neuron's response to one input graph: the structure is borrowed
    from the input, the values are that neuron's per-vertex activations.
    """

    graph: Graph
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen_array(self.values, ndim=1)
        if vals.shape[0] != self.graph.num_vertices:
            raise DatasetFormatError(
                f"{vals.shape[0]} values for {self.graph.num_vertices} vertices"
            )
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of graphs with a common feature_dim."""

    graphs: tuple[Graph, ...]
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for i, g in enumerate(self.graphs):
            if g.feature_dim != self.feature_dim:
                raise DatasetFormatError(
                    f"graph {i} has feature_dim {g.feature_dim}, dataset declares {self.feature_dim}"
                )

    def __len__(self) -> int:
        return len(self.graphs)


@dataclass(frozen=True)
class FusionBatch:
    """The shared set of input graphs both models see during fusion.

    Both networks are evaluated on the same instance, so vertex k of graph g
    refers to the same vertex on either side and activation graphs never need
    re-matching.
    """

    graphs: tuple[Graph, ...]

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if not self.graphs:
            raise InvalidSpecError("a fusion batch needs at least one graph")

    @property
    def sample_size(self) -> int:
        return len(self.graphs)


def load_dataset(path: str | Path) -> Dataset:
    """Read a line-delimited JSON dataset file.

    Raises DatasetFormatError with the offending record index on parse or
    invariant failures; an empty file is an error.
    """
    path = Path(path)
    feature_dim: int | None = None
    vocab: int | None = None
    graphs: list[Graph] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            if "n" not in rec:
                # header record
                if "feature_dim" in rec:
                    feature_dim = int(rec["feature_dim"])
                if "vocab" in rec:
                    vocab = int(rec["vocab"])
                continue
            try:
                graphs.append(_parse_graph_record(rec, feature_dim, vocab))
            except DatasetFormatError as exc:
                raise DatasetFormatError(f"record {lineno}: {exc}") from exc
    if not graphs:
        raise DatasetFormatError(f"empty dataset: {path}")
    if feature_dim is None:
        feature_dim = graphs[0].feature_dim
    return Dataset(graphs=tuple(graphs), feature_dim=feature_dim)


def _parse_graph_record(rec: dict, feature_dim: int | None, vocab: int | None) -> Graph:
    n = int(rec["n"])
    edges = tuple((int(u), int(v)) for u, v in rec.get("edges", []))
    if "x" in rec:
        features = np.array(rec["x"], dtype=np.float64)
        if features.ndim != 2:
            raise DatasetFormatError("'x' must be a list of feature rows")
    elif "atom" in rec:
        if vocab is None:
            raise DatasetFormatError("'atom' record requires a header declaring 'vocab'")
        idx = np.array(rec["atom"], dtype=np.int64)
        if idx.ndim != 1 or idx.shape[0] != n:
            raise DatasetFormatError("'atom' must list one index per vertex")
        if np.any((idx < 0) | (idx >= vocab)):
            raise DatasetFormatError(f"atom index out of vocabulary range 0..{vocab - 1}")
        features = np.zeros((n, vocab), dtype=np.float64)
        features[np.arange(n), idx] = 1.0
    else:
        raise DatasetFormatError("record has neither 'x' nor 'atom' features")
    if feature_dim is not None and features.shape[1] != feature_dim:
        raise DatasetFormatError(
            f"feature_dim {features.shape[1]} does not match header {feature_dim}"
        )
    target = rec.get("y")
    return Graph(num_vertices=n, edges=edges, features=features, target=target)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Serialize a dataset back to line-delimited JSON (dense features)."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(json.dumps({"feature_dim": dataset.feature_dim}) + "\n")
        for g in dataset.graphs:
            rec = {
                "n": g.num_vertices,
                "edges": [[u, v] for u, v in g.edges],
                "x": g.features.tolist(),
            }
            if g.target is not None:
                rec["y"] = g.target
            fh.write(json.dumps(rec) + "\n")


def sample_batch(dataset: Dataset, sample_size: int, seed: int) -> FusionBatch:
    """Draw ``sample_size`` graphs without replacement, deterministically per seed."""
    if not 1 <= sample_size <= len(dataset):
        raise InvalidSpecError(
            f"sample_size {sample_size} out of range 1..{len(dataset)}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(dataset), size=sample_size, replace=False)
    return FusionBatch(graphs=tuple(dataset.graphs[i] for i in idx))


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for synthetic graph-regression datasets.

    ``edge_density`` is the independent inclusion probability of each vertex
    pair; 1.0 yields complete graphs. Targets follow ``target_rule``:
    "linear_mean" labels each graph with a fixed random linear function of its
    mean feature vector, "none" leaves targets absent.
    """

    count: int
    min_vertices: int
    max_vertices: int
    edge_density: float
    feature_dim: int
    target_rule: str = "linear_mean"
    onehot: bool = False

    def __post_init__(self):
        if self.count < 1:
            raise InvalidSpecError("count must be >= 1")
        if not 1 <= self.min_vertices <= self.max_vertices:
            raise InvalidSpecError("need 1 <= min_vertices <= max_vertices")
        if not 0.0 <= self.edge_density <= 1.0:
            raise InvalidSpecError(
                f"edge_density {self.edge_density} must lie in [0, 1] (1.0 = complete graph)"
            )
        if self.feature_dim < 1:
            raise InvalidSpecError("feature_dim must be >= 1")
        if self.target_rule not in ("linear_mean", "none"):
            raise InvalidSpecError(f"unknown target_rule {self.target_rule!r}")


def synthesize_dataset(spec: GeneratorSpec, seed: int) -> Dataset:
    """Generate a small random dataset; identical spec+seed give identical data."""
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal(spec.feature_dim)
    graphs = []
    for _ in range(spec.count):
        n = int(rng.integers(spec.min_vertices, spec.max_vertices + 1))
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                if rng.random() < spec.edge_density:
                    edges.append((u, v))
        if spec.onehot:
            idx = rng.integers(0, spec.feature_dim, size=n)
            features = np.zeros((n, spec.feature_dim))
            features[np.arange(n), idx] = 1.0
        else:
            features = rng.standard_normal((n, spec.feature_dim))
        target = None
        if spec.target_rule == "linear_mean":
            target = float(weights @ features.mean(axis=0))
        graphs.append(Graph(num_vertices=n, edges=tuple(edges), features=features, target=target))
    return Dataset(graphs=tuple(graphs), feature_dim=spec.feature_dim)
