"""Inference-only graph convolutional networks and their plain-MLP special case.

A model is an ordered list of layers: an optional embedding (linear, no
bias), graph-convolution layers with optional batch norm, a mean readout
that collapses vertex states to one hidden vector, and dense layers ending
in a scalar regression head. An MLP is simply a model with no
graph-convolution layers and no readout, evaluated on single-vertex,
edgeless inputs.

The graph-convolution update for vertex i is

    h_i' = ReLU(BN?(W @ (1/sqrt(deg_i)) * sum_{j in N_i + {i}} (1/sqrt(deg_j)) h_j + b))

with degrees counting the vertex itself. Batch norm always runs in
inference mode from stored running statistics; nothing here trains.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DimensionMismatchError, InvalidSpecError, ModelFormatError
from .graphs import Dataset, FusionBatch, Graph, ScalarGraph

PRE_BN = "pre_bn"
POST_BN = "post_bn"
CAPTURE_POINTS = (PRE_BN, POST_BN)


def _array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ModelFormatError(f"expected {ndim}-d parameter array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DenseParams:
    """Affine map parameters: weight is (out_dim, in_dim), bias optional."""

    weight: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "weight", _array(self.weight, 2))
        if self.bias is not None:
            b = _array(self.bias, 1)
            if b.shape[0] != self.weight.shape[0]:
                raise DimensionMismatchError(
                    f"bias length {b.shape[0]} != out_dim {self.weight.shape[0]}"
                )
            object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-mode batch norm: x -> gamma * (x - mean) / sqrt(var + eps) + shift."""

    gamma: np.ndarray
    beta_shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta_shift", "running_mean", "running_var"):
            object.__setattr__(self, name, _array(getattr(self, name), 1))
        dims = {getattr(self, n).shape[0] for n in ("gamma", "beta_shift", "running_mean", "running_var")}
        if len(dims) != 1:
            raise DimensionMismatchError(f"batch-norm vectors disagree on dim: {dims}")
        if np.any(self.running_var < 0):
            raise ModelFormatError("running_var entries must be >= 0")
        if self.epsilon < 0:
            raise ModelFormatError("batch-norm epsilon must be >= 0")
        if np.any(self.running_var + self.epsilon <= 0):
            raise ModelFormatError("running_var + epsilon must be > 0 everywhere")

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.gamma * (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon) + self.beta_shift


@dataclass(frozen=True)
class Embedding:
    """Bias-free linear map applied per vertex before any graph convolution."""

    params: DenseParams

    def __post_init__(self):
        if self.params.bias is not None:
            raise ModelFormatError("embedding layers carry no bias")


@dataclass(frozen=True)
class GraphConv:
    """Degree-normalized neighborhood aggregation, shared affine map, BN?, ReLU."""

    params: DenseParams
    batch_norm: BatchNormParams | None = None

    def __post_init__(self):
        if self.batch_norm is not None and self.batch_norm.dim != self.params.out_dim:
            raise DimensionMismatchError(
                f"batch-norm dim {self.batch_norm.dim} != out_dim {self.params.out_dim}"
            )


@dataclass(frozen=True)
class MeanReadout:
    """Average hidden vectors over graph vertices; no parameters."""


@dataclass(frozen=True)
class Dense:
    """Affine map with optional batch norm; activation 'relu' or 'none'."""

    params: DenseParams
    batch_norm: BatchNormParams | None = None
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "none"):
            raise ModelFormatError(f"unknown activation {self.activation!r}")
        if self.batch_norm is not None and self.batch_norm.dim != self.params.out_dim:
            raise DimensionMismatchError(
                f"batch-norm dim {self.batch_norm.dim} != out_dim {self.params.out_dim}"
            )


Layer = Union[Embedding, GraphConv, MeanReadout, Dense]

_PARAMETERIZED = (Embedding, GraphConv, Dense)


@dataclass(frozen=True)
class GcnModel:
    """Ordered layer list plus light metadata; immutable once constructed."""

    layers: tuple[Layer, ...]
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ModelFormatError("model has no layers")
        readouts = [i for i, l in enumerate(layers) if isinstance(l, MeanReadout)]
        if len(readouts) > 1:
            raise ModelFormatError("at most one mean-readout layer is allowed")
        if readouts:
            r = readouts[0]
            for i, l in enumerate(layers):
                if isinstance(l, GraphConv) and i > r:
                    raise ModelFormatError(f"graph-conv layer {i} appears after the readout")
                if isinstance(l, Dense) and i < r:
                    raise ModelFormatError(f"dense layer {i} appears before the readout")
        for i, l in enumerate(layers):
            if isinstance(l, Embedding) and i != 0:
                raise ModelFormatError(f"embedding must be the first layer, found at {i}")
        dim = None
        for i, l in enumerate(layers):
            if isinstance(l, _PARAMETERIZED):
                if dim is not None and l.params.in_dim != dim:
                    raise ModelFormatError(
                        f"layer {i}: in_dim {l.params.in_dim} does not match previous out_dim {dim}"
                    )
                dim = l.params.out_dim

    @property
    def input_dim(self) -> int:
        for l in self.layers:
            if isinstance(l, _PARAMETERIZED):
                return l.params.in_dim
        raise ModelFormatError("model has no parameterized layers")

    def parameterized_indices(self) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.layers) if isinstance(l, _PARAMETERIZED))

    @property
    def is_mlp(self) -> bool:
        return not any(isinstance(l, (GraphConv, MeanReadout)) for l in self.layers)

    def same_architecture(self, other: "GcnModel") -> bool:
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if type(a) is not type(b):
                return False
            if isinstance(a, _PARAMETERIZED):
                if a.params.weight.shape != b.params.weight.shape:
                    return False
                if (a.params.bias is None) != (b.params.bias is None):
                    return False
                bn_a = getattr(a, "batch_norm", None)
                bn_b = getattr(b, "batch_norm", None)
                if (bn_a is None) != (bn_b is None):
                    return False
        return True

    def summary(self) -> str:
        parts = []
        for l in self.layers:
            if isinstance(l, Embedding):
                parts.append(f"emb({l.params.in_dim}->{l.params.out_dim})")
            elif isinstance(l, GraphConv):
                bn = "+bn" if l.batch_norm is not None else ""
                parts.append(f"gc({l.params.in_dim}->{l.params.out_dim}{bn})")
            elif isinstance(l, MeanReadout):
                parts.append("mean")
            else:
                bn = "+bn" if l.batch_norm is not None else ""
                parts.append(f"dense({l.params.in_dim}->{l.params.out_dim}{bn},{l.activation})")
        return " ".join(parts)


@dataclass(frozen=True)
class ActivationSample:
    """One layer's pre-activation capture over a fusion batch, neuron-major.

    Layers evaluated on per-vertex state store one array of shape
    (num_vertices, width) per input graph; layers after the readout store a
    single (sample_size, width) array of per-graph scalars.
    """

    layer_index: int
    capture_point: str
    batch: FusionBatch
    graph_values: tuple[np.ndarray, ...] | None = None
    readout_values: np.ndarray | None = None

    def __post_init__(self):
        if (self.graph_values is None) == (self.readout_values is None):
            raise InvalidSpecError("exactly one of graph_values/readout_values must be set")

    @property
    def is_graph_valued(self) -> bool:
        return self.graph_values is not None

    @property
    def width(self) -> int:
        if self.graph_values is not None:
            return self.graph_values[0].shape[1]
        return self.readout_values.shape[1]

    def neuron_scalar_graphs(self, neuron: int) -> tuple[ScalarGraph, ...]:
        """Scalar activation graphs of one neuron, one per batch graph."""
        if self.graph_values is None:
            raise InvalidSpecError("layer is post-readout; use neuron_readout")
        return tuple(
            ScalarGraph(graph=g, values=vals[:, neuron])
            for g, vals in zip(self.batch.graphs, self.graph_values)
        )

    def neuron_readout(self, neuron: int) -> np.ndarray:
        if self.readout_values is None:
            raise InvalidSpecError("layer is graph-valued; use neuron_scalar_graphs")
        return self.readout_values[:, neuron]


def normalized_adjacency(graph: Graph) -> np.ndarray:
    """Symmetric-degree-normalized adjacency including self-connections."""
    n = graph.num_vertices
    deg = graph.degrees()
    inv_sqrt = 1.0 / np.sqrt(deg)
    A = np.zeros((n, n))
    A[np.arange(n), np.arange(n)] = inv_sqrt * inv_sqrt
    for u, v in graph.edges:
        A[u, v] = inv_sqrt[u] * inv_sqrt[v]
        A[v, u] = inv_sqrt[v] * inv_sqrt[u]
    return A


def _evaluate(model: GcnModel, graph: Graph, capture_point: str | None):
    """Shared forward pass; optionally records per-layer pre-activations.

    Returns (prediction, captures) where captures maps parameterized layer
    index to the captured array ((n, width) before the readout, (width,)
    after). forward() and forward_with_capture() both run through here so
    their predictions are bitwise identical.
    """
    if graph.feature_dim != model.input_dim:
        raise DimensionMismatchError(
            f"graph feature_dim {graph.feature_dim} != model input dim {model.input_dim}"
        )
    h = graph.features
    per_vertex = True
    adj = None
    captures: dict[int, np.ndarray] = {}

    def record(i, z):
        if capture_point is not None:
            captures[i] = np.array(z)

    for i, layer in enumerate(model.layers):
        if isinstance(layer, Embedding):
            z = h @ layer.params.weight.T
            record(i, z)
            h = z
        elif isinstance(layer, GraphConv):
            if not per_vertex:
                raise ModelFormatError("graph-conv layer after readout")
            if adj is None:
                adj = normalized_adjacency(graph)
            z = (adj @ h) @ layer.params.weight.T
            if layer.params.bias is not None:
                z = z + layer.params.bias
            z = _capture_bn(record, i, z, layer.batch_norm, capture_point)
            h = np.maximum(z, 0.0)
        elif isinstance(layer, MeanReadout):
            h = h.mean(axis=0)
            per_vertex = False
        elif isinstance(layer, Dense):
            if per_vertex:
                z = h @ layer.params.weight.T
            else:
                z = layer.params.weight @ h
            if layer.params.bias is not None:
                z = z + layer.params.bias
            z = _capture_bn(record, i, z, layer.batch_norm, capture_point)
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        else:
            raise ModelFormatError(f"unknown layer type {type(layer).__name__}")
    out = np.asarray(h)
    if out.size != 1:
        raise DimensionMismatchError(
            f"model output has {out.size} entries; the regression head must be scalar"
        )
    return float(out.reshape(-1)[0]), captures


def _capture_bn(record, index, z, bn, capture_point):
    """Record z before or after BN per capture_point, then return the post-BN value."""
    if bn is None:
        record(index, z)
        return z
    if capture_point == PRE_BN:
        record(index, z)
        z = bn.apply(z)
    else:
        z = bn.apply(z)
        record(index, z)
    return z


def forward(model: GcnModel, graph: Graph) -> float:
    """Evaluate the model on one graph and return the scalar prediction."""
    pred, _ = _evaluate(model, graph, capture_point=None)
    return pred


def forward_with_capture(
    model: GcnModel, batch: FusionBatch, capture_point: str = POST_BN
) -> tuple[np.ndarray, dict[int, ActivationSample]]:
    """Evaluate a batch and capture each parameterized layer's pre-activations.

    capture_point selects the value recorded for layers followed by batch
    norm: the affine output before BN ("pre_bn") or after BN ("post_bn").
    Layers without BN capture the affine output either way.
    """
    if capture_point not in CAPTURE_POINTS:
        raise InvalidSpecError(f"capture_point must be one of {CAPTURE_POINTS}")
    predictions = np.empty(batch.sample_size)
    raw: dict[int, list[np.ndarray]] = {i: [] for i in model.parameterized_indices()}
    for k, graph in enumerate(batch.graphs):
        pred, captures = _evaluate(model, graph, capture_point)
        predictions[k] = pred
        for i, z in captures.items():
            raw[i].append(z)
    samples: dict[int, ActivationSample] = {}
    for i, values in raw.items():
        if values[0].ndim == 2:
            samples[i] = ActivationSample(
                layer_index=i, capture_point=capture_point, batch=batch,
                graph_values=tuple(values),
            )
        else:
            samples[i] = ActivationSample(
                layer_index=i, capture_point=capture_point, batch=batch,
                readout_values=np.stack(values),
            )
    return predictions, samples


def evaluate_mae(model: GcnModel, dataset: Dataset) -> float:
    """Mean absolute error of the model's predictions against dataset targets."""
    errors = []
    for i, g in enumerate(dataset.graphs):
        if g.target is None:
            raise InvalidSpecError(f"graph {i} has no target; cannot evaluate MAE")
        errors.append(abs(forward(model, g) - g.target))
    return float(np.mean(errors))


def label_with_model(model: GcnModel, dataset: Dataset) -> Dataset:
    """Relabel every graph's target with the model's own prediction (teacher labels)."""
    graphs = tuple(
        replace(g, target=forward(model, g)) for g in dataset.graphs
    )
    return Dataset(graphs=graphs, feature_dim=dataset.feature_dim)


def permute_model(model: GcnModel, permutations) -> GcnModel:
    """Permute hidden neurons; the result is functionally identical to the input.

    ``permutations`` holds one index array per hidden parameterized layer
    (every parameterized layer except the last, whose outputs stay in
    place). Row k of the permuted layer is row perm[k] of the original; the
    following layer's columns, its bias, and any BN vectors move along.
    """
    param_idx = model.parameterized_indices()
    hidden = param_idx[:-1]
    if len(permutations) != len(hidden):
        raise InvalidSpecError(
            f"need {len(hidden)} permutations (one per hidden layer), got {len(permutations)}"
        )
    perms: dict[int, np.ndarray] = {}
    for layer_i, perm in zip(hidden, permutations):
        p = np.asarray(perm, dtype=np.int64)
        width = model.layers[layer_i].params.out_dim
        if sorted(p.tolist()) != list(range(width)):
            raise InvalidSpecError(
                f"layer {layer_i}: permutation is not a bijection on 0..{width - 1}"
            )
        perms[layer_i] = p

    new_layers: list[Layer] = []
    prev_perm: np.ndarray | None = None
    for i, layer in enumerate(model.layers):
        if not isinstance(layer, _PARAMETERIZED):
            new_layers.append(layer)
            continue
        row_perm = perms.get(i)
        W = layer.params.weight
        if prev_perm is not None:
            W = W[:, prev_perm]
        if row_perm is not None:
            W = W[row_perm, :]
        bias = layer.params.bias
        if bias is not None and row_perm is not None:
            bias = bias[row_perm]
        params = DenseParams(weight=W, bias=bias)
        bn = getattr(layer, "batch_norm", None)
        if bn is not None and row_perm is not None:
            bn = BatchNormParams(
                gamma=bn.gamma[row_perm], beta_shift=bn.beta_shift[row_perm],
                running_mean=bn.running_mean[row_perm], running_var=bn.running_var[row_perm],
                epsilon=bn.epsilon,
            )
        if isinstance(layer, Embedding):
            new_layers.append(Embedding(params=params))
        elif isinstance(layer, GraphConv):
            new_layers.append(GraphConv(params=params, batch_norm=bn))
        else:
            new_layers.append(Dense(params=params, batch_norm=bn, activation=layer.activation))
        prev_perm = row_perm if row_perm is not None else None
    return GcnModel(layers=tuple(new_layers), name=model.name + "+perm", seed=model.seed)


def perturb_model(model: GcnModel, scale: float, seed: int) -> GcnModel:
    """Add Gaussian noise to weights and biases, sized relative to each array.

    Noise std is scale times the array's own std (or its mean magnitude
    when the std is zero), so scale=0.01 means roughly 1% perturbation per
    layer. Batch-norm statistics are left untouched.
    """
    if scale < 0:
        raise InvalidSpecError("noise scale must be >= 0")
    rng = np.random.default_rng(seed)

    def noisy(arr: np.ndarray) -> np.ndarray:
        base = float(np.std(arr))
        if base == 0.0:
            base = float(np.mean(np.abs(arr)))
        return arr + scale * base * rng.standard_normal(arr.shape)

    new_layers: list[Layer] = []
    for layer in model.layers:
        if not isinstance(layer, _PARAMETERIZED):
            new_layers.append(layer)
            continue
        params = DenseParams(
            weight=noisy(layer.params.weight),
            bias=None if layer.params.bias is None else noisy(layer.params.bias),
        )
        bn = getattr(layer, "batch_norm", None)
        new_layers.append(_rebuild(layer, params, bn))
    return GcnModel(layers=tuple(new_layers), name=model.name + "+noise", seed=model.seed)


def _rebuild(layer, params: DenseParams, bn: BatchNormParams | None) -> Layer:
    if isinstance(layer, Embedding):
        return Embedding(params=params)
    if isinstance(layer, GraphConv):
        return GraphConv(params=params, batch_norm=bn)
    return Dense(params=params, batch_norm=bn, activation=layer.activation)


@dataclass(frozen=True)
class ArchSpec:
    """Architecture for random model generation.

    gc_layers == 0 builds an MLP (no graph convolutions, no readout) meant
    for single-vertex inputs. With batch_norm=True, BN attaches to every
    hidden layer (graph-conv layers, or hidden dense layers in MLP mode);
    the scalar head never has BN or an activation.
    """

    feature_dim: int
    hidden_dim: int
    gc_layers: int
    dense_layers: int
    batch_norm: bool = False

    def __post_init__(self):
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise InvalidSpecError("feature_dim and hidden_dim must be >= 1")
        if self.gc_layers < 0 or self.dense_layers < 1:
            raise InvalidSpecError("need gc_layers >= 0 and dense_layers >= 1")

    @property
    def is_mlp(self) -> bool:
        return self.gc_layers == 0


def random_model(spec: ArchSpec, seed: int, name: str = "") -> GcnModel:
    """Deterministically initialize a model from an architecture spec and seed."""
    rng = np.random.default_rng(seed)

    def dense_params(out_dim, in_dim, bias=True):
        W = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
        b = rng.standard_normal(out_dim) * 0.1 if bias else None
        return DenseParams(weight=W, bias=b)

    def bn_params(dim):
        return BatchNormParams(
            gamma=rng.uniform(0.5, 1.5, dim),
            beta_shift=rng.standard_normal(dim) * 0.5,
            running_mean=rng.standard_normal(dim) * 0.5,
            running_var=rng.uniform(0.5, 1.5, dim),
            epsilon=1e-5,
        )

    layers: list[Layer] = [Embedding(params=dense_params(spec.hidden_dim, spec.feature_dim, bias=False))]
    for _ in range(spec.gc_layers):
        layers.append(GraphConv(
            params=dense_params(spec.hidden_dim, spec.hidden_dim),
            batch_norm=bn_params(spec.hidden_dim) if spec.batch_norm else None,
        ))
    if spec.gc_layers > 0:
        layers.append(MeanReadout())
    for d in range(spec.dense_layers):
        last = d == spec.dense_layers - 1
        out_dim = 1 if last else spec.hidden_dim
        use_bn = spec.batch_norm and spec.is_mlp and not last
        layers.append(Dense(
            params=dense_params(out_dim, spec.hidden_dim),
            batch_norm=bn_params(out_dim) if use_bn else None,
            activation="none" if last else "relu",
        ))
    return GcnModel(layers=tuple(layers), name=name, seed=seed)


_SCHEMA = "gcnfuse-model/1"


def _bn_to_json(bn: BatchNormParams | None):
    if bn is None:
        return None
    return {
        "gamma": bn.gamma.tolist(),
        "beta_shift": bn.beta_shift.tolist(),
        "running_mean": bn.running_mean.tolist(),
        "running_var": bn.running_var.tolist(),
        "epsilon": bn.epsilon,
    }


def _bn_from_json(obj) -> BatchNormParams | None:
    if obj is None:
        return None
    return BatchNormParams(
        gamma=obj["gamma"], beta_shift=obj["beta_shift"],
        running_mean=obj["running_mean"], running_var=obj["running_var"],
        epsilon=obj["epsilon"],
    )


def save_model(model: GcnModel, path: str | Path) -> None:
    """Write the model to a JSON document; load_model(save_model(m)) == m exactly."""
    layers = []
    for layer in model.layers:
        if isinstance(layer, Embedding):
            layers.append({"kind": "embedding", "weight": layer.params.weight.tolist()})
        elif isinstance(layer, GraphConv):
            layers.append({
                "kind": "graph_conv",
                "weight": layer.params.weight.tolist(),
                "bias": None if layer.params.bias is None else layer.params.bias.tolist(),
                "batch_norm": _bn_to_json(layer.batch_norm),
            })
        elif isinstance(layer, MeanReadout):
            layers.append({"kind": "mean_readout"})
        elif isinstance(layer, Dense):
            layers.append({
                "kind": "dense",
                "weight": layer.params.weight.tolist(),
                "bias": None if layer.params.bias is None else layer.params.bias.tolist(),
                "batch_norm": _bn_to_json(layer.batch_norm),
                "activation": layer.activation,
            })
    doc = {
        "schema": _SCHEMA,
        "name": model.name,
        "seed": model.seed,
        "summary": model.summary(),
        "layers": layers,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path: str | Path) -> GcnModel:
    """Read a model file, rejecting unknown schemas, layer kinds, or bad dims."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from exc
    if doc.get("schema") != _SCHEMA:
        raise ModelFormatError(f"{path}: unsupported schema {doc.get('schema')!r}")
    layers: list[Layer] = []
    for i, rec in enumerate(doc.get("layers", [])):
        kind = rec.get("kind")
        try:
            if kind == "embedding":
                layers.append(Embedding(params=DenseParams(weight=rec["weight"])))
            elif kind == "graph_conv":
                layers.append(GraphConv(
                    params=DenseParams(weight=rec["weight"], bias=rec.get("bias")),
                    batch_norm=_bn_from_json(rec.get("batch_norm")),
                ))
            elif kind == "mean_readout":
                layers.append(MeanReadout())
            elif kind == "dense":
                layers.append(Dense(
                    params=DenseParams(weight=rec["weight"], bias=rec.get("bias")),
                    batch_norm=_bn_from_json(rec.get("batch_norm")),
                    activation=rec.get("activation", "relu"),
                ))
            else:
                raise ModelFormatError(f"unknown layer kind {kind!r}")
        except (ModelFormatError, DimensionMismatchError, KeyError) as exc:
            raise ModelFormatError(f"{path}: layer {i}: {exc}") from exc
    try:
        return GcnModel(layers=tuple(layers), name=doc.get("name", ""), seed=doc.get("seed"))
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
