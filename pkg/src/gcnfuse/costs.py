"""Ground costs between neurons, assembled from activations or weights.

A neuron's activation evidence is a scalar graph per batch sample (the
neuron's value at every vertex of that input graph), or a plain scalar per
sample after the readout. Three pairwise costs compare two neurons on one
shared-structure sample:

- EFD: sqrt(lam * sum over vertices of the squared value difference). An
  edge-indexed variant (summing squared differences across edge endpoints
  instead) sits behind a flag.
- QE: lam * (edge term) + (1 - lam) * (vertex term), the edge term summing
  (a_i(u) - a_j(w))^2 over every undirected edge in both orientations so
  the cost stays symmetric in (i, j).
- FGW: the fused Gromov-Wasserstein distance between the two scalar
  graphs, features being the per-vertex values and structures either hop
  distances or the adjacency pattern.

build_cost_matrix sums the chosen pairwise cost over matched batch indices
(neuron i's graph k against neuron j's graph k). weight_cost_matrix skips
activations entirely and compares weight rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .errors import DimensionMismatchError, InvalidSpecError
from .graphs import Graph, ScalarGraph
from .models import ActivationSample, DenseParams
from .ot import FgwProblem, SinkhornParams, fgw_distance, uniform_weights

EFD = "efd"
QE = "qe"
FGW = "fgw"
WEIGHT = "weight"
COST_KINDS = (EFD, QE, FGW, WEIGHT)

STRUCTURE_SHORTEST_PATH = "shortest_path"
STRUCTURE_ADJACENCY = "adjacency"


@dataclass(frozen=True)
class FgwCostSpec:
    """How to pose the per-sample FGW instance.

    structure picks the intra-graph matrix (hop distances by default);
    inner=None solves each linearized step exactly.
    """

    structure: str = STRUCTURE_SHORTEST_PATH
    trade_off: float = 0.5
    inner: SinkhornParams | None = None
    outer_tol: float = 1e-7
    outer_max_iters: int = 100

    def __post_init__(self):
        if self.structure not in (STRUCTURE_SHORTEST_PATH, STRUCTURE_ADJACENCY):
            raise InvalidSpecError(f"unknown structure kind {self.structure!r}")
        if not 0.0 <= self.trade_off <= 1.0:
            raise InvalidSpecError("trade_off must be in [0, 1]")


@dataclass(frozen=True)
class CostSpec:
    """Which pairwise cost to use and its knobs.

    lam weighs EFD/QE terms. efd_edge_indexed switches EFD to the
    edge-endpoint sum. cross_samples switches the batch accumulation from
    matched indices to all sample pairs (experimentation only; it requires
    every batch graph to share one structure).
    """

    kind: str
    lam: float = 0.2
    fgw: FgwCostSpec | None = None
    efd_edge_indexed: bool = False
    cross_samples: bool = False

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise InvalidSpecError(f"cost kind must be one of {COST_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidSpecError(f"lam must be in [0, 1], got {self.lam}")
        if (self.fgw is not None) != (self.kind == FGW):
            raise InvalidSpecError("fgw settings must be present exactly when kind is fgw")


def _check_shared_structure(gi: ScalarGraph, gj: ScalarGraph) -> None:
    if not gi.graph.same_structure(gj.graph):
        raise DimensionMismatchError("scalar graphs do not share vertex/edge structure")


def pairwise_efd(gi: ScalarGraph, gj: ScalarGraph, lam: float, edge_indexed: bool = False) -> float:
    """Euclidean distance between the two value vectors, scaled by sqrt(lam)."""
    _check_shared_structure(gi, gj)
    if edge_indexed:
        total = 0.0
        for u, w in gi.graph.edges:
            total += (gi.values[u] - gj.values[w]) ** 2
            total += (gi.values[w] - gj.values[u]) ** 2
        return float(np.sqrt(lam * total))
    diff = gi.values - gj.values
    return float(np.sqrt(lam * np.sum(diff * diff)))


def pairwise_qe(gi: ScalarGraph, gj: ScalarGraph, lam: float) -> float:
    """Edge-smoothness term plus vertex term: lam * edges + (1 - lam) * vertices."""
    _check_shared_structure(gi, gj)
    edge_term = 0.0
    for u, w in gi.graph.edges:
        edge_term += (gi.values[u] - gj.values[w]) ** 2
        edge_term += (gi.values[w] - gj.values[u]) ** 2
    diff = gi.values - gj.values
    vertex_term = float(np.sum(diff * diff))
    return float(lam * edge_term + (1.0 - lam) * vertex_term)


def adjacency_structure(graph: Graph) -> np.ndarray:
    """0/1 adjacency matrix; zero diagonal."""
    n = graph.num_vertices
    A = np.zeros((n, n))
    for u, v in graph.edges:
        A[u, v] = 1.0
        A[v, u] = 1.0
    return A


def shortest_path_structure(graph: Graph) -> np.ndarray:
    """Hop-count distances; disconnected pairs get (longest finite path + 1)."""
    n = graph.num_vertices
    if n == 1:
        return np.zeros((1, 1))
    D = scipy.sparse.csgraph.shortest_path(
        scipy.sparse.csr_matrix(adjacency_structure(graph)), method="D", unweighted=True
    )
    finite = D[np.isfinite(D)]
    D[~np.isfinite(D)] = finite.max() + 1.0
    return D


def _structure_matrix(graph: Graph, kind: str) -> np.ndarray:
    if kind == STRUCTURE_ADJACENCY:
        return adjacency_structure(graph)
    return shortest_path_structure(graph)


def _fgw_value(values_a: np.ndarray, values_b: np.ndarray,
               struct_a: np.ndarray, struct_b: np.ndarray, fgw: FgwCostSpec) -> float:
    feature_cost = (values_a[:, None] - values_b[None, :]) ** 2
    problem = FgwProblem(
        structure_a=struct_a, structure_b=struct_b, feature_cost=feature_cost,
        trade_off=fgw.trade_off,
        alpha=uniform_weights(values_a.size), beta=uniform_weights(values_b.size),
        inner=fgw.inner, outer_tol=fgw.outer_tol, outer_max_iters=fgw.outer_max_iters,
    )
    distance, _ = fgw_distance(problem)
    return distance


def pairwise_fgw(gi: ScalarGraph, gj: ScalarGraph, spec: CostSpec) -> float:
    """FGW distance between two scalar graphs (solved as a general instance)."""
    if spec.kind != FGW or spec.fgw is None:
        raise InvalidSpecError("pairwise_fgw needs a CostSpec with kind fgw")
    _check_shared_structure(gi, gj)
    return _fgw_value(
        gi.values, gj.values,
        _structure_matrix(gi.graph, spec.fgw.structure),
        _structure_matrix(gj.graph, spec.fgw.structure),
        spec.fgw,
    )


def _same_batch(acts_a: ActivationSample, acts_b: ActivationSample) -> bool:
    if acts_a.batch is acts_b.batch or acts_a.batch.graphs is acts_b.batch.graphs:
        return True
    if acts_a.batch.sample_size != acts_b.batch.sample_size:
        return False
    for ga, gb in zip(acts_a.batch.graphs, acts_b.batch.graphs):
        if ga is gb:
            continue
        if not ga.same_structure(gb) or not np.array_equal(ga.features, gb.features):
            return False
    return True


def build_cost_matrix(acts_a: ActivationSample, acts_b: ActivationSample, spec: CostSpec) -> np.ndarray:
    """Neuron-by-neuron cost: entry (i, j) sums the pairwise cost over the batch.

    Post-readout layers hold one scalar per sample; there EFD and QE both
    degenerate to the summed squared scalar difference and FGW is rejected
    (there is no structure left to transport over).
    """
    if spec.kind == WEIGHT:
        raise InvalidSpecError("weight costs are built by weight_cost_matrix, not activations")
    if not _same_batch(acts_a, acts_b):
        raise DimensionMismatchError("activation samples come from different batches")
    if acts_a.is_graph_valued != acts_b.is_graph_valued:
        raise DimensionMismatchError("one side is per-vertex, the other post-readout")

    if not acts_a.is_graph_valued:
        if spec.kind == FGW:
            raise InvalidSpecError("FGW needs per-vertex activations; layer is post-readout")
        A = acts_a.readout_values
        B = acts_b.readout_values
        if spec.cross_samples:
            return np.add.reduce([
                (A[k][:, None] - B[l][None, :]) ** 2
                for k in range(A.shape[0]) for l in range(B.shape[0])
            ])
        diff = A.T[:, None, :] - B.T[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    if spec.cross_samples:
        return _cross_sample_cost(acts_a, acts_b, spec)

    na, nb = acts_a.width, acts_b.width
    C = np.zeros((na, nb))
    for k, graph in enumerate(acts_a.batch.graphs):
        va = acts_a.graph_values[k]
        vb = acts_b.graph_values[k]
        if spec.kind == FGW:
            struct = _structure_matrix(graph, spec.fgw.structure)
            for i in range(na):
                for j in range(nb):
                    C[i, j] += _fgw_value(va[:, i], vb[:, j], struct, struct, spec.fgw)
            continue
        # diff[i, j, u] = neuron i's value at vertex u minus neuron j's
        diff = va.T[:, None, :] - vb.T[None, :, :]
        vertex = np.einsum("iju,iju->ij", diff, diff)
        if spec.kind == EFD and not spec.efd_edge_indexed:
            C += np.sqrt(spec.lam * vertex)
            continue
        edge = np.zeros((na, nb))
        for u, w in graph.edges:
            duw = va.T[:, None, u] - vb.T[None, :, w]
            dwu = va.T[:, None, w] - vb.T[None, :, u]
            edge += duw * duw + dwu * dwu
        if spec.kind == EFD:
            C += np.sqrt(spec.lam * edge)
        else:
            C += spec.lam * edge + (1.0 - spec.lam) * vertex
    return C


def _cross_sample_cost(acts_a: ActivationSample, acts_b: ActivationSample, spec: CostSpec) -> np.ndarray:
    na, nb = acts_a.width, acts_b.width
    C = np.zeros((na, nb))
    for k, ga in enumerate(acts_a.batch.graphs):
        for l, gb in enumerate(acts_b.batch.graphs):
            for i in range(na):
                gi = ScalarGraph(graph=ga, values=acts_a.graph_values[k][:, i])
                for j in range(nb):
                    gj = ScalarGraph(graph=gb, values=acts_b.graph_values[l][:, j])
                    if spec.kind == EFD:
                        C[i, j] += pairwise_efd(gi, gj, spec.lam, spec.efd_edge_indexed)
                    elif spec.kind == QE:
                        C[i, j] += pairwise_qe(gi, gj, spec.lam)
                    else:
                        C[i, j] += pairwise_fgw(gi, gj, spec)
    return C


def weight_cost_matrix(layer_a: DenseParams, layer_b: DenseParams) -> np.ndarray:
    """Euclidean distance between weight rows, bias appended when present."""
    if layer_a.in_dim != layer_b.in_dim:
        raise DimensionMismatchError(
            f"in_dims differ: {layer_a.in_dim} vs {layer_b.in_dim}"
        )
    if (layer_a.bias is None) != (layer_b.bias is None):
        raise DimensionMismatchError("one layer has a bias, the other does not")
    A = layer_a.weight
    B = layer_b.weight
    if layer_a.bias is not None:
        A = np.concatenate([A, layer_a.bias[:, None]], axis=1)
        B = np.concatenate([B, layer_b.bias[:, None]], axis=1)
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
