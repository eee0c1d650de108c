"""Layer-wise model fusion by optimal transport.

One model (A) is aligned to an anchor (B) one layer at a time: a transport
plan T couples A's neurons (rows) to B's (columns), computed from either
activation costs or weight costs. A's parameters are then pushed through

    incoming:  W_hat   = W_A @ (T_prev / beta_prev)
    outgoing:  W_tilde = (T / beta).T @ W_hat,   b_tilde = (T / beta).T @ b

and averaged with the anchor's. The scaled transport T / beta is applied
as a division, not a multiplication by n: for a permutation plan (1/n) P
the nonzero entries become exactly 1.0 (x / x is exact in IEEE), so
aligning by a recovered permutation is entrywise exact, which the
self-fusion and permutation-recovery guarantees rely on.

Batch norm vectors ride along with the owning layer's plan; the mean
readout has no parameters and just propagates the previous plan; the
output layer is never transported (its plan is the identity by contract).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .costs import EFD, FGW, WEIGHT, CostSpec, build_cost_matrix, weight_cost_matrix
from .errors import DimensionMismatchError, InvalidSpecError
from .graphs import Dataset, Graph, sample_batch
from .models import (
    POST_BN,
    ActivationSample,
    BatchNormParams,
    Dense,
    DenseParams,
    Embedding,
    GcnModel,
    GraphConv,
    MeanReadout,
    forward,
    forward_with_capture,
)
from .ot import (
    SinkhornParams,
    TransportPlan,
    emd,
    identity_plan,
    sinkhorn_unbalanced,
    uniform_weights,
)

SOLVER_EMD = "emd"
SOLVER_SINKHORN = "sinkhorn"
SOLVERS = (SOLVER_EMD, SOLVER_SINKHORN)

# per-cost entropic defaults; EFD tolerates a coarser epsilon
DEFAULT_EPSILON = {EFD: 5e-4, "qe": 5e-5, FGW: 5e-5, WEIGHT: 5e-4}


def default_epsilon(cost_kind: str) -> float:
    return DEFAULT_EPSILON[cost_kind]


@dataclass(frozen=True)
class FusionConfig:
    """Everything fuse() needs besides the two models and the data.

    interpolation is the weight on the anchor (0.5 averages, 1.0 returns
    the anchor). use_weight_cost switches the cost route from activations
    to aligned weight rows; a CostSpec of kind "weight" does the same.
    round_plans snaps Sinkhorn's soft plans to their best permutation
    before aligning (ablation only; EMD plans on uniform square marginals
    are permutations already).
    """

    solver: str = SOLVER_EMD
    cost: CostSpec = field(default_factory=lambda: CostSpec(kind=EFD))
    sinkhorn: SinkhornParams = field(default_factory=lambda: SinkhornParams(epsilon=5e-4))
    sample_size: int = 340
    capture_point: str = POST_BN
    interpolation: float = 0.5
    seed: int = 0
    use_weight_cost: bool = False
    round_plans: bool = False

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise InvalidSpecError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not 0.0 <= self.interpolation <= 1.0:
            raise InvalidSpecError("interpolation must be in [0, 1]")
        if self.sample_size < 1:
            raise InvalidSpecError("sample_size must be >= 1")

    @property
    def weight_mode(self) -> bool:
        return self.use_weight_cost or self.cost.kind == WEIGHT


@dataclass(frozen=True)
class LayerTrace:
    """Diagnostics for one aligned layer."""

    layer_index: int
    plan: TransportPlan
    solver: str
    is_identity: bool
    cost_min: float = 0.0
    cost_max: float = 0.0
    cost_mean: float = 0.0

    def describe(self) -> str:
        n, m = self.plan.coupling.shape
        if self.is_identity:
            return f"layer {self.layer_index}: identity plan ({n}x{m}, output layer)"
        perm = self.plan.as_permutation()
        kind = "permutation" if perm is not None else "soft"
        return (
            f"layer {self.layer_index}: {self.solver} {n}x{m} {kind} plan, "
            f"objective {self.plan.objective:.6g}, "
            f"cost[min {self.cost_min:.4g}, mean {self.cost_mean:.4g}, max {self.cost_max:.4g}], "
            f"iterations {self.plan.iterations}, converged {self.plan.converged}"
        )


@dataclass(frozen=True)
class AlignmentTrace:
    """One LayerTrace per parameterized layer, in model order."""

    layers: tuple[LayerTrace, ...]

    def report(self) -> str:
        return "\n".join(t.describe() for t in self.layers)

    def max_marginal_error(self) -> float:
        worst = 0.0
        for t in self.layers:
            n, m = t.plan.coupling.shape
            worst = max(worst, t.plan.marginal_error(uniform_weights(n), uniform_weights(m)))
        return worst


def _scaled_transport(plan: TransportPlan, beta) -> np.ndarray:
    """T / beta columnwise; exact (entries become x/x) for permutation plans."""
    b = np.asarray(beta, dtype=np.float64)
    T = plan.coupling
    if T.shape[1] != b.size:
        raise DimensionMismatchError(f"plan has {T.shape[1]} columns, beta has {b.size}")
    if np.any(b <= 0):
        raise InvalidSpecError("beta entries must be > 0")
    return T / b[None, :]


def align_layer_incoming(weights: DenseParams, t_prev: TransportPlan, beta_prev) -> DenseParams:
    """W_hat = W @ T_prev / beta_prev: re-express columns in anchor order."""
    S = _scaled_transport(t_prev, beta_prev)
    if weights.in_dim != S.shape[0]:
        raise DimensionMismatchError(
            f"weight in_dim {weights.in_dim} != plan rows {S.shape[0]}"
        )
    return DenseParams(weight=weights.weight @ S, bias=weights.bias)


def align_layer_outgoing(weights: DenseParams, t_curr: TransportPlan, beta_curr) -> DenseParams:
    """W_tilde = (T / beta).T @ W_hat; the bias moves with the rows."""
    S = _scaled_transport(t_curr, beta_curr)
    if weights.out_dim != S.shape[0]:
        raise DimensionMismatchError(
            f"weight out_dim {weights.out_dim} != plan rows {S.shape[0]}"
        )
    bias = None if weights.bias is None else S.T @ weights.bias
    return DenseParams(weight=S.T @ weights.weight, bias=bias)


def align_batchnorm(bn: BatchNormParams, t_prev: TransportPlan, beta_prev) -> BatchNormParams:
    """Map all four BN vectors by (T / beta).T; no plan of its own.

    t_prev is the plan of the affine layer the batch norm sits behind. The
    map has nonnegative entries, so running_var stays nonnegative.
    """
    S = _scaled_transport(t_prev, beta_prev)
    if bn.dim != S.shape[0]:
        raise DimensionMismatchError(f"bn dim {bn.dim} != plan rows {S.shape[0]}")
    return BatchNormParams(
        gamma=S.T @ bn.gamma,
        beta_shift=S.T @ bn.beta_shift,
        running_mean=S.T @ bn.running_mean,
        running_var=S.T @ bn.running_var,
        epsilon=bn.epsilon,
    )


def round_plan_to_permutation(plan: TransportPlan) -> TransportPlan:
    """Snap a soft square plan to its maximum-weight permutation coupling.

    The result carries uniform mass 1/n per matched pair — the Birkhoff
    vertex of the uniform polytope — rather than the soft plan's slightly
    unbalanced row masses, so a rounded plan aligns exactly like an EMD
    permutation plan does.
    """
    T = plan.coupling
    n, m = T.shape
    if n != m:
        raise InvalidSpecError("only square plans can be rounded to permutations")
    rows, cols = linear_sum_assignment(-T)
    rounded = np.zeros_like(T)
    rounded[rows, cols] = uniform_weights(n)
    return TransportPlan(
        coupling=rounded, objective=plan.objective,
        converged=plan.converged, iterations=plan.iterations,
    )


def compute_layer_tm(
    layer_index: int,
    model_a: GcnModel,
    model_b: GcnModel,
    acts_a: dict[int, ActivationSample] | None,
    acts_b: dict[int, ActivationSample] | None,
    config: FusionConfig,
    t_prev: TransportPlan | None = None,
    beta_prev: np.ndarray | None = None,
) -> tuple[TransportPlan, np.ndarray | None]:
    """Solve one layer's neuron coupling; returns (plan, cost matrix or None).

    The final parameterized layer gets the identity plan: outputs are
    matched by position, never transported. Weight mode aligns A's weights
    by the incoming plan first, then compares rows; activation mode builds
    the cost from the captured samples.
    """
    layer_a = model_a.layers[layer_index]
    layer_b = model_b.layers[layer_index]
    n_out = layer_b.params.out_dim
    if layer_a.params.out_dim != n_out:
        raise DimensionMismatchError("layer widths differ between the models")
    if layer_index == model_a.parameterized_indices()[-1]:
        return identity_plan(uniform_weights(n_out)), None

    if config.weight_mode:
        params_a = layer_a.params
        if t_prev is not None:
            params_a = align_layer_incoming(params_a, t_prev, beta_prev)
        C = weight_cost_matrix(params_a, layer_b.params)
    else:
        if acts_a is None or acts_b is None:
            raise InvalidSpecError("activation mode needs captured activations")
        cost_spec = config.cost
        if cost_spec.kind == FGW and not acts_a[layer_index].is_graph_valued:
            # post-readout activations are plain scalars; no structure left
            # to transport over, so fall back to the degenerate squared
            # difference that EFD/QE also reduce to there
            cost_spec = CostSpec(kind="qe", lam=cost_spec.lam)
        C = build_cost_matrix(acts_a[layer_index], acts_b[layer_index], cost_spec)

    alpha = uniform_weights(C.shape[0])
    beta = uniform_weights(C.shape[1])
    if config.solver == SOLVER_EMD:
        plan = emd(alpha, beta, C)
    else:
        plan = sinkhorn_unbalanced(alpha, beta, C, config.sinkhorn)
        if config.round_plans:
            plan = round_plan_to_permutation(plan)
    return plan, C


def _interpolate(a: np.ndarray, b: np.ndarray, weight_on_b: float) -> np.ndarray:
    return weight_on_b * b + (1.0 - weight_on_b) * a


def _interpolate_params(a: DenseParams, b: DenseParams, t: float) -> DenseParams:
    bias = None if a.bias is None else _interpolate(a.bias, b.bias, t)
    return DenseParams(weight=_interpolate(a.weight, b.weight, t), bias=bias)


def _interpolate_bn(a: BatchNormParams, b: BatchNormParams, t: float) -> BatchNormParams:
    return BatchNormParams(
        gamma=_interpolate(a.gamma, b.gamma, t),
        beta_shift=_interpolate(a.beta_shift, b.beta_shift, t),
        running_mean=_interpolate(a.running_mean, b.running_mean, t),
        running_var=_interpolate(a.running_var, b.running_var, t),
        epsilon=t * b.epsilon + (1.0 - t) * a.epsilon,
    )


def _rebuild_layer(layer, params: DenseParams, bn: BatchNormParams | None):
    if isinstance(layer, Embedding):
        return Embedding(params=params)
    if isinstance(layer, GraphConv):
        return GraphConv(params=params, batch_norm=bn)
    return Dense(params=params, batch_norm=bn, activation=layer.activation)


def fuse(
    model_a: GcnModel,
    model_b: GcnModel,
    dataset: Dataset | None,
    config: FusionConfig,
) -> tuple[GcnModel, AlignmentTrace]:
    """Align model_a to anchor model_b layer by layer, then average.

    Activation mode samples config.sample_size graphs from the dataset
    (seeded) and captures both models' pre-activations on them; weight
    mode needs no data. Returns the fused model plus a per-layer trace of
    the plans and cost summaries.
    """
    if not model_a.same_architecture(model_b):
        raise DimensionMismatchError("models must share an architecture to fuse")

    acts_a = acts_b = None
    if not config.weight_mode:
        if dataset is None or not dataset.graphs:
            raise InvalidSpecError("activation-based fusion needs a nonempty dataset")
        batch = sample_batch(dataset, config.sample_size, config.seed)
        _, acts_a = forward_with_capture(model_a, batch, config.capture_point)
        _, acts_b = forward_with_capture(model_b, batch, config.capture_point)

    new_layers = []
    traces = []
    t_prev: TransportPlan | None = None
    beta_prev: np.ndarray | None = None
    last_index = model_a.parameterized_indices()[-1]
    for i, layer_a in enumerate(model_a.layers):
        layer_b = model_b.layers[i]
        if isinstance(layer_a, MeanReadout):
            # no parameters; the previous plan flows through to the dense head
            new_layers.append(MeanReadout())
            continue
        plan, C = compute_layer_tm(
            i, model_a, model_b, acts_a, acts_b, config,
            t_prev=t_prev, beta_prev=beta_prev,
        )
        beta_curr = uniform_weights(layer_b.params.out_dim)

        params_a = layer_a.params
        if t_prev is not None:
            params_a = align_layer_incoming(params_a, t_prev, beta_prev)
        params_a = align_layer_outgoing(params_a, plan, beta_curr)

        bn_a = getattr(layer_a, "batch_norm", None)
        bn_b = getattr(layer_b, "batch_norm", None)
        fused_bn = None
        if bn_a is not None:
            aligned_bn = align_batchnorm(bn_a, plan, beta_curr)
            fused_bn = _interpolate_bn(aligned_bn, bn_b, config.interpolation)
        fused_params = _interpolate_params(params_a, layer_b.params, config.interpolation)
        new_layers.append(_rebuild_layer(layer_b, fused_params, fused_bn))

        if C is None:
            traces.append(LayerTrace(
                layer_index=i, plan=plan, solver=config.solver, is_identity=True,
            ))
        else:
            traces.append(LayerTrace(
                layer_index=i, plan=plan, solver=config.solver, is_identity=False,
                cost_min=float(C.min()), cost_max=float(C.max()), cost_mean=float(C.mean()),
            ))
        t_prev = plan
        beta_prev = beta_curr

    fused = GcnModel(
        layers=tuple(new_layers),
        name=f"fused({model_a.name or 'a'},{model_b.name or 'b'})",
    )
    return fused, AlignmentTrace(layers=tuple(traces))


def vanilla_fuse(model_a: GcnModel, model_b: GcnModel, interpolation: float = 0.5) -> GcnModel:
    """Elementwise parameter interpolation with no alignment; the baseline."""
    if not 0.0 <= interpolation <= 1.0:
        raise InvalidSpecError("interpolation must be in [0, 1]")
    if not model_a.same_architecture(model_b):
        raise DimensionMismatchError("models must share an architecture to fuse")
    new_layers = []
    for layer_a, layer_b in zip(model_a.layers, model_b.layers):
        if isinstance(layer_a, MeanReadout):
            new_layers.append(MeanReadout())
            continue
        bn_a = getattr(layer_a, "batch_norm", None)
        bn_b = getattr(layer_b, "batch_norm", None)
        fused_bn = None if bn_a is None else _interpolate_bn(bn_a, bn_b, interpolation)
        params = _interpolate_params(layer_a.params, layer_b.params, interpolation)
        new_layers.append(_rebuild_layer(layer_b, params, fused_bn))
    return GcnModel(
        layers=tuple(new_layers),
        name=f"vanilla({model_a.name or 'a'},{model_b.name or 'b'})",
    )


def ensemble_predict(models: list[GcnModel], graph: Graph) -> float:
    """Mean of the member predictions."""
    if not models:
        raise InvalidSpecError("ensemble needs at least one model")
    return float(np.mean([forward(m, graph) for m in models]))
