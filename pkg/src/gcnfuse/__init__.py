"""Fuse two graph convolutional networks (or MLPs) into one by aligning
their neurons layer-wise with optimal transport and averaging the aligned
parameters. Includes the solvers (exact EMD, unbalanced Sinkhorn, fused
Gromov-Wasserstein), the neuron ground costs, inference-only GCN models,
synthetic graph data, and a CLI for the experiment grids.
"""

from .costs import (
    EFD,
    FGW,
    QE,
    WEIGHT,
    CostSpec,
    FgwCostSpec,
    adjacency_structure,
    build_cost_matrix,
    pairwise_efd,
    pairwise_fgw,
    pairwise_qe,
    shortest_path_structure,
    weight_cost_matrix,
)
from .errors import (
    DatasetFormatError,
    DimensionMismatchError,
    GcnFuseError,
    InvalidSpecError,
    ModelFormatError,
    NumericalError,
    SolverError,
)
from .fusion import (
    SOLVER_EMD,
    SOLVER_SINKHORN,
    AlignmentTrace,
    FusionConfig,
    LayerTrace,
    align_batchnorm,
    align_layer_incoming,
    align_layer_outgoing,
    compute_layer_tm,
    default_epsilon,
    ensemble_predict,
    fuse,
    round_plan_to_permutation,
    vanilla_fuse,
)
from .graphs import (
    Dataset,
    FusionBatch,
    GeneratorSpec,
    Graph,
    ScalarGraph,
    load_dataset,
    sample_batch,
    synthesize_dataset,
    write_dataset,
)
from .models import (
    POST_BN,
    PRE_BN,
    ActivationSample,
    ArchSpec,
    BatchNormParams,
    Dense,
    DenseParams,
    Embedding,
    GcnModel,
    GraphConv,
    MeanReadout,
    evaluate_mae,
    forward,
    forward_with_capture,
    label_with_model,
    load_model,
    normalized_adjacency,
    permute_model,
    perturb_model,
    random_model,
    save_model,
)
from .ot import (
    FgwProblem,
    SinkhornParams,
    TransportPlan,
    brute_force_ot,
    emd,
    fgw_distance,
    fused_objective,
    identity_plan,
    sinkhorn_unbalanced,
    unbalanced_objective,
    uniform_weights,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationSample", "AlignmentTrace", "ArchSpec", "BatchNormParams",
    "CostSpec", "Dataset", "DatasetFormatError", "Dense", "DenseParams",
    "DimensionMismatchError", "EFD", "Embedding", "FGW", "FgwCostSpec",
    "FgwProblem", "FusionBatch", "FusionConfig", "GcnFuseError", "GcnModel",
    "GeneratorSpec", "Graph", "GraphConv", "InvalidSpecError", "LayerTrace",
    "MeanReadout", "ModelFormatError", "NumericalError", "POST_BN", "PRE_BN",
    "QE", "SOLVER_EMD", "SOLVER_SINKHORN", "ScalarGraph", "SinkhornParams",
    "SolverError", "TransportPlan", "WEIGHT", "adjacency_structure",
    "align_batchnorm", "align_layer_incoming", "align_layer_outgoing",
    "brute_force_ot", "build_cost_matrix", "compute_layer_tm",
    "default_epsilon", "emd", "ensemble_predict", "evaluate_mae",
    "fgw_distance", "forward", "forward_with_capture", "fuse",
    "fused_objective", "identity_plan", "label_with_model", "load_dataset",
    "load_model", "normalized_adjacency", "pairwise_efd", "pairwise_fgw",
    "pairwise_qe", "permute_model", "perturb_model", "random_model",
    "round_plan_to_permutation", "sample_batch", "save_model",
    "shortest_path_structure", "sinkhorn_unbalanced", "synthesize_dataset",
    "unbalanced_objective", "uniform_weights", "vanilla_fuse",
    "weight_cost_matrix", "write_dataset",
]
