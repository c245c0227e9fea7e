"""Diversity-guided edge pruning for embedding-based graph structure learning.

The package bundles a minimal reverse-mode tensor engine, a graph data model
with a text bundle format, a two-layer GCN, the similarity-based structure
learner, the diversity-guided pruner with its mutual-information objective,
and randomized verifiers for the method's two redundancy bounds.
"""

__version__ = "0.1.0"

from . import analysis, errors, gnn, graph, gsl, pruning, tensor
from .analysis import (
    LemmaReport,
    avg_pairwise_similarity,
    complexity_estimate,
    lemma1_bound,
    lemma1_check,
    lemma2_check,
    redundancy_profile,
)
from .gnn import (
    GcnParams,
    TrainState,
    accuracy,
    adam_step,
    flops_estimate,
    gcn_forward,
    make_gcn_params,
    spectral_norm,
    task_loss,
)
from .graph import (
    Graph,
    SparseAdjacency,
    edge_homophily,
    generate_sbm,
    inject_structural_noise,
    load_bundle,
    mask_features,
    normalize_adjacency,
    save_bundle,
)
from .gsl import (
    CandidateGraph,
    build_candidates,
    encode_structure,
    feature_smoothness,
    fuse_with_original,
    gsl_objective,
)
from .pruning import (
    KEEP_ALL,
    DiversityScorer,
    PruneConfig,
    TrainConfig,
    TrainResult,
    diversity_scores,
    keep_count,
    make_scorer,
    mi_loss,
    prune,
    sample_batch,
    select_threshold,
    total_loss,
    train_ingsl,
)
from .tensor import Tape, Tensor, backward, gradient_check

__all__ = [
    "analysis",
    "errors",
    "gnn",
    "graph",
    "gsl",
    "pruning",
    "tensor",
    "Tensor",
    "Tape",
    "backward",
    "gradient_check",
    "Graph",
    "SparseAdjacency",
    "normalize_adjacency",
    "edge_homophily",
    "generate_sbm",
    "inject_structural_noise",
    "mask_features",
    "load_bundle",
    "save_bundle",
    "GcnParams",
    "TrainState",
    "gcn_forward",
    "task_loss",
    "accuracy",
    "adam_step",
    "flops_estimate",
    "spectral_norm",
    "make_gcn_params",
    "CandidateGraph",
    "encode_structure",
    "build_candidates",
    "gsl_objective",
    "feature_smoothness",
    "fuse_with_original",
    "DiversityScorer",
    "PruneConfig",
    "TrainConfig",
    "TrainResult",
    "KEEP_ALL",
    "make_scorer",
    "diversity_scores",
    "prune",
    "keep_count",
    "select_threshold",
    "sample_batch",
    "mi_loss",
    "total_loss",
    "train_ingsl",
    "LemmaReport",
    "avg_pairwise_similarity",
    "lemma1_bound",
    "lemma1_check",
    "lemma2_check",
    "redundancy_profile",
    "complexity_estimate",
]
