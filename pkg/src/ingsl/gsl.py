"""Embedding-based structure learning baseline: auxiliary encoder, top-K
candidate construction, the supervised objective, and residual fusion of the
learned candidates with the original graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DomainError, ShapeError
from .gnn import GcnParams, gcn_forward
from .graph import Graph, SparseAdjacency, normalize_entries


@dataclass
class CandidateGraph:
    """Row-wise top-K similarity graph over learned embeddings."""

    sparse: SparseAdjacency
    k: int
    source_embeddings: T.Tensor

    @property
    def n(self) -> int:
        return self.sparse.n_rows

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sparse.directed_pairs()


def encode_structure(
    a_norm: SparseAdjacency, x: T.Tensor, params_s: GcnParams
) -> T.Tensor:
    """Auxiliary GCN encoder run on the original normalized adjacency."""
    e, _ = gcn_forward(a_norm, x, params_s)
    return e


def build_candidates(e: T.Tensor, k: int, metric: str = "inner") -> CandidateGraph:
    """Keep the k most similar other nodes per row of the embedding matrix.

    Similarity is the inner product by default ("cosine" normalizes rows
    first). Selection is detached; gradient flows only into the kept entries.
    Ties break toward the smaller column index. The result is row-wise and
    not symmetrized.
    """
    if e.data.ndim != 2:
        raise ShapeError(f"embeddings must be 2-D, got {e.shape}")
    n = e.shape[0]
    if k < 1 or k >= n:
        raise ConfigError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    if metric not in ("inner", "cosine"):
        raise ConfigError(f"unknown similarity metric {metric!r}")

    base = T.row_l2_normalize_or_zero(e) if metric == "cosine" else e
    sim = base.data @ base.data.T
    np.fill_diagonal(sim, -np.inf)
    # Stable sort on negated values keeps ascending column order among ties.
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    cols = np.sort(order, axis=1)

    src = np.repeat(np.arange(n), k)
    dst = cols.reshape(-1)
    values = T.rowwise_dot(T.gather_rows(base, src), T.gather_rows(base, dst))
    row_offsets = np.arange(n + 1, dtype=np.int64) * k
    sparse = SparseAdjacency(row_offsets, dst, values, n)
    return CandidateGraph(sparse=sparse, k=k, source_embeddings=e)


def gsl_objective(task: T.Tensor, reg: T.Tensor, lam: float) -> T.Tensor:
    """Supervised loss plus a weighted structural regularizer."""
    if lam < 0:
        raise DomainError("regularizer weight must be non-negative")
    return T.add(task, T.mul(reg, lam))


def feature_smoothness(
    values: T.Tensor, src: np.ndarray, dst: np.ndarray, features: np.ndarray
) -> T.Tensor:
    """Built-in regularizer: mean of edge weight times squared feature gap."""
    diff = features[np.asarray(src)] - features[np.asarray(dst)]
    cost = T.constant((diff**2).sum(axis=1))
    return T.mul(T.sum_all(T.mul(values, cost)), 1.0 / max(1, values.shape[0]))


def fuse_with_original(
    a: Graph,
    s: CandidateGraph | SparseAdjacency | None,
    residual_weight: float = 1.0,
) -> SparseAdjacency:
    """Normalize the edge-value union of the original graph and the learned
    candidates scaled by ``residual_weight``. Original edges carry unit weight
    in both directions; candidate entries stay directed as given.
    """
    if residual_weight < 0:
        raise DomainError("residual_weight must be non-negative")
    e = a.edges
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    base_w = T.constant(np.ones(src.shape[0]))

    sparse = s.sparse if isinstance(s, CandidateGraph) else s
    if sparse is None or sparse.nnz == 0:
        return normalize_entries(a.n, src, dst, base_w)

    s_src, s_dst = sparse.directed_pairs()
    all_src = np.concatenate([src, s_src])
    all_dst = np.concatenate([dst, s_dst])
    all_w = T.concat_vec(base_w, T.mul(sparse.values, float(residual_weight)))
    return normalize_entries(a.n, all_src, all_dst, all_w)
