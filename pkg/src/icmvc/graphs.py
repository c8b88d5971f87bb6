"""Per-view similarity graphs, relation transfer to missing views, and the
symmetric-normalized propagation operator consumed by the GCN encoders.

All functions here are pure numpy; the resulting operators enter the
computation graph as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DegenerateGraphError

INVALID = -1.0  # sentinel for similarity entries involving unobserved instances

TRANSFER_RULES = ("copy", "union", "intersection")


@dataclass
class SimilarityMatrix:
    """Pairwise RBF similarities, meaningful only on the observed block."""

    values: np.ndarray   # N x N; INVALID where either instance is unobserved
    observed: np.ndarray  # bool per instance
    bandwidth: float


@dataclass
class AdjacencySet:
    """Per-view binary adjacency plus flags for rows still awaiting transfer."""

    adjacency: list  # list of N x N float64 matrices with 0/1 entries
    row_valid: list  # list of bool arrays; False = row must be filled by transfer

    @property
    def n_views(self) -> int:
        return len(self.adjacency)


def squared_distances(x: np.ndarray) -> np.ndarray:
    """All pairwise squared Euclidean distances via explicit differences.

    The difference-based form mirrors a scalar loop bit for bit, which keeps
    tie-breaking reproducible; the norm-expansion trick does not.
    """
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def median_bandwidth(x: np.ndarray, observed: np.ndarray) -> float:
    """Median squared distance over distinct observed pairs; 1.0 if all zero."""
    obs = x[observed]
    if obs.shape[0] < 2:
        raise DataError("bandwidth heuristic needs at least 2 observed instances")
    d2 = squared_distances(obs)
    upper = d2[np.triu_indices(obs.shape[0], k=1)]
    med = float(np.median(upper))
    return med if med > 0 else 1.0


def rbf_similarity(x: np.ndarray, observed: np.ndarray, t: float) -> SimilarityMatrix:
    """exp(-squared distance / t) between observed instances.

    Rows and columns of unobserved instances carry the INVALID sentinel so a
    later KNN step cannot silently pick them up.
    """
    if t <= 0:
        raise ConfigError(f"rbf bandwidth must be positive, got {t}")
    observed = np.asarray(observed, dtype=bool)
    n = x.shape[0]
    if int(observed.sum()) < 2:
        raise DataError("need at least 2 observed instances to build a graph")
    values = np.full((n, n), INVALID)
    idx = np.where(observed)[0]
    block = np.exp(-squared_distances(x[idx]) / t)
    values[np.ix_(idx, idx)] = block
    return SimilarityMatrix(values=values, observed=observed, bandwidth=float(t))


def knn_adjacency(similarity: SimilarityMatrix, k: int) -> np.ndarray:
    """Raw directed KNN rows: the K most similar observed neighbors per row.

    Ties in similarity resolve to the lower index. Rows of unobserved
    instances are left all-zero; symmetrization happens in
    :func:`finalize_adjacency`.
    """
    observed = similarity.observed
    n = observed.shape[0]
    n_obs = int(observed.sum())
    if not (1 <= k <= n_obs - 1):
        raise ConfigError(f"k must lie in [1, {n_obs - 1}], got {k}")
    adj = np.zeros((n, n))
    candidates = np.where(observed)[0]
    for i in candidates:
        others = candidates[candidates != i]
        sims = similarity.values[i, others]
        # sort by similarity descending, then index ascending
        order = np.lexsort((others, -sims))
        adj[i, others[order[:k]]] = 1.0
    return adj


def transfer_relations(adjacencies: AdjacencySet, mask: np.ndarray, rule: str = "copy") -> AdjacencySet:
    """Fill each missing row from the same instance's observed views.

    ``copy`` takes the row of the lowest-indexed observed view, ``union`` the
    elementwise OR over all observed views, ``intersection`` the AND. With
    two views the three rules coincide. Transferred edges may point at
    instances that are themselves unobserved in the destination view; they
    are kept, since aggregation still flows through the remaining neighbors.
    """
    if rule not in TRANSFER_RULES:
        raise ConfigError(f"unknown transfer rule {rule!r}")
    mask = np.asarray(mask, dtype=bool)
    n, n_views = mask.shape
    if n_views != adjacencies.n_views:
        raise DataError("mask and adjacency set disagree on view count")
    if not mask.any(axis=1).all():
        missing = int(np.where(~mask.any(axis=1))[0][0])
        raise DataError(f"instance {missing} is missing in every view")
    out, valid = [], []
    for v in range(n_views):
        a = adjacencies.adjacency[v].copy()
        for i in np.where(~mask[:, v])[0]:
            sources = np.where(mask[i])[0]
            rows = np.stack([adjacencies.adjacency[w][i] for w in sources])
            if rule == "copy":
                a[i] = rows[0]
            elif rule == "union":
                a[i] = rows.max(axis=0)
            else:
                a[i] = rows.min(axis=0)
        out.append(a)
        valid.append(np.ones(n, dtype=bool))
    return AdjacencySet(adjacency=out, row_valid=valid)


def finalize_adjacency(adjacencies: AdjacencySet) -> AdjacencySet:
    """OR-symmetrize every view, zero the diagonal, reject isolated nodes."""
    for flags in adjacencies.row_valid:
        if not np.asarray(flags).all():
            raise DataError("finalize called before relation transfer completed")
    out = []
    for v, a in enumerate(adjacencies.adjacency):
        sym = np.maximum(a, a.T)
        np.fill_diagonal(sym, 0.0)
        sym = (sym > 0).astype(np.float64)
        isolated = np.where(sym.sum(axis=1) == 0)[0]
        if isolated.size:
            raise DegenerateGraphError(
                f"view {v}: instance {int(isolated[0])} has no neighbors after symmetrization"
            )
        out.append(sym)
    return AdjacencySet(adjacency=out, row_valid=[f.copy() for f in adjacencies.row_valid])


def normalize(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2."""
    tilde = adjacency + np.eye(adjacency.shape[0])
    degree = tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    return tilde * np.outer(inv_sqrt, inv_sqrt)
