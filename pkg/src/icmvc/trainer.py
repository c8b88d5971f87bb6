"""Experiment driver: graph preparation, the full-batch joint training loop,
ablation switches, and the k-means baselines.

One epoch is one Adam step over the whole dataset: encode every view,
fuse, project, classify, evaluate the enabled loss terms, backpropagate.
The guidance target is rebuilt from the current assignments each epoch
(configurable interval) and treated as a constant within the step. Training
needs no pretraining and no post-hoc clustering while the clustering term is
active; with it ablated away, final labels come from k-means on the fused
representation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .dataio import ViewSet, zero_fill
from .errors import ConfigError, DataError, DivergenceError
from .graphs import (
    AdjacencySet,
    TRANSFER_RULES,
    finalize_adjacency,
    knn_adjacency,
    median_bandwidth,
    normalize,
    rbf_similarity,
    transfer_relations,
)
from .metrics import evaluate, labels_from_assignment
from .network import AssignmentBundle, forward, init_model
from .objectives import LossBreakdown, high_confidence_target, total_loss

ABLATION_MODES = {
    "full": dict(use_ins=True, use_clu=True, use_hg=True),
    "no-ins": dict(use_ins=False, use_clu=True, use_hg=True),
    "no-hg": dict(use_ins=True, use_clu=True, use_hg=False),
    "no-hg-no-clu": dict(use_ins=True, use_clu=False, use_hg=False),
}


@dataclass
class TrainConfig:
    knn_k: int = 10
    bandwidth: float | None = None  # None -> per-view median heuristic
    lr: float = 0.001
    epochs: int = 500
    tau_instance: float = 1.0
    tau_cluster: float = 0.5
    tau_attention: float = 1.0
    hidden_dim: int = 128
    embed_dim: int = 64
    gcn_layers: int = 2
    seed: int = 0
    use_ins: bool = True
    use_clu: bool = True
    use_hg: bool = True
    include_self: bool = True
    transfer_rule: str = "copy"
    target_interval: int = 1
    kmeans_restarts: int = 20

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        for name in ("tau_instance", "tau_cluster", "tau_attention"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.knn_k < 1:
            raise ConfigError(f"knn_k must be >= 1, got {self.knn_k}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.use_hg and not self.use_clu:
            raise ConfigError("the guidance term is only valid together with the clustering term")
        if self.transfer_rule not in TRANSFER_RULES:
            raise ConfigError(f"unknown transfer rule {self.transfer_rule!r}")
        if self.gcn_layers < 1:
            raise ConfigError(f"gcn_layers must be >= 1, got {self.gcn_layers}")
        if self.target_interval < 1:
            raise ConfigError(f"target_interval must be >= 1, got {self.target_interval}")
        return self

    def ablation_name(self) -> str:
        for name, flags in ABLATION_MODES.items():
            if all(getattr(self, k) == v for k, v in flags.items()):
                return name
        return "custom"


@dataclass
class TrainResult:
    labels: np.ndarray
    assignments: AssignmentBundle  # holds final value arrays
    history: list                  # LossBreakdown per epoch
    metric_history: list           # MetricsReport per epoch, or [] without labels
    embeddings: np.ndarray         # final fused representation
    attention: np.ndarray
    wall_time: float
    config: TrainConfig
    final_metrics: object = None   # MetricsReport when truth labels were given
    params: object = None          # trained ModelParams, for checkpointing

    def history_rows(self):
        rows = []
        for epoch, breakdown in enumerate(self.history):
            row = [epoch] + breakdown.as_row()
            if self.metric_history:
                report = self.metric_history[epoch]
                row += [report.acc, report.nmi, report.ari]
            rows.append(row)
        return rows


def prepare(views: ViewSet, mask: np.ndarray, config: TrainConfig):
    """Graph construction for every view: similarity, KNN, relation
    transfer, symmetrization, normalization; plus zero-filled features."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (views.n_instances, views.n_views):
        raise DataError(f"mask shape {mask.shape} does not match data")
    raw, flags = [], []
    for v in range(views.n_views):
        observed = mask[:, v]
        t = config.bandwidth if config.bandwidth is not None else median_bandwidth(views.views[v], observed)
        sim = rbf_similarity(views.views[v], observed, t)
        raw.append(knn_adjacency(sim, config.knn_k))
        flags.append(observed.copy())
    adj = AdjacencySet(adjacency=raw, row_valid=flags)
    adj = transfer_relations(adj, mask, config.transfer_rule)
    adj = finalize_adjacency(adj)
    operators = [normalize(a) for a in adj.adjacency]
    return operators, zero_fill(views, mask)


def train(views: ViewSet, mask: np.ndarray, n_clusters: int, config: TrainConfig, labels=None) -> TrainResult:
    """Joint optimization; returns final labels and per-epoch history.

    The contrastive objectives are defined over view pairs, so training
    expects exactly two views (graph preparation itself handles any number).
    """
    config.validate()
    if views.n_views != 2:
        raise ConfigError(f"training requires exactly 2 views, got {views.n_views}")
    if n_clusters < 2:
        raise ConfigError(f"need at least 2 clusters, got {n_clusters}")
    started = time.perf_counter()
    operators, filled = prepare(views, mask, config)
    params = init_model(
        filled.dims,
        n_clusters,
        hidden_dim=config.hidden_dim,
        embed_dim=config.embed_dim,
        gcn_layers=config.gcn_layers,
        seed=config.seed,
    )
    optimizer = nk.AdamState(params.parameters(), lr=config.lr)

    history, metric_history = [], []
    target = None
    embeddings = assignments = None
    for epoch in range(config.epochs):
        emb, asg = forward(params, operators, filled.views, config.tau_attention)
        if config.use_hg and (target is None or epoch % config.target_interval == 0):
            target = high_confidence_target(asg.per_view[0], asg.per_view[1], asg.fused)
        total, breakdown = total_loss(
            emb.projections[0],
            emb.projections[1],
            asg.per_view[0],
            asg.per_view[1],
            asg.fused,
            tau_instance=config.tau_instance,
            tau_cluster=config.tau_cluster,
            use_ins=config.use_ins,
            use_clu=config.use_clu,
            use_hg=config.use_hg,
            include_self=config.include_self,
            target=target,
        )
        if not np.isfinite(breakdown.total):
            raise DivergenceError(epoch, breakdown)
        nk.backward(total)
        nk.adam_step(optimizer)
        history.append(breakdown)
        if labels is not None:
            metric_history.append(evaluate(labels_from_assignment(asg.fused.value), labels))
        if epoch == config.epochs - 1:
            embeddings, assignments = emb, asg

    per_view_values, fused_value = assignments.values()
    if config.use_clu:
        final_labels = labels_from_assignment(fused_value)
    else:
        final_labels = kmeans(
            embeddings.fused.value, n_clusters, seed=config.seed, restarts=config.kmeans_restarts
        )
    final_metrics = evaluate(final_labels, labels) if labels is not None else None
    return TrainResult(
        labels=final_labels,
        assignments=AssignmentBundle(per_view=per_view_values, fused=fused_value),
        history=history,
        metric_history=metric_history,
        embeddings=embeddings.fused.value,
        attention=embeddings.attention.value,
        wall_time=time.perf_counter() - started,
        config=config,
        final_metrics=final_metrics,
        params=params,
    )


# the ablation path is the same loop; flags live on the config
train_ablation = train


# ---------------------------------------------------------------------------
# k-means and the naive baselines


def kmeans(x: np.ndarray, n_clusters: int, seed: int = 0, restarts: int = 20, max_iter: int = 300) -> np.ndarray:
    """Lloyd iterations with distance-weighted seeding, best of ``restarts``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n_clusters > n:
        raise ConfigError(f"cannot form {n_clusters} clusters from {n} points")
    rng = np.random.Generator(np.random.PCG64(seed))
    best_labels, best_inertia = None, np.inf
    for _ in range(max(1, restarts)):
        centers = _seed_centers(x, n_clusters, rng)
        labels = None
        for _iteration in range(max_iter):
            distances = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = distances.argmin(axis=1)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(n_clusters):
                members = x[labels == c]
                if members.shape[0] == 0:
                    # revive an empty cluster at the point farthest from its center
                    worst = distances[np.arange(n), labels].argmax()
                    centers[c] = x[worst]
                    labels[worst] = c
                else:
                    centers[c] = members.mean(axis=0)
        inertia = float(((x - centers[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_inertia, best_labels = inertia, labels.copy()
    return best_labels.astype(np.int64)


def _seed_centers(x: np.ndarray, n_clusters: int, rng) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((n_clusters, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            probabilities = closest / total
            idx = rng.choice(n, p=probabilities)
        else:
            idx = rng.integers(n)
        centers[c] = x[idx]
        closest = np.minimum(closest, ((x - centers[c]) ** 2).sum(axis=1))
    return centers


def mean_impute(views: ViewSet, mask: np.ndarray) -> ViewSet:
    """Replace each missing row by the mean of that view's observed rows."""
    mask = np.asarray(mask, dtype=bool)
    imputed = []
    for v, matrix in enumerate(views.views):
        observed = mask[:, v]
        if not observed.any():
            raise DataError(f"view {v} has no observed instances to average")
        out = matrix.copy()
        out[~observed] = matrix[observed].mean(axis=0)
        imputed.append(out)
    return ViewSet(imputed)


def baseline(views: ViewSet, mask: np.ndarray, labels: np.ndarray, n_clusters: int, kind: str, seed: int = 0, restarts: int = 20):
    """Mean-impute + k-means reference clusterings.

    ``bsv`` clusters each view separately and reports the best-scoring one;
    ``concat`` clusters the horizontally stacked views.
    """
    if kind not in ("bsv", "concat"):
        raise ConfigError(f"unknown baseline {kind!r}")
    imputed = mean_impute(views, mask)
    if kind == "concat":
        stacked = np.hstack(imputed.views)
        pred = kmeans(stacked, n_clusters, seed=seed, restarts=restarts)
        return evaluate(pred, labels)
    best = None
    for matrix in imputed.views:
        pred = kmeans(matrix, n_clusters, seed=seed, restarts=restarts)
        report = evaluate(pred, labels)
        if best is None or report.acc > best.acc:
            best = report
    return best
