"""Hidden-layer reduction: neuron clustering (Ward or k-means over neuron
output columns), cluster aggregation, PCA on neuron outputs, and reduced
models built by freezing the feature map and refitting a softmax head.

Neurons are treated as k points in R^n, one point per activation column.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, _frozen
from .network import (
    ActivationMatrix,
    NetworkModel,
    ShapeError,
    TrainConfig,
    DivergenceError,
    continue_train,
    forward_batch,
    softmax,
)

AGGREGATIONS = ("mean", "centroid", "sum", "max")  # centroid = mean in row space


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the k neurons into m clusters."""

    m: int
    assignment: tuple[int, ...]  # cluster id per neuron, ids in [0, m)
    method: str  # "ward" | "kmeans"
    aggregation: str
    merge_heights: tuple[float, ...] = ()  # ward only
    inertia: float | None = None  # kmeans only
    merges: tuple[tuple[int, int, float], ...] = ()  # ward dendrogram (child_a, child_b, height)

    def __post_init__(self):
        k = len(self.assignment)
        if not 1 <= self.m <= k:
            raise ValueError(f"m must be in [1, {k}], got {self.m}")
        used = set(self.assignment)
        if used != set(range(self.m)):
            raise ValueError(f"every cluster id in [0, {self.m}) must occur; got {sorted(used)}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")

    @property
    def k(self) -> int:
        return len(self.assignment)

    def members(self, cluster: int) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.assignment) if c == cluster)

    def sizes(self) -> tuple[int, ...]:
        return tuple(self.assignment.count(c) for c in range(self.m))


def ward_linkage(points: np.ndarray) -> list[tuple[int, int, float, int]]:
    """Agglomerative Ward merges over row-points.

    Returns (child_a, child_b, height, size) per merge with new clusters
    numbered k, k+1, ... and heights following the Euclidean Ward
    convention (Lance-Williams on squared distances, reported as roots).
    Ties pick the lowest-indexed pair, so the dendrogram is deterministic.
    """
    k = points.shape[0]
    # active cluster id -> (representative index into dist arrays, size)
    sq = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    active: dict[int, int] = {i: i for i in range(k)}  # cluster id -> row of sq
    sizes = {i: 1 for i in range(k)}
    merges: list[tuple[int, int, float, int]] = []
    next_id = k
    while len(active) > 1:
        ids = sorted(active)
        best = None
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                d = sq[active[a], active[b]]
                if best is None or d < best[0] - 1e-15:
                    best = (d, a, b)
        d2, a, b = best
        na, nb = sizes[a], sizes[b]
        ra, rb = active[a], active[b]
        # Lance-Williams Ward update of squared distances onto row ra
        for c in ids:
            if c in (a, b):
                continue
            rc = active[c]
            nc = sizes[c]
            total = na + nb + nc
            sq[ra, rc] = ((na + nc) * sq[ra, rc] + (nb + nc) * sq[rb, rc] - nc * d2) / total
            sq[rc, ra] = sq[ra, rc]
        merges.append((a, b, float(np.sqrt(max(d2, 0.0))), na + nb))
        del active[a], active[b]
        active[next_id] = ra
        sizes[next_id] = na + nb
        next_id += 1
    return merges


def _cut_merges(merges, k: int, m: int) -> list[int]:
    """Flat cluster labels (by lowest member index) after k - m merges."""
    parent = list(range(k + len(merges)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(k - m):
        a, b, _, _ = merges[step]
        root = k + step
        parent[find(a)] = root
        parent[find(b)] = root
    groups: dict[int, list[int]] = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)
    ordered = sorted(groups.values(), key=min)
    labels = [0] * k
    for cid, members in enumerate(ordered):
        for i in members:
            labels[i] = cid
    return labels


def _kmeans_pp_init(points: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(points.shape[0])]]
    for _ in range(m - 1):
        d2 = np.min(
            np.stack([np.sum((points - c) ** 2, axis=1) for c in centers]), axis=0
        )
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a center
            centers.append(points[rng.integers(points.shape[0])].copy())
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        centers.append(points[min(idx, points.shape[0] - 1)].copy())
    return np.stack(centers)


def kmeans_lloyd(
    points: np.ndarray, m: int, seed: int, max_iter: int = 300
) -> tuple[np.ndarray, float]:
    """Seeded k-means++ then Lloyd iterations to an assignment fixpoint.

    Returns (labels, inertia). Empty clusters are refilled with the point
    farthest from its center so every cluster id occurs.
    """
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, m, rng)
    labels = None
    for _iteration in range(max_iter):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        for cluster in range(m):
            if not np.any(new_labels == cluster):
                residual = d2[np.arange(points.shape[0]), new_labels]
                farthest = int(np.argmax(residual))
                new_labels[farthest] = cluster
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for cluster in range(m):
            centers[cluster] = points[labels == cluster].mean(axis=0)
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    inertia = float(d2[np.arange(points.shape[0]), labels].sum())
    return labels, inertia


def cluster_neurons(
    acts: ActivationMatrix,
    m: int,
    method: str = "ward",
    aggregation: str = "mean",
    seed: int = 0,
) -> ClusterAssignment:
    """Group the k neuron columns into m clusters."""
    if not 1 <= m <= acts.k:
        raise ValueError(f"m must be in [1, {acts.k}], got {m}")
    if acts.n < 2:
        raise ValueError("need at least 2 samples to cluster neuron outputs")
    points = acts.values.T.copy()
    if method == "ward":
        merges = ward_linkage(points)
        labels = _cut_merges(merges, acts.k, m)
        return ClusterAssignment(
            m=m,
            assignment=tuple(labels),
            method="ward",
            aggregation=aggregation,
            merge_heights=tuple(h for _, _, h, _ in merges),
            merges=tuple((a, b, h) for a, b, h, _ in merges),
        )
    if method == "kmeans":
        raw, inertia = kmeans_lloyd(points, m, seed)
        # relabel by first appearance so ids are stable across runs
        remap: dict[int, int] = {}
        labels = []
        for value in raw.tolist():
            if value not in remap:
                remap[value] = len(remap)
            labels.append(remap[value])
        return ClusterAssignment(
            m=m,
            assignment=tuple(labels),
            method="kmeans",
            aggregation=aggregation,
            inertia=inertia,
        )
    raise ValueError(f"method must be 'ward' or 'kmeans', got {method!r}")


def aggregate_clusters(acts_or_matrix, asg: ClusterAssignment) -> np.ndarray:
    """n x m matrix whose column j aggregates cluster j's neuron columns."""
    H = acts_or_matrix.values if isinstance(acts_or_matrix, ActivationMatrix) else np.asarray(acts_or_matrix, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != asg.k:
        raise ShapeError(f"activations must have {asg.k} columns, got shape {H.shape}")
    out = np.empty((H.shape[0], asg.m), dtype=np.float64)
    for j in range(asg.m):
        cols = H[:, list(asg.members(j))]
        if asg.aggregation in ("mean", "centroid"):
            out[:, j] = cols.mean(axis=1)
        elif asg.aggregation == "sum":
            out[:, j] = cols.sum(axis=1)
        else:  # max
            out[:, j] = cols.max(axis=1)
    return out


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PCAProjection:
    """Top-m principal axes of the neuron outputs."""

    mean: np.ndarray  # (k,)
    components: np.ndarray  # (k, m), orthonormal columns
    eigenvalues: np.ndarray  # (m,), nonincreasing
    explained_variance_ratio: np.ndarray  # (m,), fractions of total variance
    cumulative_ratio: np.ndarray  # (m,), running sum of the ratios
    scale: np.ndarray | None = None  # column stds when standardized

    def __post_init__(self):
        for name in ("mean", "components", "eigenvalues", "explained_variance_ratio", "cumulative_ratio"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.scale is not None:
            object.__setattr__(self, "scale", _frozen(np.asarray(self.scale, dtype=np.float64)))
        if np.any(np.diff(self.eigenvalues) > 1e-10):
            raise ValueError("eigenvalues must be nonincreasing")

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def m(self) -> int:
        return self.components.shape[1]


def pca_fit(acts_or_matrix, m: int, standardize: bool = False) -> PCAProjection:
    """Eigendecomposition of the sample covariance of the neuron outputs.

    Columns are centered (and optionally standardized); the covariance
    uses the n-1 denominator; each component's sign is fixed so its
    largest-magnitude entry is positive.
    """
    H = acts_or_matrix.values if isinstance(acts_or_matrix, ActivationMatrix) else np.asarray(acts_or_matrix, dtype=np.float64)
    if H.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {H.shape}")
    n, k = H.shape
    if not 1 <= m <= k:
        raise ValueError(f"m must be in [1, {k}], got {m}")
    if n < 2:
        raise ValueError("need at least 2 samples for a covariance estimate")
    mu = H.mean(axis=0)
    centered = H - mu
    scale = None
    if standardize:
        scale = np.std(H, axis=0, ddof=1)
        scale = np.where(scale > 0.0, scale, 1.0)
        centered = centered / scale
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    for j in range(k):
        lead = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[lead, j] < 0.0:
            eigvecs[:, j] = -eigvecs[:, j]
    total = float(eigvals.sum())
    ratios = eigvals / total if total > 0.0 else np.zeros_like(eigvals)
    return PCAProjection(
        mean=mu,
        components=eigvecs[:, :m],
        eigenvalues=eigvals[:m],
        explained_variance_ratio=ratios[:m],
        cumulative_ratio=np.cumsum(ratios[:m]),
        scale=scale,
    )


def pca_transform(proj: PCAProjection, acts_or_matrix) -> np.ndarray:
    """Project rows onto the retained components: (H - mean) @ W."""
    H = acts_or_matrix.values if isinstance(acts_or_matrix, ActivationMatrix) else np.asarray(acts_or_matrix, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != proj.k:
        raise ShapeError(f"expected {proj.k} columns, got shape {H.shape}")
    centered = H - proj.mean
    if proj.scale is not None:
        centered = centered / proj.scale
    return centered @ proj.components


# ---------------------------------------------------------------------------
# reduced models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeuronSubset:
    """Feature map selecting a subset of hidden neurons (one cluster's members)."""

    indices: tuple[int, ...]
    k: int  # hidden width of the source model

    def __post_init__(self):
        if not self.indices:
            raise ValueError("subset must contain at least one neuron")
        if any(not 0 <= i < self.k for i in self.indices):
            raise ValueError(f"neuron indices must lie in [0, {self.k})")

    @property
    def m(self) -> int:
        return len(self.indices)


Mapping = ClusterAssignment | PCAProjection | NeuronSubset


def _map_features(mapping: Mapping, H: np.ndarray) -> np.ndarray:
    if isinstance(mapping, ClusterAssignment):
        return aggregate_clusters(H, mapping)
    if isinstance(mapping, PCAProjection):
        return pca_transform(mapping, H)
    return H[:, list(mapping.indices)]


def _mapping_kind(mapping: Mapping) -> str:
    if isinstance(mapping, ClusterAssignment):
        return "cluster"
    if isinstance(mapping, PCAProjection):
        return "pca"
    return "subset"


def fit_softmax_head(
    features: np.ndarray, labels: np.ndarray, n_classes: int, cfg: TrainConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded mini-batch SGD fit of a softmax layer on fixed features."""
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, m = F.shape
    rng = np.random.default_rng(cfg.seed)
    limit = cfg.init_scale if cfg.init_scale is not None else np.sqrt(6.0 / (m + n_classes))
    W = rng.uniform(-limit, limit, size=(n_classes, m))
    b = np.zeros(n_classes)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            S = softmax(F[idx] @ W.T + b)
            dZ = S.copy()
            dZ[np.arange(idx.size), y[idx]] -= 1.0
            dZ /= idx.size
            W -= cfg.learning_rate * (dZ.T @ F[idx] + cfg.l2_penalty * W)
            b -= cfg.learning_rate * dZ.sum(axis=0)
            if not np.all(np.isfinite(W)):
                raise DivergenceError(f"head training diverged at epoch {epoch}")
    return W, b


HEAD_CONFIG = TrainConfig(epochs=500, learning_rate=0.1, batch_size=32, seed=0)


@dataclass(frozen=True)
class ReducedModel:
    """Frozen feature map over a source network plus a retrained softmax head."""

    source: NetworkModel
    kind: str  # "cluster" | "pca" | "subset"
    mapping: Mapping
    head_weights: np.ndarray  # (p, m)
    head_biases: np.ndarray  # (p,)
    train_accuracy: float
    test_accuracy: float | None
    full_retrain: bool = False
    retrained_network: NetworkModel | None = None  # set when full_retrain

    def __post_init__(self):
        object.__setattr__(self, "head_weights", _frozen(np.asarray(self.head_weights, dtype=np.float64)))
        object.__setattr__(self, "head_biases", _frozen(np.asarray(self.head_biases, dtype=np.float64)))

    @property
    def m(self) -> int:
        return self.head_weights.shape[1]

    @property
    def p(self) -> int:
        return self.head_weights.shape[0]

    def head_parameter_count(self) -> int:
        return self.m * self.p + self.p

    def total_parameter_count(self) -> int:
        """Trainable parameters of the inference pipeline.

        Head-only models keep the source hidden layer frozen; subset and
        full-retrain models carry only their own first layer.
        """
        if self.retrained_network is not None:
            return self.retrained_network.parameter_count()
        d = self.source.input_dim
        if self.kind == "subset":
            hidden = d * self.m + self.m
        elif self.kind == "cluster" or self.kind == "pca":
            hidden = d * self.source.hidden_dim + self.source.hidden_dim
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        return hidden + self.head_parameter_count()

    def features(self, X: np.ndarray) -> np.ndarray:
        if self.retrained_network is not None:
            H, _ = forward_batch(self.retrained_network, X)
            return H
        H, _ = forward_batch(self.source, X)
        return _map_features(self.mapping, H)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.retrained_network is not None:
            _, out = forward_batch(self.retrained_network, X)
            return np.argmax(out, axis=1)
        logits = self.features(X) @ self.head_weights.T + self.head_biases
        return np.argmax(logits, axis=1)

    def accuracy(self, data: Dataset) -> float:
        return float(np.mean(self.predict(data.X) == data.y))


def _subnetwork(model: NetworkModel, mapping: Mapping, seed: int) -> NetworkModel:
    """Reduced first layer for full retraining, inherited from the source."""
    if isinstance(mapping, NeuronSubset):
        rows = list(mapping.indices)
        A = model.hidden_weights[rows]
        a0 = model.hidden_biases[rows]
    elif isinstance(mapping, ClusterAssignment):
        agg = np.sum if mapping.aggregation == "sum" else np.mean
        A = np.stack([agg(model.hidden_weights[list(mapping.members(j))], axis=0) for j in range(mapping.m)])
        a0 = np.array([agg(model.hidden_biases[list(mapping.members(j))]) for j in range(mapping.m)])
    else:
        raise ValueError("full retraining is not defined for a PCA mapping")
    m = A.shape[0]
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (m + model.output_dim))
    B = rng.uniform(-limit, limit, size=(model.output_dim, m))
    return NetworkModel(A, a0, B, np.zeros(model.output_dim),
                        model.hidden_activation, model.output_activation)


def build_reduced_model(
    model: NetworkModel,
    train_data: Dataset,
    mapping: Mapping,
    head_cfg: TrainConfig = HEAD_CONFIG,
    test_data: Dataset | None = None,
    full_retrain: bool = False,
) -> ReducedModel:
    """Freeze the feature map and refit a fresh softmax head.

    With ``full_retrain`` the whole reduced network (inherited first layer
    plus fresh head) is trained end to end, matching reported per-cluster
    model parameter totals; PCA mappings support head-only fitting.
    """
    expected_k = mapping.k
    if expected_k != model.hidden_dim:
        raise ShapeError(f"mapping expects k={expected_k}, model has k={model.hidden_dim}")

    if full_retrain:
        start = _subnetwork(model, mapping, head_cfg.seed)
        net = continue_train(start, train_data, head_cfg)
        _, out = forward_batch(net, train_data.X)
        train_acc = float(np.mean(np.argmax(out, axis=1) == train_data.y))
        reduced = ReducedModel(
            source=model,
            kind=_mapping_kind(mapping),
            mapping=mapping,
            head_weights=net.output_weights,
            head_biases=net.output_biases,
            train_accuracy=train_acc,
            test_accuracy=None,
            full_retrain=True,
            retrained_network=net,
        )
    else:
        H, _ = forward_batch(model, train_data.X)
        F = _map_features(mapping, H)
        W, b = fit_softmax_head(F, train_data.y, train_data.p, head_cfg)
        preds = np.argmax(F @ W.T + b, axis=1)
        reduced = ReducedModel(
            source=model,
            kind=_mapping_kind(mapping),
            mapping=mapping,
            head_weights=W,
            head_biases=b,
            train_accuracy=float(np.mean(preds == train_data.y)),
            test_accuracy=None,
        )
    if test_data is not None:
        reduced = replace(reduced, test_accuracy=reduced.accuracy(test_data))
    return reduced


def per_cluster_models(
    model: NetworkModel,
    train_data: Dataset,
    asg: ClusterAssignment,
    head_cfg: TrainConfig = HEAD_CONFIG,
    test_data: Dataset | None = None,
    full_retrain: bool = False,
) -> list[ReducedModel]:
    """One reduced model per cluster, each using that cluster's member neurons."""
    out = []
    for j in range(asg.m):
        subset = NeuronSubset(indices=asg.members(j), k=asg.k)
        out.append(
            build_reduced_model(model, train_data, subset, head_cfg, test_data, full_retrain)
        )
    return out
