"""Exact k-nearest-neighbour classification and the repeated-split evaluation protocol."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import SplitPlan, split_indices
from .embed import EmbeddingSpace

N_CLASSES = 10


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    metric: str = "euclidean"
    weighting: str = "inverse-distance"
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.weighting not in ("majority", "inverse-distance"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def pairwise_distances(queries: np.ndarray, items: np.ndarray, metric: str) -> np.ndarray:
    """(n_queries, n_items) distance matrix.

    Euclidean distances are computed after centring both sets on the item mean,
    which keeps the Gram expansion accurate when all vectors share a large offset.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    x = np.atleast_2d(np.asarray(items, dtype=np.float64))
    if q.shape[1] != x.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} does not match space dim {x.shape[1]}")
    if metric == "cosine":
        sim = _unit_rows(q) @ _unit_rows(x).T
        return np.clip(1.0 - sim, 0.0, 2.0)
    mu = x.mean(axis=0)
    qc, xc = q - mu, x - mu
    d2 = (qc * qc).sum(1)[:, None] + (xc * xc).sum(1)[None, :] - 2.0 * (qc @ xc.T)
    return np.sqrt(np.maximum(d2, 0.0))


def _neighbours(dist_row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest distances, ties broken by lower index."""
    n = len(dist_row)
    if k >= n:
        return np.lexsort((np.arange(n), dist_row))
    kth = np.partition(dist_row, k - 1)[k - 1]
    cand = np.flatnonzero(dist_row <= kth)
    return cand[np.lexsort((cand, dist_row[cand]))][:k]


def _vote(labels: np.ndarray, dists: np.ndarray, cfg: KnnConfig, n_classes: int) -> int:
    votes = np.zeros(n_classes)
    w = 1.0 / (dists + cfg.epsilon) if cfg.weighting == "inverse-distance" else np.ones(len(dists))
    for lab, wt in zip(labels, w):
        votes[lab] += wt
    return int(np.argmax(votes))  # first max == smallest label


def knn_predict_many(space: EmbeddingSpace, queries: np.ndarray, cfg: KnnConfig,
                     n_classes: int = N_CLASSES, block: int = 512) -> np.ndarray:
    if len(space.labels) == 0:
        raise ValueError("cannot classify against an empty space")
    queries = np.atleast_2d(queries)
    out = np.empty(len(queries), dtype=np.int64)
    labels = np.asarray(space.labels, dtype=np.int64)
    k = min(cfg.k, len(labels))
    for start in range(0, len(queries), block):
        d = pairwise_distances(queries[start : start + block], space.vectors, cfg.metric)
        for i, row in enumerate(d):
            nn = _neighbours(row, k)
            out[start + i] = _vote(labels[nn], row[nn], cfg, n_classes)
    return out


def knn_predict(space: EmbeddingSpace, query: np.ndarray, cfg: KnnConfig, n_classes: int = N_CLASSES) -> int:
    return int(knn_predict_many(space, np.asarray(query)[None, :], cfg, n_classes)[0])


@dataclass
class EvalReport:
    accuracy_mean: float
    accuracy_std: float
    per_class_accuracy: list
    confusion: list
    repeats: int
    repeat_accuracies: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def csv_header(self) -> str:
        return ",".join(["accuracy_mean", "accuracy_std", "repeats"] + [f"class_{c}" for c in range(len(self.per_class_accuracy))])

    def csv_row(self) -> str:
        vals = [self.accuracy_mean, self.accuracy_std, self.repeats] + list(self.per_class_accuracy)
        return ",".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in vals)


def report_from_predictions(per_repeat: list[tuple[np.ndarray, np.ndarray]], n_classes: int = N_CLASSES) -> EvalReport:
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    accs = []
    for truth, pred in per_repeat:
        np.add.at(confusion, (truth, pred), 1)
        accs.append(float(np.mean(truth == pred)))
    totals = confusion.sum(1)
    per_class = np.divide(np.diag(confusion), totals, out=np.zeros(n_classes), where=totals > 0)
    return EvalReport(
        accuracy_mean=float(np.trace(confusion) / confusion.sum()),
        accuracy_std=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        per_class_accuracy=[float(x) for x in per_class],
        confusion=confusion.tolist(),
        repeats=len(per_repeat),
        repeat_accuracies=accs,
    )


def evaluate(items: EmbeddingSpace, plan: SplitPlan, cfg: KnnConfig, n_classes: int = N_CLASSES) -> EvalReport:
    """Repeat: build the space from the embedding split, classify the query split."""
    labels = np.asarray(items.labels, dtype=np.int64)
    plan.check(len(labels))
    per_repeat = []
    for r in range(plan.repeats):
        emb, qry = split_indices(len(labels), plan, r)
        space = EmbeddingSpace(items.vectors[emb], labels[emb], cfg.metric, items.item_kind)
        pred = knn_predict_many(space, items.vectors[qry], cfg, n_classes)
        per_repeat.append((labels[qry], pred))
    return report_from_predictions(per_repeat, n_classes)


def accuracy_vs_time(trajectories, labels, plan: SplitPlan, cfg: KnnConfig,
                     sample_times=None) -> dict[float, EvalReport]:
    """Evaluate each snapshot time independently.

    ``trajectories`` is a list of WeightTrajectory or an array shaped
    (items, samples, edges) together with ``sample_times``.
    """
    if isinstance(trajectories, np.ndarray):
        if sample_times is None:
            raise ValueError("sample_times required with an array of trajectories")
        stack = trajectories
        times = np.asarray(sample_times, dtype=np.float64)
        if stack.ndim != 3 or stack.shape[1] != len(times):
            raise ValueError("trajectory array must be (items, samples, edges)")
    else:
        times = np.asarray(trajectories[0].sample_times)
        for tr in trajectories:
            if len(tr.sample_times) != len(times) or not np.allclose(tr.sample_times, times) \
                    or tr.vectors.shape != trajectories[0].vectors.shape:
                raise ValueError("trajectories are ragged or sampled at different times")
        stack = np.stack([tr.vectors for tr in trajectories])
    out = {}
    for j, t in enumerate(times):
        space = EmbeddingSpace(np.asarray(stack[:, j, :], dtype=np.float64), labels, cfg.metric, "weight-vector")
        out[float(t)] = evaluate(space, plan, cfg)
    return out
