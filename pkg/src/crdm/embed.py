"""Graph-token skip-gram embeddings over temporal-path corpora, and PCA projection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit


@dataclass
class EmbeddingSpace:
    vectors: np.ndarray
    labels: np.ndarray
    metric: str = "euclidean"
    item_kind: str = "graph"

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.vectors):
            raise ValueError("one label per row required")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains NaN or Inf")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.dim)] + ["label"])
            for row, lab in zip(self.vectors, self.labels):
                w.writerow([repr(float(v)) for v in row] + [int(lab)])

    @classmethod
    def from_csv(cls, path, metric: str = "euclidean", item_kind: str = "graph") -> "EmbeddingSpace":
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(raw[:, :-1], raw[:, -1].astype(np.int64), metric, item_kind)


@dataclass
class PathCorpus:
    """Per-graph path documents. Node tokens come first in the vocabulary, then one token per graph."""

    graph_ids: list
    doc_ptr: np.ndarray  # paths of document d: doc_ptr[d]:doc_ptr[d+1]
    path_ptr: np.ndarray
    path_nodes: np.ndarray

    @classmethod
    def from_documents(cls, documents) -> "PathCorpus":
        """``documents``: iterable of (graph_id, PathSet or list of node sequences)."""
        ids, doc_ptr, path_ptr, chunks = [], [0], [0], []
        for gid, paths in documents:
            ids.append(gid)
            seqs = [paths[i] for i in range(len(paths))] if hasattr(paths, "ptr") else paths
            for p in seqs:
                p = np.asarray(p, dtype=np.int64)
                if len(p) < 2:
                    raise ValueError("paths must contain at least two nodes")
                chunks.append(p)
                path_ptr.append(path_ptr[-1] + len(p))
            doc_ptr.append(len(path_ptr) - 1)
        nodes = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        return cls(ids, np.asarray(doc_ptr, np.int64), np.asarray(path_ptr, np.int64), nodes)

    @property
    def n_docs(self) -> int:
        return len(self.graph_ids)

    @property
    def n_paths(self) -> int:
        return len(self.path_ptr) - 1

    def node_vocabulary(self) -> np.ndarray:
        return np.unique(self.path_nodes)

    def document(self, d: int) -> list[np.ndarray]:
        return [self.path_nodes[self.path_ptr[p] : self.path_ptr[p + 1]] for p in range(self.doc_ptr[d], self.doc_ptr[d + 1])]


@njit(cache=True)
def _rand(state):
    # word2vec-style 48-bit LCG; returns (new_state, value in [0, 2^16))
    state = (state * 25214903917 + 11) & 0xFFFFFFFFFFFF
    return state, (state >> 16) & 0xFFFF


@njit(cache=True)
def _sgns_pair(syn0, syn1, inp, out, negatives, table, alpha, state, neu1e):
    dim = syn0.shape[1]
    loss = 0.0
    for q in range(dim):
        neu1e[q] = 0.0
    for d in range(negatives + 1):
        if d == 0:
            target = out
            label = 1.0
        else:
            state, r = _rand(state)
            state, r2 = _rand(state)
            target = table[((r << 16) | r2) % table.shape[0]]
            if target == out:
                continue
            label = 0.0
        f = 0.0
        for q in range(dim):
            f += syn0[inp, q] * syn1[target, q]
        if f > 30.0:
            sig = 1.0
        elif f < -30.0:
            sig = 0.0
        else:
            sig = 1.0 / (1.0 + math.exp(-f))
        p = sig if label == 1.0 else 1.0 - sig
        loss -= math.log(max(p, 1e-12))
        g = (label - sig) * alpha
        for q in range(dim):
            neu1e[q] += g * syn1[target, q]
        for q in range(dim):
            syn1[target, q] += g * syn0[inp, q]
    for q in range(dim):
        syn0[inp, q] += neu1e[q]
    return state, loss


@njit(cache=True)
def _train(doc_ptr, path_ptr, tokens, doc_token, n_vocab, dim, window, negatives, epochs,
           lr0, seed, table, train_words, graph_pairs_per_token):
    state = np.int64(seed) & 0xFFFFFFFFFFFF
    syn0 = np.empty((n_vocab, dim))
    for i in range(n_vocab):
        for q in range(dim):
            state, r = _rand(state)
            syn0[i, q] = (r / 65536.0 - 0.5) / dim
    syn1 = np.zeros((n_vocab, dim))
    neu1e = np.empty(dim)
    n_tok = tokens.shape[0]
    total = epochs * n_tok
    done = 0
    losses = np.zeros(epochs)
    for ep in range(epochs):
        ep_loss = 0.0
        ep_pairs = 0
        for d in range(doc_ptr.shape[0] - 1):
            gtok = doc_token[d]
            for p in range(doc_ptr[d], doc_ptr[d + 1]):
                a, b = path_ptr[p], path_ptr[p + 1]
                for i in range(a, b):
                    alpha = lr0 * max(1e-4, 1.0 - done / (total + 1.0))
                    done += 1
                    for _ in range(graph_pairs_per_token):
                        state, l = _sgns_pair(syn0, syn1, gtok, tokens[i], negatives, table, alpha, state, neu1e)
                        ep_loss += l
                        ep_pairs += 1
                    if train_words:
                        lo = max(a, i - window)
                        hi = min(b, i + window + 1)
                        for j in range(lo, hi):
                            if j == i:
                                continue
                            state, l = _sgns_pair(syn0, syn1, tokens[j], tokens[i], negatives, table, alpha, state, neu1e)
                            ep_loss += l
                            ep_pairs += 1
        losses[ep] = ep_loss / max(ep_pairs, 1)
    return syn0, losses


@dataclass
class GraphEmbedding:
    space: EmbeddingSpace
    node_vectors: np.ndarray
    node_ids: np.ndarray
    epoch_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))


def train_graph_embeddings(
    corpus: PathCorpus,
    labels=None,
    *,
    dim: int = 64,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 1,
    train_words: bool = True,
    table_size: int = 1_000_000,
) -> GraphEmbedding:
    """Skip-gram with negative sampling where each graph token joins every context.

    Documents are visited in sorted graph-id order so results do not depend
    on the order documents were supplied in; rows come back in input order.
    The learning rate decays linearly over all tokens of all epochs.
    """
    if corpus.n_docs == 0 or len(corpus.path_nodes) == 0:
        raise ValueError("empty corpus")
    node_ids = corpus.node_vocabulary()
    tok = np.searchsorted(node_ids, corpus.path_nodes).astype(np.int64)
    n_nodes = len(node_ids)

    order = sorted(range(corpus.n_docs), key=lambda d: corpus.graph_ids[d])
    doc_ptr = [0]
    path_ptr = [0]
    toks = []
    for d in order:
        for p in range(corpus.doc_ptr[d], corpus.doc_ptr[d + 1]):
            seg = tok[corpus.path_ptr[p] : corpus.path_ptr[p + 1]]
            toks.append(seg)
            path_ptr.append(path_ptr[-1] + len(seg))
        doc_ptr.append(len(path_ptr) - 1)
    tokens = np.concatenate(toks)
    rank = np.empty(corpus.n_docs, dtype=np.int64)
    rank[np.asarray(order)] = np.arange(corpus.n_docs)
    doc_token = n_nodes + np.arange(corpus.n_docs, dtype=np.int64)

    counts = np.bincount(tokens, minlength=n_nodes).astype(np.float64) ** 0.75
    cum = np.cumsum(counts / counts.sum())
    table = np.searchsorted(cum, (np.arange(table_size) + 0.5) / table_size).astype(np.int64)
    table = np.minimum(table, n_nodes - 1)

    syn0, losses = _train(np.asarray(doc_ptr, np.int64), np.asarray(path_ptr, np.int64), tokens, doc_token,
                          n_nodes + corpus.n_docs, dim, window, negatives, epochs, lr, seed, table,
                          train_words, 1)
    graph_vecs = syn0[n_nodes + rank]
    labels = np.zeros(corpus.n_docs, dtype=np.int64) if labels is None else np.asarray(labels)
    space = EmbeddingSpace(graph_vecs, labels, "cosine", "graph")
    return GraphEmbedding(space, syn0[:n_nodes].copy(), node_ids, losses)


@dataclass
class PcaProjection:
    components: np.ndarray  # (k, dim), rows orthonormal
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    projected: np.ndarray  # (n, k)
    mean: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.projected @ self.components + self.mean

    def to_csv(self, path, labels) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"pc{i + 1}" for i in range(self.projected.shape[1])] + ["label"])
            for row, lab in zip(self.projected, labels):
                w.writerow([repr(float(v)) for v in row] + [int(lab)])


def pca(space: EmbeddingSpace | np.ndarray, k: int = 3) -> PcaProjection:
    x = space.vectors if isinstance(space, EmbeddingSpace) else np.atleast_2d(np.asarray(space, dtype=np.float64))
    n, dim = x.shape
    if not 1 <= k <= min(n, dim):
        raise ValueError(f"k={k} must be in [1, min(rows, dim)={min(n, dim)}]")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:k]
    # deterministic sign: largest-magnitude loading positive
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    var = s**2 / max(n - 1, 1)
    total = var.sum()
    ratio = var[:k] / total if total > 0 else np.zeros(k)
    return PcaProjection(comps, var[:k], ratio, xc @ comps.T, mean)


def write_pca_csv(proj: PcaProjection, labels, path) -> Path:
    proj.to_csv(path, labels)
    return Path(path)
