"""Causal temporal graphs extracted from activation traces, and walks through them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .engine import ActivationTrace
from .netgen import GeometricNetwork


@dataclass
class TemporalGraph:
    """Activation events as vertices; one arc per contributing impulse.

    ``arc_src``/``arc_dst`` index events, ``arc_edge`` is the network edge that
    carried the impulse and ``arc_tick`` the activation tick of the target.
    Arcs are sorted by (source event, target event, edge).
    """

    event_nodes: np.ndarray
    event_ticks: np.ndarray
    is_source: np.ndarray
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_edge: np.ndarray
    arc_tick: np.ndarray

    @property
    def n_events(self) -> int:
        return len(self.event_nodes)

    @property
    def n_arcs(self) -> int:
        return len(self.arc_src)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.arc_dst, minlength=self.n_events)

    def out_ptr(self) -> np.ndarray:
        return np.searchsorted(self.arc_src, np.arange(self.n_events + 1)).astype(np.int64)


def extract_temporal_graph(trace: ActivationTrace, net: GeometricNetwork) -> TemporalGraph:
    """Link every contributor back to the activation that emitted it.

    With in-memory traces the contributor arrival ticks are exact; for traces
    read back from bytes the emitting activation is the latest one of the
    source node no later than ``activation tick - delay``.
    """
    n = len(trace)
    nodes = np.asarray(trace.nodes, dtype=np.int64)
    ticks = np.asarray(trace.ticks, dtype=np.int64)
    is_input = np.zeros(net.n_nodes, dtype=bool)
    is_input[net.input_ids] = True
    empty = np.zeros(0, dtype=np.int64)
    if n == 0:
        return TemporalGraph(nodes, ticks, np.zeros(0, dtype=bool), empty, empty, empty, empty)

    counts = np.diff(trace.contrib_ptr)
    dst_ev = np.repeat(np.arange(n, dtype=np.int64), counts)
    edges = np.asarray(trace.contrib_edges, dtype=np.int64)
    src_node = net.src[edges]
    if trace.contrib_ticks is not None:
        emit = np.asarray(trace.contrib_ticks, dtype=np.int64) - net.delays[edges]
    else:
        emit = ticks[dst_ev] - net.delays[edges]

    span = int(ticks.max()) + 2
    order = np.lexsort((ticks, nodes))
    keys = nodes[order] * span + ticks[order]
    want = src_node * span + emit
    pos = np.searchsorted(keys, want, side="right") - 1
    ok = pos >= 0
    ok[ok] = nodes[order][pos[ok]] == src_node[ok]
    if trace.contrib_ticks is not None:
        ok[ok] = keys[pos[ok]] == want[ok]
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise ValueError(f"contributor edge {edges[bad]} has no emitting activation in the trace")
    src_ev = order[pos]

    arc_order = np.lexsort((edges, dst_ev, src_ev))
    return TemporalGraph(
        event_nodes=nodes,
        event_ticks=ticks,
        is_source=is_input[nodes],
        arc_src=src_ev[arc_order],
        arc_dst=dst_ev[arc_order],
        arc_edge=edges[arc_order],
        arc_tick=ticks[dst_ev][arc_order],
    )


@njit(cache=True)
def _walks(out_ptr, arc_dst, event_nodes, sources, max_len, prefixes, max_paths):
    path_nodes = np.empty(1024, dtype=np.int64)
    path_ptr = np.zeros(257, dtype=np.int64)
    n_paths = 0
    n_tok = 0
    stack_ev = np.empty(max_len, dtype=np.int64)
    stack_next = np.empty(max_len, dtype=np.int64)
    for s in sources:
        depth = 0
        stack_ev[0] = s
        stack_next[0] = out_ptr[s]
        depth = 1
        while depth > 0:
            ev = stack_ev[depth - 1]
            has_children = out_ptr[ev + 1] > out_ptr[ev]
            nxt = stack_next[depth - 1]
            first_visit = nxt == out_ptr[ev]
            # emit on first visit: maximal walks at leaves / length cap, prefixes when asked
            if first_visit and depth >= 2 and (prefixes or not has_children or depth == max_len):
                if n_paths + 1 >= path_ptr.shape[0]:
                    bigger = np.zeros(path_ptr.shape[0] * 2, dtype=np.int64)
                    bigger[: path_ptr.shape[0]] = path_ptr
                    path_ptr = bigger
                while n_tok + depth > path_nodes.shape[0]:
                    bigger2 = np.empty(path_nodes.shape[0] * 2, dtype=np.int64)
                    bigger2[:n_tok] = path_nodes[:n_tok]
                    path_nodes = bigger2
                for q in range(depth):
                    path_nodes[n_tok + q] = event_nodes[stack_ev[q]]
                n_tok += depth
                n_paths += 1
                path_ptr[n_paths] = n_tok
                if n_paths >= max_paths:
                    return path_ptr[: n_paths + 1].copy(), path_nodes[:n_tok].copy()
            if depth == max_len or nxt >= out_ptr[ev + 1]:
                depth -= 1
                continue
            stack_next[depth - 1] = nxt + 1
            child = arc_dst[nxt]
            stack_ev[depth] = child
            stack_next[depth] = out_ptr[child]
            depth += 1
    return path_ptr[: n_paths + 1].copy(), path_nodes[:n_tok].copy()


@dataclass
class PathSet:
    """Flattened node-id sequences: path i is ``nodes[ptr[i]:ptr[i+1]]``."""

    ptr: np.ndarray
    nodes: np.ndarray

    def __len__(self) -> int:
        return len(self.ptr) - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.nodes[self.ptr[i] : self.ptr[i + 1]]

    def as_tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(x) for x in self[i]) for i in range(len(self))]


def enumerate_paths(g: TemporalGraph, max_len: int = 8, *, prefixes: bool = False,
                    max_paths: int | None = None, sample_seed: int | None = None,
                    hidden_only: bool = False, enum_cap: int = 1_000_000) -> PathSet:
    """Time-respecting walks from input-block activations forward along causal arcs.

    By default only maximal walks are emitted: a walk ends at an event with no
    outgoing arcs or when it reaches ``max_len`` nodes. Order is deterministic:
    sources by (time, node), children by target event order.

    ``max_paths`` bounds the result. Without ``sample_seed`` the first walks in
    enumeration order are kept; with it, a seeded uniform subset (kept in
    enumeration order). Enumeration itself stops after ``enum_cap`` walks.
    ``hidden_only`` drops the leading input node of each walk (walks shorter
    than 2 after the cut are skipped).
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    sources = np.flatnonzero(g.is_source).astype(np.int64)
    cap = enum_cap if (max_paths and sample_seed is not None) else (max_paths or enum_cap)
    ptr, nodes = _walks(g.out_ptr(), g.arc_dst, g.event_nodes, sources, int(max_len), bool(prefixes), np.int64(cap))
    paths = PathSet(ptr, nodes)
    if hidden_only:
        paths = _select(paths, [i for i in range(len(paths)) if len(paths[i]) >= 3], drop_first=True)
    if max_paths and len(paths) > max_paths:
        if sample_seed is None:
            keep = np.arange(max_paths)
        else:
            keep = np.sort(np.random.default_rng(sample_seed).choice(len(paths), size=max_paths, replace=False))
        paths = _select(paths, keep)
    return paths


def _select(paths: PathSet, keep, drop_first: bool = False) -> PathSet:
    off = 1 if drop_first else 0
    chunks = [paths[i][off:] for i in keep]
    lens = np.array([len(c) for c in chunks], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    nodes = np.concatenate(chunks).astype(np.int64) if chunks else np.zeros(0, dtype=np.int64)
    return PathSet(ptr, nodes)
