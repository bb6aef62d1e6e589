"""Slow, independent re-implementations used as test oracles.

Nothing here imports the code paths under test beyond plain data containers.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np


def reference_simulate(net, forced, horizon_ticks, window_ticks, stdp=None, plastic=None):
    """Tick-stepped replay of the activation rule with per-node Python lists.

    ``forced``: iterable of (tick, node). ``stdp``: None or dict with a_plus,
    a_minus, tau_plus_ticks, tau_minus_ticks, w_max, pair_window_ticks.
    Returns (events, weights) where events are (node, tick, [contributor edges]).
    """
    n = len(net.thresholds)
    w = [float(x) for x in net.weights]
    src = [int(x) for x in net.src]
    dst = [int(x) for x in net.dst]
    delay = [int(x) for x in net.delays]
    out_edges = defaultdict(list)
    in_edges = defaultdict(list)
    for e in range(len(src)):
        out_edges[src[e]].append(e)
        in_edges[dst[e]].append(e)
    plastic = [True] * len(src) if plastic is None else [bool(x) for x in plastic]

    pending = defaultdict(list)  # tick -> [(node, order_code)]
    for t, v in set((int(t), int(v)) for t, v in forced):
        if t <= horizon_ticks:
            pending[t].append((v, -1))
    buffers = {v: [] for v in range(n)}  # (arrival, edge, magnitude)
    ref_until = [-(10**18)] * n
    last_post = [None] * n
    last_pre = [None] * len(src)
    events = []

    def fire(v, t):
        events.append((v, t, [e for _, e, _ in buffers[v]]))
        buffers[v] = []
        ref_until[v] = t + int(net.refractory_ticks[v])
        if stdp:
            for e in in_edges[v]:
                if plastic[e] and last_pre[e] is not None:
                    dt = t - last_pre[e]
                    if 0 < dt <= stdp["pair_window_ticks"]:
                        w[e] = max(-stdp["w_max"], min(stdp["w_max"], w[e] + stdp["a_plus"] * math.exp(-dt / stdp["tau_plus_ticks"])))
            last_post[v] = t
        for e in out_edges[v]:
            at = t + delay[e]
            if at <= horizon_ticks:
                pending[at].append((dst[e], e))

    for t in range(horizon_ticks + 1):
        todo = pending.pop(t, [])
        touched = sorted(set(v for v, _ in todo) | {v for v in range(n) if any(a == t - window_ticks for a, _, _ in buffers[v])})
        for v in touched:
            # expiries landing on this tick may lift the sum over threshold
            if t >= ref_until[v] and any(a == t - window_ticks for a, _, _ in buffers[v]):
                buffers[v] = [b for b in buffers[v] if b[0] > t - window_ticks]
                if buffers[v] and sum(m for _, _, m in buffers[v]) >= net.thresholds[v]:
                    fire(v, t)
            for _, code in sorted(c for c in todo if c[0] == v):
                if code == -1:
                    if t >= ref_until[v]:
                        buffers[v] = []
                        fire(v, t)
                    continue
                e = code
                if stdp:
                    if plastic[e] and last_post[v] is not None:
                        dt = t - last_post[v]
                        if 0 < dt <= stdp["pair_window_ticks"]:
                            w[e] = max(-stdp["w_max"], min(stdp["w_max"], w[e] - stdp["a_minus"] * math.exp(-dt / stdp["tau_minus_ticks"])))
                    last_pre[e] = t
                if t < ref_until[v]:
                    continue
                buffers[v] = [b for b in buffers[v] if b[0] > t - window_ticks]
                buffers[v].append((t, e, w[e]))
                total = 0.0
                for _, _, m in buffers[v]:
                    total += m
                if total >= net.thresholds[v]:
                    fire(v, t)
    events.sort(key=lambda ev: (ev[1], ev[0]))
    return events, np.array(w)


def brute_force_paths(event_nodes, arcs, sources, max_len):
    """All maximal walks (as node sequences, with multiplicity) by plain recursion."""
    children = defaultdict(list)
    for a, b in arcs:
        children[a].append(b)
    out = []

    def walk(path):
        kids = children.get(path[-1], [])
        if len(path) == max_len or not kids:
            if len(path) >= 2:
                out.append(tuple(int(event_nodes[e]) for e in path))
            return
        for k in kids:
            walk(path + [k])

    for s in sources:
        walk([s])
    return out


def knn_oracle(items, labels, query, k, metric, weighting, eps):
    """Quadratic scan with explicit loops."""
    dists = []
    for i, x in enumerate(items):
        if metric == "cosine":
            nx, nq = math.sqrt(sum(v * v for v in x)), math.sqrt(sum(v * v for v in query))
            sim = 0.0 if nx == 0 or nq == 0 else sum(a * b for a, b in zip(x, query)) / (nx * nq)
            d = 1.0 - sim
        else:
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, query)))
        dists.append((d, i))
    dists.sort()
    votes = defaultdict(float)
    for d, i in dists[:k]:
        votes[int(labels[i])] += 1.0 / (d + eps) if weighting == "inverse-distance" else 1.0
    best = max(votes.values())
    return min(c for c, v in votes.items() if v == best)
