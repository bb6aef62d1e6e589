"""Deterministic event-driven competitive-refractory dynamics.

Time is integer ticks. Pending work is processed in ``(tick, dst, code)``
order where code 0 is a window-expiry check, code 1 a forced (stimulus)
activation and ``edge + 2`` an impulse on ``edge``. Because edges
are stored in (src, dst) order, ordering by edge id at a fixed dst is the
same as ordering by src.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .netgen import GeometricNetwork

NEVER = -(1 << 60)
NO_LIMIT = (1 << 62)

TRIGGER_EXPIRY = 0
TRIGGER_FORCED = 1
TRIGGER_ARRIVAL = 2


class HorizonError(ValueError):
    pass


def to_ticks(ms: float, tick: float) -> int:
    n = ms / tick
    r = int(round(n))
    if abs(n - r) > 1e-6:
        raise HorizonError(f"{ms} ms is not a whole number of {tick} ms ticks")
    return r


@dataclass(frozen=True)
class StimulusSchedule:
    """Which input nodes are driven, and when.

    ``single-volley`` fires every active pixel once at t=0; ``tonic`` repeats
    the volley every ``period`` ms strictly before the horizon. ``explicit``
    lists (time_ms, node_id) pairs directly and is mainly for small nets.
    """

    pixels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    mode: str = "single-volley"
    period: float = 10.0
    explicit: tuple = ()

    def __post_init__(self):
        if self.mode not in ("single-volley", "tonic", "explicit"):
            raise ValueError(f"unknown stimulus mode {self.mode!r}")
        if self.mode == "tonic" and self.period <= 0:
            raise ValueError("tonic period must be positive")

    def forced(self, net: GeometricNetwork, horizon_ticks: int) -> tuple[np.ndarray, np.ndarray]:
        if self.mode == "explicit":
            pairs = sorted({(to_ticks(t, net.tick), int(v)) for t, v in self.explicit})
            pairs = [(t, v) for t, v in pairs if t <= horizon_ticks]
            ticks = np.array([p[0] for p in pairs], dtype=np.int64)
            nodes = np.array([p[1] for p in pairs], dtype=np.int64)
            return ticks, nodes
        pix = np.unique(np.asarray(self.pixels, dtype=np.int64))
        if len(pix) and (pix[0] < 0 or pix[-1] >= len(net.input_ids)):
            raise ValueError("stimulus pixel outside the input block")
        nodes = net.input_ids[pix]
        if self.mode == "single-volley":
            starts = np.zeros(1, dtype=np.int64)
        else:
            step = to_ticks(self.period, net.tick)
            starts = np.arange(0, horizon_ticks, step, dtype=np.int64)
        ticks = np.repeat(starts, len(nodes))
        return ticks, np.tile(nodes, len(starts))


@dataclass(frozen=True)
class StdpParams:
    a_plus: float = 0.01
    a_minus: float = 0.012
    tau_plus: float = 20.0  # ms
    tau_minus: float = 20.0  # ms
    w_max: float = 2.0
    pairing: str = "nearest"
    pair_window_taus: float = 5.0

    def __post_init__(self):
        if self.a_plus < 0 or self.a_minus < 0:
            raise ValueError("STDP amplitudes must be non-negative")
        if self.tau_plus <= 0 or self.tau_minus <= 0 or self.w_max <= 0:
            raise ValueError("STDP time constants and w_max must be positive")
        if self.pairing != "nearest":
            raise ValueError("only nearest-neighbour pairing is supported")

    @property
    def pair_window(self) -> float:
        return self.pair_window_taus * max(self.tau_plus, self.tau_minus)


@dataclass
class ActivationTrace:
    """Time-ordered activation events plus the impulses that caused them.

    ``contrib_ticks`` (arrival time per contributor) and ``triggers`` are kept
    in memory only; the binary form carries node, time and edge ids.
    """

    nodes: np.ndarray
    ticks: np.ndarray
    contrib_ptr: np.ndarray
    contrib_edges: np.ndarray
    horizon_ticks: int
    tick: float
    stimulus_id: str = ""
    contrib_ticks: np.ndarray | None = None
    triggers: np.ndarray | None = None
    steps: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.tick

    def contributors(self, i: int) -> np.ndarray:
        return self.contrib_edges[self.contrib_ptr[i] : self.contrib_ptr[i + 1]]

    def to_bytes(self) -> bytes:
        parts = [struct.pack("<Q", len(self.nodes))]
        for i in range(len(self.nodes)):
            c = self.contributors(i)
            parts.append(struct.pack("<IQH", int(self.nodes[i]), int(self.ticks[i]), len(c)))
            parts.append(np.asarray(c, dtype="<u4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes, tick: float = 0.1, horizon_ticks: int = 0, stimulus_id: str = "") -> "ActivationTrace":
        (n,) = struct.unpack_from("<Q", buf, 0)
        off = 8
        nodes = np.empty(n, dtype=np.int64)
        ticks = np.empty(n, dtype=np.int64)
        ptr = np.zeros(n + 1, dtype=np.int64)
        edges = []
        for i in range(n):
            nodes[i], ticks[i], c = struct.unpack_from("<IQH", buf, off)
            off += 14
            edges.append(np.frombuffer(buf, dtype="<u4", count=c, offset=off).astype(np.int64))
            off += 4 * c
            ptr[i + 1] = ptr[i] + c
        if off != len(buf):
            raise ValueError("trailing bytes after trace payload")
        contrib = np.concatenate(edges) if edges else np.zeros(0, dtype=np.int64)
        return cls(nodes, ticks, ptr, contrib, horizon_ticks, tick, stimulus_id)

    def to_json(self) -> str:
        return json.dumps(
            {
                "stimulus_id": self.stimulus_id,
                "tick_ms": self.tick,
                "horizon_ticks": int(self.horizon_ticks),
                "events": [
                    {"node": int(self.nodes[i]), "tick": int(self.ticks[i]), "edges": self.contributors(i).tolist()}
                    for i in range(len(self.nodes))
                ],
            },
            indent=1,
        )


@dataclass
class RunResult:
    trace: ActivationTrace
    weights: np.ndarray
    snapshot_ticks: np.ndarray
    snapshots: np.ndarray  # (n_samples, n_snapshot_edges)


# --- kernel ---------------------------------------------------------------


@njit(cache=True)
def _grow1(a, need):
    if need <= a.shape[0]:
        return a
    size = a.shape[0] * 2
    while size < need:
        size *= 2
    b = np.empty(size, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _push(bk, blen, slot, key):
    n = blen[slot]
    if n == bk.shape[1]:
        bigger = np.empty((bk.shape[0], bk.shape[1] * 2), dtype=np.int64)
        bigger[:, : bk.shape[1]] = bk
        bk = bigger
    bk[slot, n] = key
    blen[slot] = n + 1
    return bk


@njit(cache=True)
def _simulate(
    n_nodes, out_ptr, dst, delays, weights, thresholds, refractory, in_ptr, in_edges,
    forced_ticks, forced_nodes, horizon, window, max_steps, max_events,
    stdp_on, plastic, a_plus, a_minus, tau_plus_t, tau_minus_t, w_max, pair_window,
    snap_every, snap_edges,
):
    # Calendar queue: one bucket per tick on a ring longer than any scheduling
    # offset (delays and expiry checks are >= 1 tick). A bucket is sorted by
    # (dst, code) when its tick comes up, which reproduces (tick, dst, code) order.
    n_edges = dst.shape[0]
    stride = n_edges + 2
    max_off = window
    for e in range(n_edges):
        if delays[e] > max_off:
            max_off = delays[e]
    ring = max_off + 1
    bk = np.empty((ring, 64), dtype=np.int64)
    blen = np.zeros(ring, dtype=np.int64)
    pending = 0
    fi = 0
    n_forced = forced_ticks.shape[0]

    ref_until = np.full(n_nodes, NEVER, dtype=np.int64)
    last_post = np.full(n_nodes, NEVER, dtype=np.int64)
    last_pre = np.full(n_edges if stdp_on else 1, NEVER, dtype=np.int64)

    cap = 16
    buf_tick = np.empty((n_nodes, cap), dtype=np.int64)
    buf_edge = np.empty((n_nodes, cap), dtype=np.int64)
    buf_mag = np.empty((n_nodes, cap), dtype=np.float64)
    buf_len = np.zeros(n_nodes, dtype=np.int64)

    ev_node = np.empty(1024, dtype=np.int64)
    ev_tick = np.empty(1024, dtype=np.int64)
    ev_trig = np.empty(1024, dtype=np.int64)
    cptr = np.zeros(1025, dtype=np.int64)
    c_edge = np.empty(4096, dtype=np.int64)
    c_tick = np.empty(4096, dtype=np.int64)
    n_ev = 0
    n_c = 0

    n_snap = horizon // snap_every if snap_every > 0 else 0
    snaps = np.empty((n_snap, snap_edges.shape[0]), dtype=np.float64)
    snap_ticks = np.empty(n_snap, dtype=np.int64)
    k_snap = 0

    steps = 0
    t = 0
    stop = False
    while not stop:
        if pending == 0:
            if fi >= n_forced:
                break
            if forced_ticks[fi] > t:
                t = forced_ticks[fi]
        if t > horizon:
            break
        slot = t % ring
        while fi < n_forced and forced_ticks[fi] == t:
            bk = _push(bk, blen, slot, forced_nodes[fi] * stride + 1)
            pending += 1
            fi += 1
        L_b = blen[slot]
        if L_b == 0:
            t += 1
            continue
        while k_snap < n_snap and t > (k_snap + 1) * snap_every:
            for j in range(snap_edges.shape[0]):
                snaps[k_snap, j] = weights[snap_edges[j]]
            snap_ticks[k_snap] = (k_snap + 1) * snap_every
            k_snap += 1
        keys = np.sort(bk[slot, :L_b])
        blen[slot] = 0
        pending -= L_b

        for key in keys:
            if steps >= max_steps or n_ev >= max_events:
                stop = True
                break
            steps += 1
            code = key % stride
            v = key // stride

            fire = False
            trig = code if code < 2 else 2
            if code >= 2:
                e = code - 2
                if stdp_on:
                    if plastic[e] and last_post[v] != NEVER:
                        dt = t - last_post[v]
                        if dt > 0 and dt <= pair_window:
                            w = weights[e] - a_minus * math.exp(-dt / tau_minus_t)
                            weights[e] = max(-w_max, min(w_max, w))
                    last_pre[e] = t
                if t >= ref_until[v]:
                    # expire, append, test
                    L = buf_len[v]
                    s = 0
                    while s < L and buf_tick[v, s] <= t - window:
                        s += 1
                    if s > 0:
                        for q in range(s, L):
                            buf_tick[v, q - s] = buf_tick[v, q]
                            buf_edge[v, q - s] = buf_edge[v, q]
                            buf_mag[v, q - s] = buf_mag[v, q]
                        L -= s
                    if L == cap:
                        cap *= 2
                        nt = np.empty((n_nodes, cap), dtype=np.int64)
                        ne = np.empty((n_nodes, cap), dtype=np.int64)
                        nm = np.empty((n_nodes, cap), dtype=np.float64)
                        nt[:, : cap // 2] = buf_tick
                        ne[:, : cap // 2] = buf_edge
                        nm[:, : cap // 2] = buf_mag
                        buf_tick, buf_edge, buf_mag = nt, ne, nm
                    mag = weights[e]
                    buf_tick[v, L] = t
                    buf_edge[v, L] = e
                    buf_mag[v, L] = mag
                    L += 1
                    buf_len[v] = L
                    total = 0.0
                    for q in range(L):
                        total += buf_mag[v, q]
                    if total >= thresholds[v]:
                        fire = True
                    elif mag < 0.0:
                        at = t + window
                        if at <= horizon:
                            bk = _push(bk, blen, at % ring, v * stride)
                            pending += 1
            elif code == 1:
                fire = t >= ref_until[v]
                if fire:
                    buf_len[v] = 0
            else:
                if t >= ref_until[v] and buf_len[v] > 0:
                    L = buf_len[v]
                    s = 0
                    while s < L and buf_tick[v, s] <= t - window:
                        s += 1
                    if s > 0:
                        for q in range(s, L):
                            buf_tick[v, q - s] = buf_tick[v, q]
                            buf_edge[v, q - s] = buf_edge[v, q]
                            buf_mag[v, q - s] = buf_mag[v, q]
                        L -= s
                        buf_len[v] = L
                        if L > 0:
                            total = 0.0
                            for q in range(L):
                                total += buf_mag[v, q]
                            fire = total >= thresholds[v]

            if not fire:
                continue

            # record activation
            ev_node = _grow1(ev_node, n_ev + 1)
            ev_tick = _grow1(ev_tick, n_ev + 1)
            ev_trig = _grow1(ev_trig, n_ev + 1)
            cptr = _grow1(cptr, n_ev + 2)
            L = buf_len[v]
            c_edge = _grow1(c_edge, n_c + L)
            c_tick = _grow1(c_tick, n_c + L)
            for q in range(L):
                c_edge[n_c + q] = buf_edge[v, q]
                c_tick[n_c + q] = buf_tick[v, q]
            n_c += L
            ev_node[n_ev] = v
            ev_tick[n_ev] = t
            ev_trig[n_ev] = trig
            n_ev += 1
            cptr[n_ev] = n_c
            buf_len[v] = 0
            ref_until[v] = t + refractory[v]

            if stdp_on:
                for q in range(in_ptr[v], in_ptr[v + 1]):
                    e = in_edges[q]
                    if plastic[e] and last_pre[e] != NEVER:
                        dt = t - last_pre[e]
                        if dt > 0 and dt <= pair_window:
                            w = weights[e] + a_plus * math.exp(-dt / tau_plus_t)
                            weights[e] = max(-w_max, min(w_max, w))
                last_post[v] = t

            for e in range(out_ptr[v], out_ptr[v + 1]):
                at = t + delays[e]
                if at <= horizon:
                    bk = _push(bk, blen, at % ring, dst[e] * stride + e + 2)
                    pending += 1
        t += 1

    while k_snap < n_snap:
        for j in range(snap_edges.shape[0]):
            snaps[k_snap, j] = weights[snap_edges[j]]
        snap_ticks[k_snap] = (k_snap + 1) * snap_every
        k_snap += 1

    return (ev_node[:n_ev].copy(), ev_tick[:n_ev].copy(), ev_trig[:n_ev].copy(), cptr[: n_ev + 1].copy(),
            c_edge[:n_c].copy(), c_tick[:n_c].copy(), snaps, snap_ticks, steps)


class CompiledNetwork:
    """Index arrays the kernel needs, computed once per network template."""

    def __init__(self, net: GeometricNetwork):
        net.validate()
        self.net = net
        self.out_ptr = net.out_ptr()
        self.in_ptr, self.in_edges = net.in_index()


def run(
    net: GeometricNetwork | CompiledNetwork,
    schedule: StimulusSchedule,
    horizon: float,
    *,
    summation_window: float = 2.0,
    stdp: StdpParams | None = None,
    plastic: np.ndarray | None = None,
    snapshot_every: float | None = None,
    snapshot_edges: np.ndarray | None = None,
    weights: np.ndarray | None = None,
    max_steps: int | None = None,
    max_events: int | None = None,
    stimulus_id: str = "",
) -> RunResult:
    """Simulate one stimulation of ``net`` until the heap drains or a cap is hit.

    The network template is never modified; weights are copied into the run
    (or taken from ``weights``) and returned in ``RunResult.weights``.
    """
    compiled = net if isinstance(net, CompiledNetwork) else CompiledNetwork(net)
    net = compiled.net
    if horizon <= 0:
        raise HorizonError("horizon must be positive")
    h = to_ticks(horizon, net.tick)
    w_ticks = to_ticks(summation_window, net.tick)
    if w_ticks < 1:
        raise ValueError("summation window must span at least one tick")
    if net.n_nodes * (net.n_edges + 2) >= (1 << 62):
        raise ValueError("network too large for the event key encoding")
    ft, fn = schedule.forced(net, h)
    order = np.lexsort((fn, ft))
    ft, fn = np.ascontiguousarray(ft[order]), np.ascontiguousarray(fn[order])

    w = np.array(net.weights if weights is None else weights, dtype=np.float64, copy=True)
    if w.shape != net.weights.shape:
        raise ValueError("weights do not match the network's edge count")
    stdp_on = stdp is not None
    p = stdp or StdpParams()
    if plastic is None:
        plastic = np.ones(net.n_edges, dtype=np.bool_)
    plastic = np.asarray(plastic, dtype=np.bool_)
    if snapshot_every:
        every = to_ticks(snapshot_every, net.tick)
        if h % every:
            raise HorizonError("snapshot interval must divide the horizon")
    else:
        every = 0
    snap_edges = np.arange(net.n_edges, dtype=np.int64) if snapshot_edges is None else np.asarray(snapshot_edges, dtype=np.int64)

    out = _simulate(
        net.n_nodes, compiled.out_ptr, net.dst, net.delays, w, net.thresholds, net.refractory_ticks,
        compiled.in_ptr, compiled.in_edges, ft, fn, h, w_ticks,
        NO_LIMIT if max_steps is None else int(max_steps),
        NO_LIMIT if max_events is None else int(max_events),
        stdp_on, plastic, p.a_plus, p.a_minus, p.tau_plus / net.tick, p.tau_minus / net.tick, p.w_max,
        int(math.floor(p.pair_window / net.tick + 1e-9)), every, snap_edges,
    )
    ev_node, ev_tick, ev_trig, cptr, c_edge, c_tick, snaps, snap_ticks, steps = out
    trace = ActivationTrace(ev_node, ev_tick, cptr, c_edge, h, net.tick, stimulus_id, c_tick, ev_trig, int(steps))
    return RunResult(trace, w, snap_ticks, snaps)


def simulate(net, schedule: StimulusSchedule, horizon: float, **kw) -> ActivationTrace:
    return run(net, schedule, horizon, **kw).trace


def quiescence_time(trace: ActivationTrace) -> float:
    """Time (ms) of the last activation, 0 for an empty trace."""
    if len(trace) == 0:
        return 0.0
    return float(trace.ticks[-1] * trace.tick)
