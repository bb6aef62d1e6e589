"""Geometric network construction: two-block SBM and input + recurrent reservoir."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import N_PIXELS

FORMAT_VERSION = 1


@dataclass(frozen=True)
class PhysiologyConfig:
    tick: float = 0.1  # ms
    refractory_period: float = 5.0  # ms
    threshold: float = 1.0
    w_lo: float = 0.4
    w_hi: float = 0.8
    velocity: float = 0.09  # unit-cube lengths per ms; longest diagonal ~19 ms
    excitatory_fraction: float = 0.7
    # per-block multipliers on |weight|; 1.0 keeps the plain U(w_lo, w_hi) ranges
    input_gain: float = 1.0
    hidden_gain: float = 1.0

    def validate(self) -> None:
        if not 0 < self.w_lo < self.w_hi:
            raise ValueError(f"need 0 < w_lo < w_hi, got ({self.w_lo}, {self.w_hi})")
        if self.velocity <= 0:
            raise ValueError("velocity must be positive")
        if self.tick <= 0 or self.refractory_period <= 0 or self.threshold <= 0:
            raise ValueError("tick, refractory_period and threshold must be positive")
        if not 0 <= self.excitatory_fraction <= 1:
            raise ValueError("excitatory_fraction must be in [0, 1]")
        if self.input_gain <= 0 or self.hidden_gain <= 0:
            raise ValueError("gains must be positive")


@dataclass
class GeometricNetwork:
    """Nodes and directed edges in canonical (src, dst) order.

    Times are stored in integer ticks; ``tick`` converts them to ms.
    """

    positions: np.ndarray  # (N, 3)
    refractory_ticks: np.ndarray  # (N,) int64
    thresholds: np.ndarray  # (N,)
    src: np.ndarray  # (E,) int64
    dst: np.ndarray  # (E,) int64
    weights: np.ndarray  # (E,)
    delays: np.ndarray  # (E,) int64 ticks, >= 1
    input_ids: np.ndarray
    hidden_ids: np.ndarray
    layout: str
    seed: int
    tick: float = 0.1
    config: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.thresholds)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def copy(self) -> "GeometricNetwork":
        return replace(self, weights=self.weights.copy())

    def with_weights(self, weights: np.ndarray) -> "GeometricNetwork":
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != self.weights.shape:
            raise ValueError("weight vector does not match edge count")
        return replace(self, weights=weights.copy())

    def out_ptr(self) -> np.ndarray:
        return np.searchsorted(self.src, np.arange(self.n_nodes + 1)).astype(np.int64)

    def in_index(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR over incoming edges: (ptr, edge ids sorted by (dst, src))."""
        order = np.lexsort((self.src, self.dst)).astype(np.int64)
        ptr = np.searchsorted(self.dst[order], np.arange(self.n_nodes + 1)).astype(np.int64)
        return ptr, order

    def hidden_edge_mask(self) -> np.ndarray:
        is_hidden = np.zeros(self.n_nodes, dtype=bool)
        is_hidden[self.hidden_ids] = True
        return is_hidden[self.src] & is_hidden[self.dst]

    def validate(self) -> None:
        n = self.n_nodes
        if len(self.src) and (self.src.min() < 0 or self.dst.min() < 0 or max(self.src.max(), self.dst.max()) >= n):
            raise ValueError("edge endpoint out of range")
        key = self.src * n + self.dst
        if np.any(np.diff(key) <= 0):
            raise ValueError("edges are not in strict canonical (src, dst) order")
        if np.any(self.delays < 1):
            raise ValueError("edge delays must be at least one tick")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite edge weight")
        if np.any(self.refractory_ticks < 1) or np.any(self.thresholds <= 0):
            raise ValueError("refractory periods and thresholds must be positive")

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "layout": self.layout,
            "seed": int(self.seed),
            "tick": self.tick,
            "config": self.config,
            "input_ids": self.input_ids.tolist(),
            "hidden_ids": self.hidden_ids.tolist(),
            "nodes": {
                "positions": self.positions.tolist(),
                "refractory_ticks": self.refractory_ticks.tolist(),
                "thresholds": self.thresholds.tolist(),
            },
            "edges": {
                "src": self.src.tolist(),
                "dst": self.dst.tolist(),
                "weight": self.weights.tolist(),
                "delay_ticks": self.delays.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GeometricNetwork":
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format version {doc.get('version')}")
        nodes, edges = doc["nodes"], doc["edges"]
        net = cls(
            positions=np.asarray(nodes["positions"], dtype=np.float64).reshape(-1, 3),
            refractory_ticks=np.asarray(nodes["refractory_ticks"], dtype=np.int64),
            thresholds=np.asarray(nodes["thresholds"], dtype=np.float64),
            src=np.asarray(edges["src"], dtype=np.int64),
            dst=np.asarray(edges["dst"], dtype=np.int64),
            weights=np.asarray(edges["weight"], dtype=np.float64),
            delays=np.asarray(edges["delay_ticks"], dtype=np.int64),
            input_ids=np.asarray(doc["input_ids"], dtype=np.int64),
            hidden_ids=np.asarray(doc["hidden_ids"], dtype=np.int64),
            layout=doc["layout"],
            seed=int(doc["seed"]),
            tick=float(doc["tick"]),
            config=doc.get("config", {}),
        )
        net.validate()
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GeometricNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def quantize_delays(distance: np.ndarray, velocity: float, tick: float) -> np.ndarray:
    """ceil(distance / velocity / tick) ticks with a one-tick floor."""
    ticks = np.ceil(np.asarray(distance) / velocity / tick).astype(np.int64)
    return np.maximum(ticks, 1)


def _signed_uniform(rng, n: int, frac: float, lo: float, hi: float) -> np.ndarray:
    mag = rng.uniform(lo, hi, size=n)
    n_exc = int(round(frac * n))
    sign = np.full(n, -1.0)
    sign[rng.permutation(n)[:n_exc]] = 1.0
    return sign * mag


def assign_physiology(net: GeometricNetwork, params: PhysiologyConfig, seed: int) -> GeometricNetwork:
    """Place nodes in the unit cube and draw delays, signed weights and node constants.

    The excitatory fraction is applied exactly (after rounding) within each edge
    block: edges leaving input nodes, and edges between hidden nodes.
    """
    params.validate()
    n = net.n_nodes
    positions = _rng(seed, 1).uniform(0.0, 1.0, size=(n, 3))
    dist = np.linalg.norm(positions[net.src] - positions[net.dst], axis=1)
    delays = quantize_delays(dist, params.velocity, params.tick)

    is_input = np.zeros(n, dtype=bool)
    is_input[net.input_ids] = True
    from_input = is_input[net.src]
    weights = np.empty(net.n_edges)
    wrng = _rng(seed, 2)
    for mask, gain in ((from_input, params.input_gain), (~from_input, params.hidden_gain)):
        k = int(mask.sum())
        weights[mask] = _signed_uniform(wrng, k, params.excitatory_fraction, params.w_lo * gain, params.w_hi * gain)

    ref_ticks = int(round(params.refractory_period / params.tick))
    return replace(
        net,
        positions=positions,
        delays=delays,
        weights=weights,
        thresholds=np.full(n, float(params.threshold)),
        refractory_ticks=np.full(n, max(ref_ticks, 1), dtype=np.int64),
        tick=params.tick,
        config={**net.config, "physiology": asdict(params)},
    )


def _empty(n_input: int, n_hidden: int, layout: str, seed: int, config: dict) -> GeometricNetwork:
    n = n_input + n_hidden
    return GeometricNetwork(
        positions=np.zeros((n, 3)),
        refractory_ticks=np.ones(n, dtype=np.int64),
        thresholds=np.ones(n),
        src=np.zeros(0, dtype=np.int64),
        dst=np.zeros(0, dtype=np.int64),
        weights=np.zeros(0),
        delays=np.ones(0, dtype=np.int64),
        input_ids=np.arange(n_input, dtype=np.int64),
        hidden_ids=np.arange(n_input, n, dtype=np.int64),
        layout=layout,
        seed=seed,
        config=config,
    )


def build_sbm(
    n_input: int = N_PIXELS,
    n_hidden: int = 200,
    p_in_hidden: float = 0.2,
    p_between: float = 0.1,
    seed: int = 0,
    physiology: PhysiologyConfig | None = None,
) -> GeometricNetwork:
    """Two-block SBM: input->hidden with ``p_between``, hidden->hidden with ``p_in_hidden``."""
    if n_input <= 0 or n_hidden <= 0:
        raise ValueError("block sizes must be positive")
    for p in (p_in_hidden, p_between):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    physiology = physiology or PhysiologyConfig()
    rng = _rng(seed, 0)
    n = n_input + n_hidden
    cross = rng.random((n_input, n_hidden)) < p_between
    inner = rng.random((n_hidden, n_hidden)) < p_in_hidden
    np.fill_diagonal(inner, False)
    adj = np.zeros((n, n), dtype=bool)
    adj[:n_input, n_input:] = cross
    adj[n_input:, n_input:] = inner
    src, dst = np.nonzero(adj)  # row-major => canonical order
    cfg = {"n_input": n_input, "n_hidden": n_hidden, "p_in_hidden": p_in_hidden, "p_between": p_between}
    net = _empty(n_input, n_hidden, "sbm", seed, cfg)
    net = replace(net, src=src.astype(np.int64), dst=dst.astype(np.int64))
    net = assign_physiology(net, physiology, seed)
    net.validate()
    return net


def build_reservoir(
    n_recurrent: int,
    excitatory_fraction: float = 0.7,
    seed: int = 0,
    physiology: PhysiologyConfig | None = None,
    self_loops: bool = False,
    n_input: int = N_PIXELS,
) -> GeometricNetwork:
    """784 inputs fully connected to an all-to-all recurrent layer."""
    if n_recurrent < 1:
        raise ValueError("n_recurrent must be >= 1")
    physiology = replace(physiology or PhysiologyConfig(), excitatory_fraction=excitatory_fraction)
    n = n_input + n_recurrent
    adj = np.zeros((n, n), dtype=bool)
    adj[:n_input, n_input:] = True
    rec = np.ones((n_recurrent, n_recurrent), dtype=bool)
    if not self_loops:
        np.fill_diagonal(rec, False)
    adj[n_input:, n_input:] = rec
    src, dst = np.nonzero(adj)
    cfg = {"n_input": n_input, "n_recurrent": n_recurrent, "self_loops": self_loops}
    net = _empty(n_input, n_recurrent, "reservoir", seed, cfg)
    net = replace(net, src=src.astype(np.int64), dst=dst.astype(np.int64))
    net = assign_physiology(net, physiology, seed)
    net.validate()
    return net


def reservoir_edge_count(n_recurrent: int, n_input: int = N_PIXELS, self_loops: bool = False) -> int:
    rec = n_recurrent * n_recurrent if self_loops else n_recurrent * (n_recurrent - 1)
    return n_input * n_recurrent + rec


def bnn_param_count(n: int) -> int:
    """Parameter count of an n-node reservoir: n^2 + 3n."""
    if n < 1:
        raise ValueError("size must be >= 1")
    return n * n + 3 * n


def max_delay_ms(params: PhysiologyConfig) -> float:
    return math.ceil(math.sqrt(3.0) / params.velocity / params.tick) * params.tick
