"""Pair-based STDP, clocked weight snapshots and weight-change statistics.

The online rule itself runs inside the engine kernel; this module holds the
closed-form window, the run wrapper that records trajectories, and the
bookkeeping around them.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import CompiledNetwork, RunResult, StdpParams, StimulusSchedule, run
from .netgen import GeometricNetwork

__all__ = [
    "StdpParams",
    "stdp_delta",
    "apply_delta",
    "run_with_stdp",
    "snapshot_clock",
    "WeightTrajectory",
    "WeightDeltaStats",
    "weight_delta_stats",
]


def stdp_delta(dt: float, p: StdpParams) -> float:
    """Weight change for a pairing with ``dt = post_time - pre_arrival_time`` (ms)."""
    if dt > 0:
        return p.a_plus * math.exp(-dt / p.tau_plus)
    if dt < 0:
        return -p.a_minus * math.exp(dt / p.tau_minus)
    return 0.0


def apply_delta(w: float, dt: float, p: StdpParams) -> float:
    return min(p.w_max, max(-p.w_max, w + stdp_delta(dt, p)))


def run_with_stdp(
    net: GeometricNetwork | CompiledNetwork,
    schedule: StimulusSchedule,
    horizon: float,
    params: StdpParams,
    *,
    plastic: np.ndarray | None = None,
    weights: np.ndarray | None = None,
    **kw,
) -> RunResult:
    """Run with online STDP on a private weight copy (the template is untouched)."""
    return run(net, schedule, horizon, stdp=params, plastic=plastic, weights=weights, **kw)


@dataclass
class WeightTrajectory:
    stimulus_id: str
    sample_times: np.ndarray  # ms
    vectors: np.ndarray  # (samples, edges)

    def __post_init__(self):
        self.sample_times = np.asarray(self.sample_times, dtype=np.float64)
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if len(self.sample_times) != len(self.vectors):
            raise ValueError("one vector per sample time required")
        if np.any(np.diff(self.sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    def at(self, time_ms: float) -> np.ndarray:
        hit = np.flatnonzero(np.isclose(self.sample_times, time_ms))
        if not len(hit):
            raise KeyError(f"no sample at {time_ms} ms")
        return self.vectors[hit[0]]

    def to_bytes(self) -> bytes:
        n_samples, n_edges = self.vectors.shape
        return struct.pack("<QQ", n_edges, n_samples) + np.ascontiguousarray(self.vectors, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, sample_times, stimulus_id: str = "") -> "WeightTrajectory":
        n_edges, n_samples = struct.unpack_from("<QQ", buf, 0)
        if len(buf) != 16 + 8 * n_edges * n_samples:
            raise ValueError("matrix payload size does not match header")
        vec = np.frombuffer(buf, dtype="<f8", offset=16).reshape(n_samples, n_edges).astype(np.float64)
        return cls(stimulus_id, sample_times, vec)

    def save(self, path) -> None:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        meta = {"stimulus_id": self.stimulus_id, "sample_times_ms": self.sample_times.tolist(),
                "n_edges": int(self.vectors.shape[1]), "dtype": "float64-le", "layout": "row-major samples x edges"}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, path) -> "WeightTrajectory":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        return cls.from_bytes(path.read_bytes(), meta["sample_times_ms"], meta["stimulus_id"])


def snapshot_clock(
    net: GeometricNetwork | CompiledNetwork,
    schedule: StimulusSchedule,
    horizon: float,
    every: float,
    params: StdpParams | None,
    *,
    edges: np.ndarray | None = None,
    stimulus_id: str = "",
    **kw,
) -> WeightTrajectory:
    """Record the chosen edge weights at every, 2*every, ..., horizon ms.

    ``edges`` defaults to the hidden (recurrent) block in canonical order.
    ``params=None`` runs without plasticity.
    """
    if every <= 0:
        raise ValueError("snapshot interval must be positive")
    base = net.net if isinstance(net, CompiledNetwork) else net
    if edges is None:
        edges = np.flatnonzero(base.hidden_edge_mask())
    res = run(net, schedule, horizon, stdp=params, snapshot_every=every, snapshot_edges=edges,
              stimulus_id=stimulus_id, **kw)
    return WeightTrajectory(stimulus_id, res.snapshot_ticks * base.tick, res.snapshots)


@dataclass(frozen=True)
class WeightDeltaStats:
    frac_higher: float
    frac_lower: float
    frac_sign_flipped: float
    frac_unchanged: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.frac_higher, self.frac_lower, self.frac_sign_flipped, self.frac_unchanged)


def weight_delta_stats(before: GeometricNetwork, after: GeometricNetwork, tol: float = 1e-9,
                       mask: np.ndarray | None = None) -> WeightDeltaStats:
    """Classify each edge's change. A +->- sign flip takes precedence over the other categories."""
    if not (np.array_equal(before.src, after.src) and np.array_equal(before.dst, after.dst)):
        raise ValueError("networks have different edge sets")
    w0, w1 = before.weights, after.weights
    if mask is not None:
        w0, w1 = w0[mask], w1[mask]
    n = len(w0)
    if n == 0:
        raise ValueError("no edges to compare")
    flipped = (w0 > 0) & (w1 < 0)
    delta = w1 - w0
    same = ~flipped & (np.abs(delta) <= tol)
    higher = ~flipped & ~same & (delta > 0)
    lower = ~flipped & ~same & (delta < 0)
    return WeightDeltaStats(higher.sum() / n, lower.sum() / n, flipped.sum() / n, same.sum() / n)
