"""Declarative experiment configs, seeded fan-out and run artifacts.

Every experiment takes an :class:`ExperimentConfig`, derives all random
streams from ``master_seed`` and returns a result object. When a run
directory is given, artifacts are written there together with a manifest
holding their sha256 hashes.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import __version__
from .ann import count_params, embed_hidden, init_mlp, normalize_images, train_one_shot
from .classify import EvalReport, KnnConfig, accuracy_vs_time, evaluate, report_from_predictions, knn_predict_many
from .data import ImageSet, InsufficientItemsError, SplitPlan, binarize, load_mnist, split_indices
from .embed import EmbeddingSpace, PathCorpus, pca, train_graph_embeddings
from .engine import CompiledNetwork, StdpParams, StimulusSchedule, run
from .netgen import GeometricNetwork, PhysiologyConfig, bnn_param_count, build_reservoir, build_sbm
from .plasticity import WeightDeltaStats, weight_delta_stats
from .temporal import enumerate_paths, extract_temporal_graph

EXPERIMENTS = ("paths-embed", "stdp-compare", "weight-traj", "ann-baseline")
DATA_ENV = "CRDM_DATA_DIR"


# --- config -----------------------------------------------------------------


@dataclass
class DataSection:
    dir: str = ""  # empty: $CRDM_DATA_DIR
    source: str = "test"
    classes: list = field(default_factory=lambda: list(range(10)))
    per_class: int = 0  # 0: no class balancing
    subset: int = 0  # 0: no cap


@dataclass
class NetworkSection:
    layout: str = "reservoir"
    sizes: list = field(default_factory=lambda: [100])  # recurrent (reservoir) or hidden (sbm) node counts
    excitatory_fraction: float = 0.7
    self_loops: bool = False
    p_in_hidden: float = 0.2
    p_between: float = 0.1
    tick: float = 0.1
    refractory_period: float = 5.0
    threshold: float = 1.0
    w_lo: float = 0.4
    w_hi: float = 0.8
    velocity: float = 0.09
    input_gain: float = 1.0
    hidden_gain: float = 1.0

    def physiology(self) -> PhysiologyConfig:
        return PhysiologyConfig(tick=self.tick, refractory_period=self.refractory_period, threshold=self.threshold,
                                w_lo=self.w_lo, w_hi=self.w_hi, velocity=self.velocity,
                                excitatory_fraction=self.excitatory_fraction, input_gain=self.input_gain,
                                hidden_gain=self.hidden_gain)


@dataclass
class EngineSection:
    horizon: float = 600.0
    summation_window: float = 2.0
    stimulus: str = "tonic"
    period: float = 10.0
    max_steps: int = 0  # 0: unlimited
    max_events: int = 0


@dataclass
class PlasticitySection:
    enabled: bool = True
    a_plus: float = 0.01
    a_minus: float = 0.012
    tau_plus: float = 20.0
    tau_minus: float = 20.0
    w_max: float = 2.0
    plastic_edges: str = "hidden"  # hidden | all
    snapshot_every: float = 100.0
    eval_times: list = field(default_factory=list)  # empty: every snapshot
    unchanged_tol: float = 1e-9
    stats_edges: str = "hidden"  # hidden | all
    readout: str = "displacement"  # weight-traj vectors: displacement w(t) - w(0) | weights w(t)

    def params(self) -> StdpParams | None:
        if not self.enabled:
            return None
        return StdpParams(self.a_plus, self.a_minus, self.tau_plus, self.tau_minus, self.w_max)


@dataclass
class PathSection:
    max_len: int = 6
    max_paths: int = 200  # per graph, seeded uniform subsample
    hidden_only: bool = False


@dataclass
class EmbedSection:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    train_words: bool = True


@dataclass
class KnnSection:
    k: int = 5
    metric: str = "euclidean"
    weighting: str = "inverse-distance"
    epsilon: float = 1e-12

    def config(self) -> KnnConfig:
        return KnnConfig(self.k, self.metric, self.weighting, self.epsilon)


@dataclass
class ProtocolSection:
    embedding_count: int = 9000
    query_count: int = 1000
    repeats: int = 10
    seeds: int = 1  # independent network/embedding seeds (stdp-compare)


@dataclass
class AnnSection:
    hidden_sizes: list = field(default_factory=lambda: [5, 10, 100, 200])
    max_epochs: int = 5000
    lr: float = 1e-3
    target_loss: float = 1e-3
    pick_source: str = "train"


@dataclass
class RunSection:
    workers: int = 1
    out_dir: str = "runs"
    save_traces: bool = True
    save_trajectories: bool = False  # (items, samples, n(n-1)) float64 stacks get large


SECTIONS = {
    "data": DataSection,
    "network": NetworkSection,
    "engine": EngineSection,
    "plasticity": PlasticitySection,
    "paths": PathSection,
    "embed": EmbedSection,
    "knn": KnnSection,
    "protocol": ProtocolSection,
    "ann": AnnSection,
    "run": RunSection,
}


@dataclass
class ExperimentConfig:
    experiment: str = "weight-traj"
    name: str = ""
    master_seed: int = 1
    data: DataSection = field(default_factory=DataSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    engine: EngineSection = field(default_factory=EngineSection)
    plasticity: PlasticitySection = field(default_factory=PlasticitySection)
    paths: PathSection = field(default_factory=PathSection)
    embed: EmbedSection = field(default_factory=EmbedSection)
    knn: KnnSection = field(default_factory=KnnSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    ann: AnnSection = field(default_factory=AnnSection)
    run: RunSection = field(default_factory=RunSection)

    @classmethod
    def default(cls, experiment: str) -> "ExperimentConfig":
        """Per-experiment defaults at full scale."""
        cfg = cls(experiment=experiment, name=experiment)
        if experiment == "weight-traj":
            cfg.network.sizes = [5, 10, 100, 200]
            # weak per-edge drive keeps reservoir firing stimulus dependent; short STDP
            # windows keep the millisecond timing differences in the weight changes
            cfg.network.input_gain = cfg.network.hidden_gain = 0.1
            cfg.plasticity.tau_plus = cfg.plasticity.tau_minus = 5.0
            cfg.knn.metric = "cosine"
        elif experiment in ("paths-embed", "stdp-compare"):
            cfg.network.layout = "sbm"
            cfg.network.sizes = [200]
            cfg.engine.stimulus = "single-volley"
            cfg.engine.horizon = 100.0
            cfg.engine.max_steps = 10_000
            cfg.knn.metric = "cosine"
            cfg.plasticity.enabled = experiment == "stdp-compare"
            if experiment == "paths-embed":
                cfg.data.source = "train"
                cfg.protocol.embedding_count, cfg.protocol.query_count = 54_000, 6000
            else:
                cfg.data.source = "train"
                cfg.data.classes = [1, 5]
                cfg.data.per_class = 1000
                cfg.protocol.embedding_count, cfg.protocol.query_count = 1800, 200
                cfg.protocol.seeds = 3
        elif experiment == "ann-baseline":
            cfg.knn.metric = "cosine"
            cfg.data.subset = 10_000
        else:
            raise ValueError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        return cfg

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not isinstance(self.master_seed, int):
            raise ValueError("master_seed must be an integer")
        if self.network.layout not in ("sbm", "reservoir"):
            raise ValueError("network.layout must be sbm or reservoir")
        if self.experiment == "weight-traj" and self.network.layout != "reservoir":
            raise ValueError("weight-traj needs the reservoir layout")
        if self.experiment in ("paths-embed", "stdp-compare") and self.network.layout != "sbm":
            raise ValueError(f"{self.experiment} needs the sbm layout")
        if self.engine.stimulus not in ("single-volley", "tonic"):
            raise ValueError("engine.stimulus must be single-volley or tonic")
        if self.plasticity.readout not in ("displacement", "weights"):
            raise ValueError("plasticity.readout must be displacement or weights")
        if self.plasticity.plastic_edges not in ("hidden", "all") or self.plasticity.stats_edges not in ("hidden", "all"):
            raise ValueError("plastic_edges / stats_edges must be hidden or all")
        if self.data.source not in ("train", "test"):
            raise ValueError("data.source must be train or test")
        if self.run.workers < 1:
            raise ValueError("run.workers must be >= 1")
        if self.experiment == "weight-traj":
            every, horizon = self.plasticity.snapshot_every, self.engine.horizon
            if every <= 0 or abs(horizon / every - round(horizon / every)) > 1e-9:
                raise ValueError("plasticity.snapshot_every must divide engine.horizon")
            for t in self.plasticity.eval_times:
                if t <= 0 or t > horizon + 1e-9 or abs(t / every - round(t / every)) > 1e-9:
                    raise ValueError(f"eval time {t} ms is not a snapshot time")
        self.network.physiology().validate()
        self.knn.config()
        self.plasticity.params()
        SplitPlan(0, self.protocol.embedding_count, self.protocol.query_count, self.protocol.repeats)
        return self

    # serialization
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        exp = d.get("experiment", "weight-traj")
        cfg = cls.default(exp)
        return cfg.with_overrides(_flatten(d))

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(tomli.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_toml(Path(path).read_text())

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Apply ``{"section.key": value}`` (or top-level ``"key"``) overrides; returns a new config."""
        d = self.to_dict()
        for key, value in overrides.items():
            if key == "experiment":
                continue
            parts = key.split(".")
            if len(parts) == 1:
                if key not in ("name", "master_seed"):
                    raise KeyError(f"unknown config key {key!r}")
                d[key] = value
                continue
            section, name = parts
            if section not in SECTIONS or name not in {f.name for f in fields(SECTIONS[section])}:
                raise KeyError(f"unknown config key {key!r}")
            d[section][name] = value
        out = ExperimentConfig(
            experiment=d["experiment"], name=d["name"], master_seed=int(d["master_seed"]),
            **{s: SECTIONS[s](**d[s]) for s in SECTIONS},
        )
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _flatten(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            for k2, v2 in v.items():
                out[f"{k}.{k2}"] = v2
        else:
            out[k] = v
    return out


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a path of labels."""
    text = ":".join([str(master)] + [str(p) for p in parts])
    return int(hashlib.sha256(text.encode()).hexdigest()[:15], 16)


# --- data selection ----------------------------------------------------------


def data_dir(cfg: ExperimentConfig) -> Path:
    d = cfg.data.dir or os.environ.get(DATA_ENV, "")
    if not d:
        raise FileNotFoundError(f"no MNIST directory: set data.dir or ${DATA_ENV}")
    return Path(d)


def select_items(labels: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    """Indices used by the experiment, in a seeded order that does not depend on ``subset``.

    ``per_class`` keeps the first items of each class in that order; ``subset``
    then keeps a prefix, so a smaller subset is always contained in a larger one.
    """
    labels = np.asarray(labels)
    order = np.random.default_rng(derive_seed(cfg.master_seed, "select")).permutation(len(labels))
    order = order[np.isin(labels[order], cfg.data.classes)]
    if cfg.data.per_class:
        keep = np.zeros(len(order), dtype=bool)
        for c in cfg.data.classes:
            pos = np.flatnonzero(labels[order] == c)
            if len(pos) < cfg.data.per_class:
                raise InsufficientItemsError(f"class {c} has {len(pos)} items, need {cfg.data.per_class}")
            keep[pos[: cfg.data.per_class]] = True
        order = order[keep]
    if cfg.data.subset:
        order = order[: cfg.data.subset]
    return order


def load_items(cfg: ExperimentConfig) -> tuple[ImageSet, np.ndarray]:
    ds = load_mnist(data_dir(cfg), cfg.data.source)
    idx = select_items(ds.labels, cfg)
    return ds.subset(idx), idx


def scaled_plan(cfg: ExperimentConfig, n_items: int) -> SplitPlan:
    """The configured plan, shrunk proportionally when fewer items are available."""
    p = cfg.protocol
    total = p.embedding_count + p.query_count
    if n_items >= total:
        e, q = p.embedding_count, p.query_count
    else:
        q = max(1, round(n_items * p.query_count / total))
        e = n_items - q
    return SplitPlan(derive_seed(cfg.master_seed, "split"), e, q, p.repeats)


# --- fan-out -------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(state: dict) -> None:
    _WORKER.clear()
    _WORKER.update(state)
    if "net" in state:
        _WORKER["compiled"] = CompiledNetwork(state["net"])


def fan_out(fn, items, workers: int, state: dict) -> list:
    """Map ``fn`` over ``items`` with shared read-only ``state``; results in input order."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        _init_worker(state)
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (workers * 8))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(state,)) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def _schedule(pixels: np.ndarray, eng: EngineSection) -> StimulusSchedule:
    return StimulusSchedule(pixels, eng.stimulus, eng.period)


def _engine_kw(eng: EngineSection) -> dict:
    return dict(summation_window=eng.summation_window, max_steps=eng.max_steps or None,
                max_events=eng.max_events or None)


# --- artifacts -----------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    artifacts: dict  # relative path -> sha256
    tool_version: str
    timings: dict
    created: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, run_dir) -> list[str]:
        """Artifacts that are missing or whose hash changed."""
        bad = []
        for rel, digest in self.artifacts.items():
            p = Path(run_dir) / rel
            if not p.exists() or _sha256(p) != digest:
                bad.append(rel)
        return bad


class RunWriter:
    """Collects artifact files under one run directory and writes the manifest last."""

    def __init__(self, root: Path | None):
        self.root = root
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        if root is not None:
            root.mkdir(parents=True, exist_ok=True)

    @property
    def active(self) -> bool:
        return self.root is not None

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return p

    def text(self, rel: str, content: str) -> None:
        if self.active:
            self.path(rel).write_text(content)

    def raw(self, rel: str, content: bytes) -> None:
        if self.active:
            self.path(rel).write_bytes(content)

    def finish(self, cfg: ExperimentConfig) -> RunManifest | None:
        if not self.active:
            return None
        self.text("config.toml", cfg.to_toml())
        arts = {rel: _sha256(self.root / rel) for rel in sorted(self.files)}
        m = RunManifest(cfg.to_dict(), arts, __version__, dict(self.timings),
                        _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        (self.root / "manifest.json").write_text(m.to_json())
        missing = m.verify(self.root)
        if missing:
            raise RuntimeError(f"artifacts missing after run: {missing}")
        return m


def new_run_dir(cfg: ExperimentConfig) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = Path(cfg.run.out_dir) / f"{stamp}-{cfg.name or cfg.experiment}"
    path, n = base, 1
    while path.exists():
        n += 1
        path = base.with_name(f"{base.name}-{n}")
    return path


# --- weight trajectories ---------------------------------------------------------


@dataclass
class WeightTrajResult:
    curves: dict  # size -> {time_ms: EvalReport}
    param_counts: dict  # size -> n^2 + 3n
    n_items: int
    plan: SplitPlan

    def accuracy(self, size: int, time_ms: float) -> float:
        return self.curves[size][float(time_ms)].accuracy_mean

    def to_json(self) -> str:
        return json.dumps({
            "n_items": self.n_items,
            "plan": asdict(self.plan),
            "param_counts": {str(k): v for k, v in self.param_counts.items()},
            "curves": {str(s): {str(t): asdict(r) for t, r in c.items()} for s, c in self.curves.items()},
        }, indent=1, sort_keys=True)


def _traj_job(i: int) -> np.ndarray:
    w = _WORKER
    res = run(w["compiled"], _schedule(w["pixels"][i], w["engine"]), w["engine"].horizon, stdp=w["stdp"],
              plastic=w["plastic"], snapshot_every=w["every"], snapshot_edges=w["edges"], **_engine_kw(w["engine"]))
    return res.snapshots[w["keep"]] - w["origin"]


def reservoir_for(cfg: ExperimentConfig, size: int) -> GeometricNetwork:
    n = cfg.network
    return build_reservoir(size, n.excitatory_fraction, seed=derive_seed(cfg.master_seed, "reservoir", size),
                           physiology=n.physiology(), self_loops=n.self_loops)


def snapshot_times(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """(all clock times, indices kept for evaluation)."""
    every, horizon = cfg.plasticity.snapshot_every, cfg.engine.horizon
    times = every * np.arange(1, int(round(horizon / every)) + 1)
    if not cfg.plasticity.eval_times:
        return times, np.arange(len(times))
    keep = [int(np.flatnonzero(np.isclose(times, t))[0]) for t in cfg.plasticity.eval_times]
    return times, np.asarray(keep)


def run_weight_traj(cfg: ExperimentConfig, run_dir: Path | None = None,
                    items: tuple[ImageSet, np.ndarray] | None = None) -> WeightTrajResult:
    cfg.validate()
    out = RunWriter(run_dir)
    images, idx = items or load_items(cfg)
    pixels = [binarize(im) for im in images.images]
    labels = images.labels.astype(np.int64)
    plan = scaled_plan(cfg, len(labels))
    plan.check(len(labels))
    knn = cfg.knn.config()
    times, keep = snapshot_times(cfg)
    curves, counts = {}, {}
    for size in cfg.network.sizes:
        t0 = time.perf_counter()
        net = reservoir_for(cfg, size)
        hidden = net.hidden_edge_mask()
        state = dict(net=net, pixels=pixels, engine=cfg.engine, stdp=cfg.plasticity.params(),
                     plastic=hidden if cfg.plasticity.plastic_edges == "hidden" else None,
                     every=cfg.plasticity.snapshot_every, edges=np.flatnonzero(hidden), keep=keep,
                     origin=net.weights[hidden] if cfg.plasticity.readout == "displacement" else 0.0)
        stack = np.stack(fan_out(_traj_job, range(len(pixels)), cfg.run.workers, state))
        out.timings[f"simulate-n{size}"] = time.perf_counter() - t0
        t1 = time.perf_counter()
        curves[size] = accuracy_vs_time(stack, labels, plan, knn, sample_times=times[keep])
        out.timings[f"classify-n{size}"] = time.perf_counter() - t1
        counts[size] = bnn_param_count(size)
        if out.active:
            out.text(f"network-n{size}.json", json.dumps(net.to_dict()))
            if cfg.run.save_trajectories:
                head = np.array(stack.shape, dtype="<u8").tobytes()
                out.raw(f"trajectories-n{size}.bin", head + np.ascontiguousarray(stack, dtype="<f8").tobytes())
                out.text(f"trajectories-n{size}.bin.json", json.dumps({
                    "layout": "items x samples x edges, float64-le, after a u64 shape header",
                    "values": "w(t) - w(0)" if cfg.plasticity.readout == "displacement" else "w(t)",
                    "stimulus_ids": [int(i) for i in idx], "labels": labels.tolist(),
                    "sample_times_ms": times[keep].tolist()}))
            rows = ["time_ms," + next(iter(curves[size].values())).csv_header()]
            rows += [f"{t!r}," + r.csv_row() for t, r in curves[size].items()]
            out.text(f"curve-n{size}.csv", "\n".join(rows) + "\n")
    result = WeightTrajResult(curves, counts, len(labels), plan)
    out.text("report.json", result.to_json())
    out.finish(cfg)
    return result


# --- temporal-path embeddings ------------------------------------------------------


def sbm_for(cfg: ExperimentConfig, size: int, seed_index: int = 0) -> GeometricNetwork:
    n = cfg.network
    return build_sbm(784, size, n.p_in_hidden, n.p_between,
                     seed=derive_seed(cfg.master_seed, "sbm", size, seed_index), physiology=n.physiology())


def _paths_job(i: int):
    w = _WORKER
    res = run(w["compiled"], _schedule(w["pixels"][i], w["engine"]), w["engine"].horizon,
              weights=w.get("weights"), stimulus_id=str(w["ids"][i]), **_engine_kw(w["engine"]))
    g = extract_temporal_graph(res.trace, w["net"])
    p = w["paths"]
    paths = enumerate_paths(g, p.max_len, max_paths=p.max_paths or None, hidden_only=p.hidden_only,
                            sample_seed=derive_seed(w["master_seed"], "paths", w["ids"][i]))
    return (res.trace.to_bytes() if w["save_traces"] else b""), paths


def collect_paths(net: GeometricNetwork, pixels, ids, cfg: ExperimentConfig, weights=None, save_traces=False):
    state = dict(net=net, pixels=pixels, ids=ids, engine=cfg.engine, paths=cfg.paths, master_seed=cfg.master_seed,
                 weights=weights, save_traces=save_traces)
    return fan_out(_paths_job, range(len(pixels)), cfg.run.workers, state)


def _corpus(ids, path_sets) -> PathCorpus:
    docs = []
    for gid, ps in zip(ids, path_sets):
        if len(ps) == 0:
            ps = [np.array([-1, -1])]  # placeholder token for a silent graph
        docs.append((int(gid), ps))
    return PathCorpus.from_documents(docs)


def embed_paths(ids, path_sets, labels, cfg: ExperimentConfig, seed: int) -> EmbeddingSpace:
    e = cfg.embed
    emb = train_graph_embeddings(_corpus(ids, path_sets), labels, dim=e.dim, window=e.window,
                                 negatives=e.negatives, epochs=e.epochs, lr=e.lr, seed=seed,
                                 train_words=e.train_words)
    return emb.space


@dataclass
class PathsEmbedResult:
    report: EvalReport
    space: EmbeddingSpace
    n_paths: int


def run_paths_embed(cfg: ExperimentConfig, run_dir: Path | None = None,
                    items: tuple[ImageSet, np.ndarray] | None = None) -> PathsEmbedResult:
    cfg.validate()
    out = RunWriter(run_dir)
    images, idx = items or load_items(cfg)
    labels = images.labels.astype(np.int64)
    pixels = [binarize(im) for im in images.images]
    net = sbm_for(cfg, cfg.network.sizes[0])
    t0 = time.perf_counter()
    results = collect_paths(net, pixels, idx, cfg, save_traces=out.active and cfg.run.save_traces)
    out.timings["simulate"] = time.perf_counter() - t0
    path_sets = [r[1] for r in results]
    t1 = time.perf_counter()
    space = embed_paths(idx, path_sets, labels, cfg, derive_seed(cfg.master_seed, "embed", 0))
    space = replace(space, metric=cfg.knn.metric)
    out.timings["embed"] = time.perf_counter() - t1
    plan = scaled_plan(cfg, len(labels))
    report = evaluate(space, plan, cfg.knn.config())
    if out.active:
        out.text("network.json", json.dumps(net.to_dict()))
        if cfg.run.save_traces:
            for gid, (blob, _) in zip(idx, results):
                out.raw(f"traces/{int(gid)}.trace", blob)
        space.to_csv(out.path("embeddings.csv"))
        pca(space, min(3, space.dim, len(space))).to_csv(out.path("pca.csv"), labels)
        out.text("report.json", report.to_json())
        out.text("report.csv", report.csv_header() + "\n" + report.csv_row() + "\n")
    out.finish(cfg)
    return PathsEmbedResult(report, space, int(sum(len(p) for p in path_sets)))


# --- STDP comparison ------------------------------------------------------------


def _stdp_accumulate(net: GeometricNetwork, pixels, cfg: ExperimentConfig, plastic) -> np.ndarray:
    """Carry weights across stimuli in order; returns the final weight vector (inherently serial)."""
    compiled = CompiledNetwork(net)
    w = net.weights.copy()
    params = cfg.plasticity.params()
    for px in pixels:
        w = run(compiled, _schedule(px, cfg.engine), cfg.engine.horizon, stdp=params, plastic=plastic,
                weights=w, **_engine_kw(cfg.engine)).weights
    return w


@dataclass
class StdpCompareResult:
    plain: list  # EvalReport per seed
    stdp: list
    delta_stats: list  # WeightDeltaStats per seed

    @property
    def plain_mean(self) -> float:
        return float(np.mean([r.accuracy_mean for r in self.plain]))

    @property
    def stdp_mean(self) -> float:
        return float(np.mean([r.accuracy_mean for r in self.stdp]))

    def to_json(self) -> str:
        return json.dumps({
            "plain": [asdict(r) for r in self.plain],
            "stdp": [asdict(r) for r in self.stdp],
            "plain_mean": self.plain_mean,
            "stdp_mean": self.stdp_mean,
            "delta_stats": [asdict(s) for s in self.delta_stats],
        }, indent=1, sort_keys=True)


def run_stdp_compare(cfg: ExperimentConfig, run_dir: Path | None = None,
                     items: tuple[ImageSet, np.ndarray] | None = None) -> StdpCompareResult:
    cfg.validate()
    out = RunWriter(run_dir)
    images, idx = items or load_items(cfg)
    labels = images.labels.astype(np.int64)
    pixels = [binarize(im) for im in images.images]
    plan = scaled_plan(cfg, len(labels))
    knn = cfg.knn.config()
    plain, stdp, stats = [], [], []
    for s in range(cfg.protocol.seeds):
        t0 = time.perf_counter()
        net = sbm_for(cfg, cfg.network.sizes[0], s)
        hidden = net.hidden_edge_mask()
        plastic = hidden if cfg.plasticity.plastic_edges == "hidden" else None
        w_stdp = _stdp_accumulate(net, pixels, cfg, plastic) if cfg.plasticity.enabled else net.weights.copy()
        g_stdp = net.with_weights(w_stdp)
        mask = hidden if cfg.plasticity.stats_edges == "hidden" else None
        stats.append(weight_delta_stats(net, g_stdp, cfg.plasticity.unchanged_tol, mask))
        out.timings[f"accumulate-{s}"] = time.perf_counter() - t0
        seed = derive_seed(cfg.master_seed, "embed", s)
        for tag, weights, bucket in (("plain", None, plain), ("stdp", w_stdp, stdp)):
            paths = [r[1] for r in collect_paths(net, pixels, idx, cfg, weights=weights)]
            space = replace(embed_paths(idx, paths, labels, cfg, seed), metric=cfg.knn.metric)
            bucket.append(evaluate(space, plan, knn))
            if out.active:
                space.to_csv(out.path(f"embeddings-{tag}-seed{s}.csv"))
        if out.active:
            out.text(f"network-seed{s}.json", json.dumps(net.to_dict()))
            out.text(f"network-stdp-seed{s}.json", json.dumps(g_stdp.to_dict()))
        out.timings[f"seed-{s}"] = time.perf_counter() - t0
    result = StdpCompareResult(plain, stdp, stats)
    out.text("report.json", result.to_json())
    out.finish(cfg)
    return result


# --- ANN baseline ---------------------------------------------------------------


@dataclass
class AnnRow:
    hidden: int
    report: EvalReport
    params: int
    params_full: int
    converged: int

    def as_dict(self) -> dict:
        return {"hidden": self.hidden, "accuracy_mean": self.report.accuracy_mean,
                "accuracy_std": self.report.accuracy_std, "params": self.params,
                "params_full": self.params_full, "converged": self.converged, "report": asdict(self.report)}


@dataclass
class AnnResult:
    rows: list

    def row(self, hidden: int) -> AnnRow:
        return next(r for r in self.rows if r.hidden == hidden)

    def to_json(self) -> str:
        return json.dumps([r.as_dict() for r in self.rows], indent=1, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["hidden,accuracy_mean,accuracy_std,params,params_full,converged"]
        for r in self.rows:
            lines.append(f"{r.hidden},{r.report.accuracy_mean!r},{r.report.accuracy_std!r},{r.params},{r.params_full},{r.converged}")
        return "\n".join(lines) + "\n"


def one_shot_picks(labels: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.array([rng.choice(np.flatnonzero(labels == c)) for c in range(10)])


def run_ann_baseline(cfg: ExperimentConfig, run_dir: Path | None = None,
                     items: tuple[ImageSet, np.ndarray] | None = None) -> AnnResult:
    """One-shot MLP per repeat; its hidden layer embeds the item pool, then kNN on the split."""
    cfg.validate()
    out = RunWriter(run_dir)
    images, _ = items or load_items(cfg)
    pool = load_mnist(data_dir(cfg), cfg.ann.pick_source)
    x_items = normalize_images(images.images)
    labels = images.labels.astype(np.int64)
    plan = scaled_plan(cfg, len(labels))
    knn = cfg.knn.config()
    rows = []
    for h in cfg.ann.hidden_sizes:
        t0 = time.perf_counter()
        per_repeat, converged = [], 0
        for r in range(plan.repeats):
            pick = one_shot_picks(pool.labels, derive_seed(cfg.master_seed, "ann-pick", r))
            model = init_mlp(h, seed=derive_seed(cfg.master_seed, "ann-init", h, r))
            res = train_one_shot(model, normalize_images(pool.images[pick]), pool.labels[pick].astype(np.int64),
                                 max_epochs=cfg.ann.max_epochs, lr=cfg.ann.lr, target_loss=cfg.ann.target_loss)
            converged += int(res.converged)
            space = embed_hidden(res.model, x_items, labels)
            space = replace(space, metric=cfg.knn.metric)
            emb, qry = split_indices(len(labels), plan, r)
            sub = EmbeddingSpace(space.vectors[emb], labels[emb], space.metric, space.item_kind)
            per_repeat.append((labels[qry], knn_predict_many(sub, space.vectors[qry], knn)))
            if out.active and r == 0:
                res.model.save(out.path(f"model-h{h}-r0.bin"))
                out.files.append(f"model-h{h}-r0.bin.json")
        rows.append(AnnRow(h, report_from_predictions(per_repeat), count_params("ann", h),
                           count_params("ann", h, full=True), converged))
        out.timings[f"h{h}"] = time.perf_counter() - t0
    result = AnnResult(rows)
    out.text("report.json", result.to_json())
    out.text("report.csv", result.to_csv())
    out.finish(cfg)
    return result


RUNNERS = {
    "weight-traj": run_weight_traj,
    "paths-embed": run_paths_embed,
    "stdp-compare": run_stdp_compare,
    "ann-baseline": run_ann_baseline,
}


def run_experiment(cfg: ExperimentConfig, run_dir: Path | None = None):
    return RUNNERS[cfg.experiment](cfg, run_dir)
