"""Command-line entry point: ``crdm <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .ann import embed_hidden, init_mlp, normalize_images, train_one_shot
from .classify import KnnConfig, accuracy_vs_time, evaluate
from .data import SplitPlan, binarize, load_mnist
from .embed import EmbeddingSpace, pca
from .engine import ActivationTrace, StdpParams, StimulusSchedule, run
from .experiments import (
    DATA_ENV,
    EXPERIMENTS,
    SECTIONS,
    ExperimentConfig,
    derive_seed,
    embed_paths,
    new_run_dir,
    one_shot_picks,
    run_experiment,
)
from .netgen import GeometricNetwork, PhysiologyConfig, build_reservoir, build_sbm
from .temporal import enumerate_paths, extract_temporal_graph


def _data_dir(args) -> Path:
    d = args.data_dir or os.environ.get(DATA_ENV)
    if not d:
        raise SystemExit(f"error: no MNIST directory (use --data-dir or set ${DATA_ENV})")
    return Path(d)


def _physiology_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(PhysiologyConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", type=float, default=f.default)


def _physiology(args) -> PhysiologyConfig:
    return PhysiologyConfig(**{f.name: getattr(args, f.name) for f in fields(PhysiologyConfig)})


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# --- netgen / simulate ----------------------------------------------------------


def cmd_netgen(args) -> int:
    phys = _physiology(args)
    if args.layout == "sbm":
        net = build_sbm(784, args.n_hidden, args.p_in_hidden, args.p_between, seed=args.seed, physiology=phys)
    else:
        net = build_reservoir(args.n_hidden, phys.excitatory_fraction, seed=args.seed, physiology=phys,
                              self_loops=args.self_loops)
    net.save(args.out)
    print(f"{net.layout}: {net.n_nodes} nodes, {net.n_edges} edges -> {args.out}")
    return 0


def _pixels(args) -> tuple[np.ndarray, str]:
    if args.pixels is not None:
        return np.array([int(x) for x in args.pixels.split(",") if x], dtype=np.int64), "pixels"
    ds = load_mnist(_data_dir(args), args.source)
    return binarize(ds.images[args.image]), f"{args.source}-{args.image}"


def cmd_simulate(args) -> int:
    net = GeometricNetwork.load(args.net)
    px, sid = _pixels(args)
    stdp = None
    if args.stdp:
        stdp = StdpParams(args.a_plus, args.a_minus, args.tau_plus, args.tau_minus, args.w_max)
    res = run(net, StimulusSchedule(px, args.mode, args.period), args.horizon, summation_window=args.window,
              stdp=stdp, plastic=net.hidden_edge_mask() if args.hidden_plastic else None,
              snapshot_every=args.snapshot_every, snapshot_edges=np.flatnonzero(net.hidden_edge_mask()),
              max_steps=args.max_steps, max_events=args.max_events, stimulus_id=sid)
    Path(args.out).write_bytes(res.trace.to_bytes())
    if args.json:
        Path(args.json).write_text(res.trace.to_json())
    if args.trajectory and args.snapshot_every:
        from .plasticity import WeightTrajectory

        WeightTrajectory(sid, res.snapshot_ticks * net.tick, res.snapshots).save(args.trajectory)
    if args.paths:
        g = extract_temporal_graph(res.trace, net)
        ps = enumerate_paths(g, args.max_len)
        _write(args.paths, "\n".join(" ".join(str(n) for n in p) for p in ps.as_tuples()))
    print(f"{len(res.trace)} activations, {res.trace.steps} steps -> {args.out}")
    return 0


# --- embed / pca / classify -------------------------------------------------------


def cmd_embed(args) -> int:
    net = GeometricNetwork.load(args.net)
    ds = load_mnist(_data_dir(args), args.source)
    files = sorted(Path(args.traces).glob("*.trace"), key=lambda p: int(p.stem))
    if not files:
        raise SystemExit(f"error: no *.trace files in {args.traces}")
    cfg = ExperimentConfig.default("paths-embed")
    cfg = cfg.with_overrides({"embed.dim": args.dim, "embed.epochs": args.epochs, "embed.window": args.window,
                              "embed.negatives": args.negatives, "embed.lr": args.lr,
                              "paths.max_len": args.max_len, "paths.max_paths": args.max_paths,
                              "master_seed": args.seed})
    ids, path_sets = [], []
    for f in files:
        tr = ActivationTrace.from_bytes(f.read_bytes(), tick=net.tick)
        gid = int(f.stem)
        g = extract_temporal_graph(tr, net)
        ids.append(gid)
        path_sets.append(enumerate_paths(g, args.max_len, max_paths=args.max_paths or None,
                                         sample_seed=derive_seed(args.seed, "paths", gid)))
    labels = ds.labels[np.asarray(ids)].astype(np.int64)
    space = embed_paths(np.asarray(ids), path_sets, labels, cfg, derive_seed(args.seed, "embed", 0))
    space.to_csv(args.out)
    print(f"{len(space)} graph embeddings (dim {space.dim}) -> {args.out}")
    return 0


def cmd_pca(args) -> int:
    space = EmbeddingSpace.from_csv(args.embeddings)
    proj = pca(space, args.k)
    proj.to_csv(args.out, space.labels)
    ratio = ", ".join(f"{r:.3f}" for r in proj.explained_variance_ratio)
    print(f"explained variance ratio [{ratio}] -> {args.out}")
    return 0


def cmd_classify(args) -> int:
    knn = KnnConfig(args.k, args.metric, args.weighting, args.epsilon)
    if args.trajectories:
        meta = json.loads(Path(args.trajectories + ".json").read_text())
        raw = Path(args.trajectories).read_bytes()
        shape = tuple(int(x) for x in np.frombuffer(raw, dtype="<u8", count=3))
        stack = np.frombuffer(raw, dtype="<f8", offset=24).reshape(shape)
        labels = np.asarray(meta["labels"])
        plan = SplitPlan(args.seed, args.embedding_count, args.query_count, args.repeats)
        curve = accuracy_vs_time(stack, labels, plan, knn, sample_times=meta["sample_times_ms"])
        rows = ["time_ms," + next(iter(curve.values())).csv_header()]
        rows += [f"{t!r}," + r.csv_row() for t, r in curve.items()]
        _write(args.out, "\n".join(rows))
        return 0
    space = EmbeddingSpace.from_csv(args.embeddings, metric=args.metric)
    plan = SplitPlan(args.seed, args.embedding_count, args.query_count, args.repeats)
    report = evaluate(space, plan, knn)
    _write(args.out, report.to_json())
    if args.csv:
        Path(args.csv).write_text(report.csv_header() + "\n" + report.csv_row() + "\n")
    return 0


def cmd_ann(args) -> int:
    d = _data_dir(args)
    train = load_mnist(d, "train")
    pick = one_shot_picks(train.labels, args.seed)
    res = train_one_shot(init_mlp(args.hidden, seed=args.seed), normalize_images(train.images[pick]),
                         train.labels[pick].astype(np.int64), max_epochs=args.max_epochs, lr=args.lr)
    res.model.save(args.out)
    print(f"H={args.hidden}: {'converged' if res.converged else 'did not converge'} after {res.steps} steps, "
          f"loss {res.loss_history[-1]:.2e} -> {args.out}")
    if args.embed_out:
        test = load_mnist(d, "test")
        n = args.count or len(test)
        embed_hidden(res.model, test.images[:n], test.labels[:n]).to_csv(args.embed_out)
    return 0


# --- run -------------------------------------------------------------------------


def _parse_value(text: str, default):
    if isinstance(default, bool):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")
        return text.lower() in ("true", "1", "yes")
    if isinstance(default, list):
        return [int(x) if x.lstrip("-").isdigit() else float(x) for x in text.split(",") if x]
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides (mirror the TOML keys)")
    for section, cls in SECTIONS.items():
        for f in fields(cls):
            g.add_argument(f"--{section}.{f.name}", dest=f"cfg:{section}.{f.name}", metavar="VALUE", default=None)


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default(args.experiment)
    if cfg.experiment != args.experiment:
        raise ValueError(f"config file is for {cfg.experiment!r}, not {args.experiment!r}")
    defaults = cfg.to_dict()
    over = {}
    for key, value in vars(args).items():
        if key.startswith("cfg:") and value is not None:
            section, name = key[4:].split(".")
            over[f"{section}.{name}"] = _parse_value(value, defaults[section][name])
    if args.subset is not None:
        over["data.subset"] = args.subset
    if args.workers is not None:
        over["run.workers"] = args.workers
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.out is not None:
        over["run.out_dir"] = args.out
    if args.data_dir:
        over["data.dir"] = args.data_dir
    cfg = cfg.with_overrides(over).validate()
    if args.print_config:
        sys.stdout.write(cfg.to_toml())
        return 0
    run_dir = new_run_dir(cfg)
    result = run_experiment(cfg, run_dir)
    print(f"{cfg.experiment} finished -> {run_dir}")
    print(result.to_json() if len(result.to_json()) < 4000 else f"report: {run_dir / 'report.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crdm", description=__doc__)
    ap.add_argument("--data-dir", default=None, help=f"MNIST IDX directory (default ${DATA_ENV})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("netgen", help="build a network and write it as JSON")
    p.add_argument("--layout", choices=["sbm", "reservoir"], default="reservoir")
    p.add_argument("--n-hidden", type=int, default=100, help="hidden (sbm) or recurrent (reservoir) nodes")
    p.add_argument("--p-in-hidden", type=float, default=0.2)
    p.add_argument("--p-between", type=float, default=0.1)
    p.add_argument("--self-loops", action="store_true")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    _physiology_flags(p)
    p.set_defaults(func=cmd_netgen)

    p = sub.add_parser("simulate", help="stimulate a network with one image and write the binary trace")
    p.add_argument("--net", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", type=int, help="MNIST index")
    src.add_argument("--pixels", help="comma-separated active pixel indices")
    p.add_argument("--source", choices=["train", "test"], default="train")
    p.add_argument("--mode", choices=["single-volley", "tonic"], default="single-volley")
    p.add_argument("--period", type=float, default=10.0)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--window", type=float, default=2.0)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--max-events", type=int, default=None)
    p.add_argument("--stdp", action="store_true")
    p.add_argument("--hidden-plastic", action="store_true", help="restrict STDP to hidden edges")
    for name, val in (("a-plus", 0.01), ("a-minus", 0.012), ("tau-plus", 20.0), ("tau-minus", 20.0), ("w-max", 2.0)):
        p.add_argument(f"--{name}", type=float, default=val)
    p.add_argument("--snapshot-every", type=float, default=None)
    p.add_argument("--trajectory", help="write the hidden-edge weight trajectory here")
    p.add_argument("--paths", help="write maximal temporal paths (one per line) here")
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--json", help="also write the trace as JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("embed", help="embed the temporal paths of a directory of <mnist-index>.trace files")
    p.add_argument("--net", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--source", choices=["train", "test"], default="train")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--max-paths", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("pca", help="project an embedding CSV onto its first k principal components")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("classify", help="repeated-split kNN evaluation of an embedding CSV or trajectory stack")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--embeddings")
    src.add_argument("--trajectories", help="trajectories-n<size>.bin from a weight-traj run")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--metric", choices=["euclidean", "cosine"], default="euclidean")
    p.add_argument("--weighting", choices=["majority", "inverse-distance"], default="inverse-distance")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--embedding-count", type=int, default=9000)
    p.add_argument("--query-count", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="report JSON (stdout when omitted)")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("ann", help="one-shot train the MLP baseline on one training image per class")
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.add_argument("--embed-out", help="write hidden-layer embeddings of test images as CSV")
    p.add_argument("--count", type=int, default=0)
    p.set_defaults(func=cmd_ann)

    p = sub.add_parser("run", help="run a whole experiment and write runs/<timestamp>-<name>/")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="TOML file; flags override its values")
    p.add_argument("--subset", type=int, default=None, help="cap the number of images")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", default=None, help="parent directory for run folders")
    p.add_argument("--print-config", action="store_true", help="print the effective config as TOML and exit")
    _config_flags(p)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        # a run directory without manifest.json is incomplete by construction
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
