import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crdm.engine import ActivationTrace, StimulusSchedule, run
from crdm.netgen import PhysiologyConfig, build_sbm
from crdm.temporal import enumerate_paths, extract_temporal_graph

from .oracles import brute_force_paths
from .test_engine import explicit, tiny_net


def _chain():
    # 0 -> 1 -> 2 -> 3, each hop strong enough on its own
    return tiny_net(4, [(0, 1), (1, 2), (2, 3)], [1.5, 1.5, 1.5], [10, 10, 10], n_input=1)


def test_chain_gives_one_path():
    net = _chain()
    tr = run(net, explicit((0.0, 0)), 10.0).trace
    g = extract_temporal_graph(tr, net)
    assert g.n_events == 4 and g.n_arcs == 3
    assert enumerate_paths(g).as_tuples() == [(0, 1, 2, 3)]


def test_chain_length_cap_and_prefixes():
    g = extract_temporal_graph(run(_chain(), explicit((0.0, 0)), 10.0).trace, _chain())
    assert enumerate_paths(g, max_len=2).as_tuples() == [(0, 1)]
    assert enumerate_paths(g, prefixes=True).as_tuples() == [(0, 1), (0, 1, 2), (0, 1, 2, 3)]
    assert enumerate_paths(g, hidden_only=True).as_tuples() == [(1, 2, 3)]
    with pytest.raises(ValueError):
        enumerate_paths(g, max_len=1)


def test_diamond_gives_two_paths():
    # 0 -> {1, 2} -> 3; 3 needs both impulses
    net = tiny_net(4, [(0, 1), (0, 2), (1, 3), (2, 3)], [1.5, 1.5, 0.6, 0.6], [10, 12, 10, 9], n_input=1)
    tr = run(net, explicit((0.0, 0)), 10.0).trace
    g = extract_temporal_graph(tr, net)
    assert sorted(enumerate_paths(g).as_tuples()) == [(0, 1, 3), (0, 2, 3)]


def test_empty_trace():
    net = _chain()
    g = extract_temporal_graph(run(net, explicit(), 5.0).trace, net)
    assert g.n_events == 0 and len(enumerate_paths(g)) == 0


def test_extraction_from_bytes_matches_memory():
    net = build_sbm(80, 40, 0.2, 0.2, seed=3, physiology=PhysiologyConfig(excitatory_fraction=0.8))
    tr = run(net, StimulusSchedule(np.arange(0, 80, 3), "tonic", 10.0), 40.0).trace
    a = extract_temporal_graph(tr, net)
    b = extract_temporal_graph(ActivationTrace.from_bytes(tr.to_bytes()), net)
    for name in ("arc_src", "arc_dst", "arc_edge"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_walks_match_brute_force(seed, max_len):
    net = build_sbm(30, 25, 0.25, 0.25, seed=seed, physiology=PhysiologyConfig(excitatory_fraction=0.8))
    rng = np.random.default_rng(seed)
    tr = run(net, StimulusSchedule(np.flatnonzero(rng.random(30) < 0.3)), 20.0, max_events=50).trace
    g = extract_temporal_graph(tr, net)
    assert g.n_events <= 50
    arcs = list(zip(g.arc_src.tolist(), g.arc_dst.tolist()))
    want = brute_force_paths(g.event_nodes, arcs, np.flatnonzero(g.is_source).tolist(), max_len)
    got = enumerate_paths(g, max_len=max_len).as_tuples()
    assert sorted(got) == sorted(want)
    # every arc moves forward in time
    assert np.all(g.event_ticks[g.arc_dst] > g.event_ticks[g.arc_src])


def test_path_cap_truncates_or_samples():
    net = build_sbm(60, 40, 0.3, 0.3, seed=5, physiology=PhysiologyConfig(excitatory_fraction=0.9))
    tr = run(net, StimulusSchedule(np.arange(0, 60, 2)), 15.0, max_events=120).trace
    g = extract_temporal_graph(tr, net)
    full = enumerate_paths(g, 4).as_tuples()
    assert len(full) > 20
    assert enumerate_paths(g, 4, max_paths=20).as_tuples() == full[:20]
    a = enumerate_paths(g, 4, max_paths=20, sample_seed=3).as_tuples()
    b = enumerate_paths(g, 4, max_paths=20, sample_seed=3).as_tuples()
    assert a == b and len(a) == 20 and set(a) <= set(full)
    assert a != full[:20]
