import numpy as np
import pytest

from crdm.netgen import (
    GeometricNetwork,
    PhysiologyConfig,
    assign_physiology,
    bnn_param_count,
    build_reservoir,
    build_sbm,
    quantize_delays,
    reservoir_edge_count,
)


def test_sbm_blocks():
    net = build_sbm(784, 200, 0.2, 0.1, seed=3)
    assert net.n_nodes == 984
    assert len(net.input_ids) == 784 and len(net.hidden_ids) == 200
    is_in = np.isin(net.src, net.input_ids), np.isin(net.dst, net.input_ids)
    assert not np.any(is_in[1])  # nothing lands on an input node
    assert not np.any(net.src == net.dst)


def test_sbm_zero_probabilities():
    net = build_sbm(784, 200, 0.0, 0.0, seed=0)
    assert net.n_edges == 0


def test_sbm_cross_block_count_binomial():
    expected = 0.1 * 784 * 200
    sigma = np.sqrt(784 * 200 * 0.1 * 0.9)
    for seed in range(20):
        net = build_sbm(784, 200, 0.2, 0.1, seed=seed)
        cross = int(np.sum(net.src < 784))
        assert abs(cross - expected) <= 3 * sigma


@pytest.mark.parametrize("n", [1, 5, 200])
def test_reservoir_edge_counts(n):
    net = build_reservoir(n, 0.7, seed=2)
    assert net.n_edges == 784 * n + n * (n - 1) == reservoir_edge_count(n)
    assert int(np.sum(net.src < 784)) == 784 * n
    pairs = set(zip(net.src[net.src < 784].tolist(), net.dst[net.src < 784].tolist()))
    assert len(pairs) == 784 * n


def test_reservoir_self_loops_toggle():
    net = build_reservoir(4, 0.7, seed=2, self_loops=True)
    assert net.n_edges == 784 * 4 + 16


def test_excitatory_fraction():
    net = build_reservoir(200, 0.7, seed=5)
    frac = np.mean(net.weights > 0)
    assert abs(frac - 0.7) <= 0.01


def test_weight_ranges_and_delays():
    p = PhysiologyConfig()
    net = build_reservoir(20, 0.7, seed=1, physiology=p)
    exc, inh = net.weights[net.weights > 0], net.weights[net.weights < 0]
    assert exc.min() >= p.w_lo and exc.max() <= p.w_hi
    assert inh.min() >= -p.w_hi and inh.max() <= -p.w_lo
    assert net.delays.min() >= 1
    assert net.delays.max() * p.tick <= 20.0


def test_identical_positions_floor_to_one_tick():
    assert quantize_delays(np.array([0.0]), 0.09, 0.1).tolist() == [1]


def test_halving_velocity_never_shortens_delays():
    net = build_sbm(50, 30, 0.3, 0.3, seed=4)
    slow = assign_physiology(net, PhysiologyConfig(velocity=0.045), seed=4)
    assert np.all(slow.delays >= net.delays)


def test_delays_match_independent_recomputation():
    rng = np.random.default_rng(0)
    a, b = rng.random((10_000, 3)), rng.random((10_000, 3))
    got = quantize_delays(np.linalg.norm(a - b, axis=1), 0.09, 0.1)
    for i in range(0, 10_000, 97):
        d = sum((x - y) ** 2 for x, y in zip(a[i], b[i])) ** 0.5
        want = max(1, int(np.ceil(d / 0.09 / 0.1)))
        assert got[i] == want


def test_invalid_physiology():
    net = build_reservoir(2, 0.7, seed=0)
    with pytest.raises(ValueError):
        assign_physiology(net, PhysiologyConfig(w_lo=0.8, w_hi=0.4), 0)
    with pytest.raises(ValueError):
        assign_physiology(net, PhysiologyConfig(velocity=0.0), 0)


def test_same_seed_bit_identical():
    a = build_reservoir(10, 0.7, seed=9)
    b = build_reservoir(10, 0.7, seed=9)
    assert a.to_dict() == b.to_dict()
    c = build_reservoir(10, 0.7, seed=10)
    assert not np.array_equal(a.weights, c.weights)


def test_json_round_trip_keeps_canonical_order(tmp_path):
    net = build_sbm(30, 20, 0.3, 0.2, seed=1)
    net.save(tmp_path / "net.json")
    back = GeometricNetwork.load(tmp_path / "net.json")
    for name in ("src", "dst", "weights", "delays", "positions", "thresholds", "refractory_ticks"):
        assert np.array_equal(getattr(net, name), getattr(back, name))
    key = back.src * back.n_nodes + back.dst
    assert np.all(np.diff(key) > 0)


def test_param_count_formula():
    assert bnn_param_count(200) == 40_600
    assert bnn_param_count(5) == 40
