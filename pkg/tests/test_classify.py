import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crdm.classify import (
    EvalReport,
    KnnConfig,
    accuracy_vs_time,
    evaluate,
    knn_predict,
    knn_predict_many,
    pairwise_distances,
)
from crdm.data import SplitPlan
from crdm.embed import EmbeddingSpace
from crdm.plasticity import WeightTrajectory

from .oracles import knn_oracle


def test_one_item_space():
    s = EmbeddingSpace(np.array([[0.3, -1.0]]), [7])
    for q in ([0.0, 0.0], [100.0, 5.0], [0.3, -1.0]):
        assert knn_predict(s, np.array(q), KnnConfig(k=5)) == 7


def test_neighbour_tie_prefers_lower_index():
    s = EmbeddingSpace(np.array([[1.0], [-1.0]]), [3, 2])
    assert knn_predict(s, np.array([0.0]), KnnConfig(k=1, weighting="majority")) == 3


def test_vote_tie_prefers_smaller_label():
    s = EmbeddingSpace(np.array([[1.0], [-1.0]]), [3, 2])
    assert knn_predict(s, np.array([0.0]), KnnConfig(k=2, weighting="majority")) == 2
    assert knn_predict(s, np.array([0.0]), KnnConfig(k=2)) == 2


def test_bad_inputs():
    s = EmbeddingSpace(np.zeros((3, 2)), [0, 1, 2])
    with pytest.raises(ValueError):
        knn_predict(s, np.zeros(3), KnnConfig())
    with pytest.raises(ValueError):
        KnnConfig(k=0)
    with pytest.raises(ValueError):
        KnnConfig(metric="manhattan")
    with pytest.raises(ValueError):
        knn_predict_many(EmbeddingSpace(np.zeros((0, 2)), []), np.zeros((1, 2)), KnnConfig())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 500), st.integers(1, 9),
       st.sampled_from(["euclidean", "cosine"]), st.sampled_from(["majority", "inverse-distance"]))
def test_matches_brute_force(seed, n, k, metric, weighting):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 6))
    items = rng.normal(size=(n, dim)) + rng.normal(size=dim) * 3
    labels = rng.integers(0, 10, n)
    queries = rng.normal(size=(5, dim))
    cfg = KnnConfig(k=k, metric=metric, weighting=weighting)
    got = knn_predict_many(EmbeddingSpace(items, labels), queries, cfg)
    want = [knn_oracle(items.tolist(), labels, q.tolist(), k, metric, weighting, cfg.epsilon) for q in queries]
    assert got.tolist() == want


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_cosine_scale_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    items, q = rng.normal(size=(40, 4)), rng.normal(size=(6, 4))
    labels = rng.integers(0, 10, 40)
    cfg = KnnConfig(metric="cosine")
    base = knn_predict_many(EmbeddingSpace(items, labels), q, cfg)
    scaled = knn_predict_many(EmbeddingSpace(items * a, labels), q * b, cfg)
    assert np.array_equal(base, scaled)


def test_centred_euclidean_matches_direct_with_large_offset():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 3)) + 1e6
    q = rng.normal(size=(4, 3)) + 1e6
    direct = np.linalg.norm(q[:, None, :] - x[None, :, :], axis=2)
    assert np.allclose(pairwise_distances(q, x, "euclidean"), direct, atol=1e-6)


def test_duplicated_items_are_perfect():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 8))
    labels = rng.integers(0, 10, 200)
    s = EmbeddingSpace(x, labels)
    assert np.array_equal(knn_predict_many(s, x, KnnConfig(k=5)), labels)


def test_random_labels_sit_at_chance():
    rng = np.random.default_rng(4)
    space = EmbeddingSpace(rng.normal(size=(1000, 16)), rng.permutation(np.repeat(np.arange(10), 100)))
    rep = evaluate(space, SplitPlan(seed=1, embedding_count=900, query_count=100, repeats=10), KnnConfig())
    assert abs(rep.accuracy_mean - 0.1) <= 0.03


def test_report_fields_and_round_trip():
    x = np.repeat(np.eye(10), 10, axis=0) + np.random.default_rng(0).normal(scale=0.01, size=(100, 10))
    labels = np.repeat(np.arange(10), 10)
    rep = evaluate(EmbeddingSpace(x, labels), SplitPlan(seed=0, embedding_count=80, query_count=20, repeats=4), KnnConfig())
    assert rep.accuracy_mean == 1.0 and rep.accuracy_std == 0.0 and rep.repeats == 4
    assert np.array(rep.confusion).sum() == 80
    back = EvalReport.from_json(rep.to_json())
    assert back == rep
    assert len(rep.csv_header().split(",")) == len(rep.csv_row().split(",")) == 13


def test_flat_curve_without_plasticity():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(60, 12))
    labels = rng.integers(0, 10, 60)
    trajs = [WeightTrajectory(str(i), [100.0, 200.0, 300.0], np.tile(base[i], (3, 1))) for i in range(60)]
    curve = accuracy_vs_time(trajs, labels, SplitPlan(seed=2, embedding_count=50, query_count=10, repeats=3), KnnConfig())
    assert list(curve) == [100.0, 200.0, 300.0]
    vals = {r.accuracy_mean for r in curve.values()}
    assert len(vals) == 1


def test_ragged_trajectories_rejected():
    a = WeightTrajectory("a", [100.0, 200.0], np.zeros((2, 3)))
    b = WeightTrajectory("b", [100.0, 300.0], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        accuracy_vs_time([a, b], [0, 1], SplitPlan(seed=0, embedding_count=1, query_count=1, repeats=1), KnnConfig())
