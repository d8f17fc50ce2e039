import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from samgc import autodiff as ad
from samgc.autodiff import Parameter, Tape
from samgc.errors import ConfigurationError
from samgc.gradcheck import check_gradients, random_graph
from samgc.graph import Graph, induced_subgraph
from samgc.layer import forward
from samgc.pooling import PoolingParams, pool, rank_nodes, score_nodes


def make_pool(c=4, c_embed=3, c_out=2, **kwargs):
    kwargs.setdefault("r", 2)
    kwargs.setdefault("d_nw", 2)
    return PoolingParams.create(c, c_embed, c_out, **kwargs)


class TestScores:
    def test_identical_features_give_uniform_scores(self):
        h = np.tile([[0.3, -1.0, 2.0, 0.5]], (5, 1))
        _, scores = score_nodes(h, make_pool())
        assert_allclose(scores.data[:, 0], np.full(5, 0.2))

    def test_single_node_scores_one(self, rng):
        _, scores = score_nodes(rng.normal(size=(1, 4)), make_pool())
        assert scores.item() == pytest.approx(1.0)

    def test_matches_two_pass_softmax(self, rng):
        params = make_pool()
        h = rng.normal(size=(7, 4))
        logits = (np.maximum(h @ params.w_p.data, 0.0) @ params.w_1.data)[:, 0]
        peak = logits.max()
        expected = np.exp(logits - peak) / np.exp(logits - peak).sum()
        embedded, scores = score_nodes(h, params)
        assert_allclose(scores.data[:, 0], expected, atol=1e-12)
        assert embedded.shape == (7, 3)
        assert scores.data.sum() == pytest.approx(1.0)


class TestRank:
    def test_ties_prefer_lower_index(self):
        assert_array_equal(rank_nodes([0.2, 0.4, 0.4, 0.1], 1), [1])
        assert_array_equal(rank_nodes([0.25, 0.25, 0.25, 0.25], 2), [0, 1])

    def test_selection_is_sorted(self):
        assert_array_equal(rank_nodes([0.1, 0.5, 0.05, 0.3, 0.05], 3), [0, 1, 3])


class TestPool:
    def test_keep_all_is_identity_on_graph(self, small_graph, rng):
        params = make_pool(w=small_graph.n)
        out = pool(rng.normal(size=(small_graph.n, 4)), small_graph, None, params)
        assert_array_equal(out.selected, np.arange(small_graph.n))
        assert out.pooled_graph.same_as(small_graph)

    def test_dominant_node_is_kept(self, path_graph):
        params = make_pool(w=1)
        params.w_p.data[...] = 0.0
        params.w_p.data[0, 0] = 1.0
        params.w_1.data[...] = 0.0
        params.w_1.data[0, 0] = 1.0
        h = np.zeros((4, 4))
        h[2, 0] = 10.0
        out = pool(h, path_graph, None, params)
        assert_array_equal(out.selected, [2])
        assert out.pooled_graph.n == 1 and out.pooled_graph.num_edges == 0
        assert out.h_select.shape == (1, 2)

    def test_six_node_trace(self, rng):
        g = random_graph(6, 0.5, rng)
        h = rng.normal(size=(6, 4))
        params = make_pool(ratio=0.5)
        out = pool(h, g, None, params)

        embedded, scores = score_nodes(h, params)
        expected = np.sort(np.argsort(-scores.data[:, 0], kind="stable")[:3])
        assert_array_equal(out.selected, expected)
        assert_allclose(out.scores, scores.data[:, 0])

        refined = forward(embedded.data * scores.data, g, None, params.inner).z.data
        assert_allclose(out.h_select.data, refined[expected], atol=1e-12)
        assert out.pooled_graph.same_as(induced_subgraph(g, expected))

    def test_ratio_rounds_up(self, path_graph, rng):
        out = pool(rng.normal(size=(4, 4)), path_graph, None, make_pool(ratio=0.3))
        assert out.selected.size == 2

    def test_rejects_more_nodes_than_graph(self, path_graph, rng):
        with pytest.raises(ConfigurationError):
            pool(rng.normal(size=(4, 4)), path_graph, None, make_pool(w=5))

    def test_rejects_bad_ratio(self):
        with pytest.raises(ConfigurationError):
            make_pool(ratio=1.5)

    def test_parameter_names(self):
        names = list(make_pool().named_parameters("pool0."))
        assert names[:2] == ["pool0.w_p", "pool0.w_1"]
        assert "pool0.inner.w" in names

    def test_scores_sum_to_one(self, rng):
        g = Graph.from_edges(3, [(0, 1)])
        out = pool(rng.normal(size=(3, 4)), g, None, make_pool(w=2))
        assert out.scores.sum() == pytest.approx(1.0)

    def test_pooled_graph_is_built_on_demand(self, small_graph, rng):
        h = rng.normal(size=(small_graph.n, 4))
        out = pool(h, small_graph, None, make_pool(ratio=0.5))
        assert "pooled_graph" not in vars(out)
        assert out.pooled_graph.same_as(induced_subgraph(small_graph, out.selected))
        assert "pooled_graph" in vars(out)


class TestSortOracle:
    def test_rank_matches_sort_with_ties(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 15))
            scores = rng.integers(0, 4, size=n) / 4.0
            w = int(rng.integers(1, n + 1))
            expected = sorted(sorted(range(n), key=lambda i: (-scores[i], i))[:w])
            assert_array_equal(rank_nodes(scores, w), expected)

    def test_pool_matches_sort_on_random_graphs(self, rng):
        for trial in range(20):
            n = int(rng.integers(2, 12))
            g = random_graph(n, 0.4, rng)
            # repeated rows score identically
            h = rng.normal(size=(3, 4))[rng.integers(0, 3, size=n)]
            params = make_pool(ratio=float(rng.uniform(0.1, 1.0)), seed=trial)
            out = pool(h, g, None, params)
            w = params.resolve_w(n)
            scores = out.scores
            expected = sorted(sorted(range(n), key=lambda i: (-scores[i], i))[:w])
            assert_array_equal(out.selected, expected)
            assert out.h_select.shape == (w, 2)
            assert scores.sum() == pytest.approx(1.0, abs=1e-9)


def pooled_class_loss(h, g, params, head, label):
    out = pool(h, g, None, params)
    logits = ad.matmul(ad.reduce_rows(out.h_select, "mean"), head)
    return ad.cross_entropy_mean(logits, np.array([label]))


class TestScoreGradients:
    @pytest.fixture
    def toy(self, rng):
        g = random_graph(8, 0.5, rng)
        params = make_pool(w=4)
        params.w_p.data[...] = np.abs(params.w_p.data) + 0.1
        # only the h_v block of the refining layer is live
        inner = params.inner.w.data
        inner[...] = 0.0
        inner[:3] = rng.uniform(0.5, 1.0, size=(3, inner.shape[1]))
        head = Parameter(rng.normal(size=(2, 2)))
        return g, rng.uniform(0.5, 1.5, size=(8, 4)), params, head

    @pytest.mark.parametrize("label", [0, 1])
    def test_class_loss_reaches_score_weights(self, toy, label):
        g, h, params, head = toy
        with Tape():
            loss = pooled_class_loss(h, g, params, head, label)
        ad.backward(loss)
        assert np.abs(params.w_1.grad).max() > 1e-8
        assert np.abs(params.w_p.grad).max() > 1e-8

    def test_score_gradients_match_finite_differences(self, toy):
        g, h, params, head = toy
        errors = check_gradients(
            lambda: pooled_class_loss(h, g, params, head, 1),
            {"w_1": params.w_1, "w_p": params.w_p, "head": head},
        )
        assert max(errors.values()) < 1e-5
