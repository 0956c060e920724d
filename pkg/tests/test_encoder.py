"""Reference encoder: layer math, layered/full equivalence, pooling."""

import numpy as np
import pytest

from scoregraph import (ConfigError, EdgeType, GraphOptions, LayerParams,
                        NOTE_RELATIONS, UNBOUNDED, build_score_graph,
                        encoder_forward, init_params, onset_pool,
                        sage_layer_forward, sample_khop, sample_target_window,
                        synthetic_score)
from scoregraph.sampling import TargetWindow
from conftest import make_score, random_graph


def identity_layer(dim, relations=(EdgeType.ONSET,), self_scale=1.0):
    eye = np.eye(dim, dtype=np.float32)
    return LayerParams(weights={r: eye.copy() for r in relations},
                       self_weight=self_scale * eye)


class TestInitParams:
    def test_deterministic(self):
        a = init_params(hidden=16, seed=42)
        b = init_params(hidden=16, seed=42)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.self_weight, lb.self_weight)
            for r in a.relations:
                assert np.array_equal(la.weights[r], lb.weights[r])

    def test_shapes(self):
        p = init_params(d_in=23, hidden=256, num_layers=3)
        assert p.layers[0].weights[EdgeType.ONSET].shape == (256, 23)
        assert p.layers[1].weights[EdgeType.ONSET].shape == (256, 256)
        assert p.layers[0].self_weight.shape == (256, 23)

    def test_seeds_differ(self):
        a = init_params(hidden=8, seed=0)
        b = init_params(hidden=8, seed=1)
        assert not np.array_equal(a.layers[0].self_weight,
                                  b.layers[0].self_weight)

    def test_bound_is_glorot(self):
        p = init_params(d_in=23, hidden=256, num_layers=1, seed=3)
        bound = np.sqrt(6.0 / (23 + 256))
        w = p.layers[0].weights[EdgeType.ONSET]
        assert np.abs(w).max() <= bound

    def test_bad_dims_rejected(self):
        with pytest.raises(ConfigError):
            init_params(d_in=0)
        with pytest.raises(ConfigError):
            init_params(activation="tanh")


class TestSageLayer:
    def test_no_edges_identity(self):
        h = np.arange(12, dtype=np.float32).reshape(4, 3)
        layer = identity_layer(3)
        out = sage_layer_forward({}, h, layer, "identity")
        np.testing.assert_array_equal(out, h.astype(np.float64))

    def test_single_edge_adds_neighbor(self):
        h = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        edges = {EdgeType.ONSET: np.array([[0, 1]])}
        out = sage_layer_forward(edges, h, identity_layer(2), "identity")
        np.testing.assert_array_equal(out[1], [1.0, 1.0])  # h_u + h_v
        np.testing.assert_array_equal(out[0], [1.0, 0.0])

    def test_mean_of_two_neighbors(self):
        h = np.array([[2.0, 0.0], [0.0, 4.0], [0.0, 0.0]], dtype=np.float32)
        edges = {EdgeType.ONSET: np.array([[0, 2], [1, 2]])}
        layer = identity_layer(2, self_scale=0.0)
        out = sage_layer_forward(edges, h, layer, "identity")
        np.testing.assert_array_equal(out[2], [1.0, 2.0])

    def test_relations_summed_after_per_relation_mean(self):
        h = np.array([[2.0], [4.0], [0.0]], dtype=np.float32)
        edges = {EdgeType.ONSET: np.array([[0, 2], [1, 2]]),
                 EdgeType.FOLLOW: np.array([[0, 2]])}
        layer = identity_layer(1, relations=(EdgeType.ONSET, EdgeType.FOLLOW),
                               self_scale=0.0)
        out = sage_layer_forward(edges, h, layer, "identity")
        assert out[2, 0] == pytest.approx(3.0 + 2.0)

    def test_relu_applied(self):
        h = np.array([[-1.0, 2.0]], dtype=np.float32)
        out = sage_layer_forward({}, h, identity_layer(2), "relu")
        np.testing.assert_array_equal(out, [[0.0, 2.0]])

    def test_shape_mismatch_rejected(self):
        h = np.zeros((2, 3), dtype=np.float32)
        with pytest.raises(ConfigError):
            sage_layer_forward({}, h, identity_layer(4), "identity")


def graph_params(graph, hidden=24, num_layers=3, seed=0):
    relations = tuple(t for t in NOTE_RELATIONS if t in graph.edges)
    return init_params(relations=relations, d_in=graph.feature_width,
                       hidden=hidden, num_layers=num_layers, seed=seed)


class TestEncoderForward:
    def test_single_layer_equals_sage_layer(self, rng):
        g = random_graph(rng, num_notes=40)
        params = graph_params(g, num_layers=1)
        full = encoder_forward(g, g.note_features, params)
        direct = sage_layer_forward(g.edges, g.note_features,
                                    params.layers[0], params.activation)
        np.testing.assert_array_equal(full, direct)

    def test_layered_equals_full_with_unbounded_fanouts(self, rng):
        g = random_graph(rng, num_notes=70,
                         options=GraphOptions(inverse_edges=True))
        params = graph_params(g)
        w = sample_target_window(g, 12, rng)
        sub = sample_khop(g, w, (UNBOUNDED,) * 3, rng)
        full = encoder_forward(g, g.note_features, params)[w.node_ids()]
        layered = encoder_forward(sub, g.note_features, params)
        rel = np.abs(full - layered) / np.maximum(np.abs(full), 1e-12)
        assert rel.max() < 1e-5

    def test_permutation_equivariance(self, rng):
        g = random_graph(rng, num_notes=50)
        params = graph_params(g)
        perm = rng.permutation(g.note_count)
        permuted_edges = {t: perm[rows] if len(rows) else rows
                          for t, rows in g.edges.items()}
        permuted = type(g)(
            note_count=g.note_count, beat_count=0, measure_count=0,
            edges=permuted_edges,
            note_features=np.empty_like(g.note_features),
            beat_features=g.beat_features, measure_features=g.measure_features,
            note_onsets=g.note_onsets, note_pitches=g.note_pitches,
            beat_spans=g.beat_spans, measure_spans=g.measure_spans,
            divisions_per_quarter=g.divisions_per_quarter, options=g.options)
        permuted.note_features[perm] = g.note_features
        out = encoder_forward(g, g.note_features, params)
        out_perm = encoder_forward(permuted, permuted.note_features, params)
        assert np.abs(out_perm[perm] - out).max() < 1e-6

    def test_depth_mismatch_rejected(self, rng):
        g = random_graph(rng, num_notes=20)
        params = graph_params(g, num_layers=2)
        w = TargetWindow(score_index=0, lo=0, hi=3)
        sub = sample_khop(g, w, (2, 2, 2), rng)
        with pytest.raises(ConfigError):
            encoder_forward(sub, g.note_features, params)

    def test_locality_far_nodes_do_not_leak(self):
        # abutting chain: one reversed hop reaches back two notes at most
        # (follow from the previous note, silence skipping one), so 3 layers
        # from note 11 can never touch note 0
        score = make_score([(i, 1, 60) for i in range(12)])
        g = build_score_graph(score)
        params = graph_params(g, num_layers=3, hidden=8)
        w = TargetWindow(score_index=0, lo=11, hi=12)
        sub = sample_khop(g, w, (UNBOUNDED,) * 3, np.random.default_rng(0))
        assert 0 not in set(sub.node_set.tolist())
        x = g.note_features.copy()
        base = encoder_forward(sub, x, params)
        x2 = x.copy()
        x2[0] += 17.0
        np.testing.assert_array_equal(encoder_forward(sub, x2, params), base)

    def test_full_graph_locality_bit_identical(self, rng):
        # feature change beyond k hops from the probe node leaves it intact
        score = make_score([(i * 3, 1, 60) for i in range(8)])
        g = build_score_graph(score)
        params = graph_params(g, num_layers=2, hidden=8)
        x = g.note_features.copy()
        base = encoder_forward(g, x, params)
        x2 = x.copy()
        x2[7] += 5.0  # far from note 0 in reversed hops
        out = encoder_forward(g, x2, params)
        np.testing.assert_array_equal(out[0], base[0])


class TestOnsetPool:
    def test_group_mean(self):
        emb = np.array([[2.0, 0.0], [0.0, 2.0], [5.0, 5.0]])
        pooled = onset_pool(emb, np.array([0, 0, 1]))
        np.testing.assert_array_equal(
            pooled, [[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]])

    def test_distinct_onsets_identity(self):
        emb = np.arange(6, dtype=np.float64).reshape(3, 2)
        np.testing.assert_array_equal(onset_pool(emb, np.array([0, 1, 2])), emb)

    def test_all_equal_onsets_global_mean(self, rng):
        emb = rng.normal(size=(5, 3))
        pooled = onset_pool(emb, np.zeros(5, dtype=np.int64))
        np.testing.assert_allclose(pooled, np.tile(emb.mean(axis=0), (5, 1)),
                                   rtol=1e-12)

    def test_idempotent_and_mean_preserving(self, rng):
        emb = rng.normal(size=(40, 6))
        onsets = rng.integers(0, 9, size=40)
        once = onset_pool(emb, onsets)
        twice = onset_pool(once, onsets)
        np.testing.assert_allclose(twice, once, rtol=1e-12)
        for o in np.unique(onsets):
            np.testing.assert_allclose(once[onsets == o].mean(axis=0),
                                       emb[onsets == o].mean(axis=0),
                                       rtol=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            onset_pool(np.zeros((3, 2)), np.zeros(4, dtype=np.int64))
