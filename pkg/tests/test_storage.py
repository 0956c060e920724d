"""Serialization: round trips, corruption detection, byte stability."""

import numpy as np
import pytest

from scoregraph import (ChecksumError, FileFormatError, GraphOptions,
                        NOTE_RELATIONS, SamplerConfig, build_score_graph,
                        init_params, read_batch_container, read_graph_file,
                        read_params_file, sample_batch, synthetic_score,
                        write_batch_container, write_graph_file,
                        write_params_file)
from scoregraph.storage import graph_to_bytes
from conftest import make_score


def graphs_equal(a, b):
    assert a.note_count == b.note_count
    assert a.beat_count == b.beat_count
    assert a.measure_count == b.measure_count
    assert a.divisions_per_quarter == b.divisions_per_quarter
    assert a.options == b.options
    assert set(a.edges) == set(b.edges)
    for t in a.edges:
        assert np.array_equal(a.edges[t], b.edges[t])
    for name in ("note_features", "beat_features", "measure_features",
                 "note_onsets", "note_pitches", "beat_spans", "measure_spans"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@pytest.fixture
def sample_graph(rng):
    score = synthetic_score(60, rng)
    return build_score_graph(score,
                             GraphOptions(inverse_edges=True, metrical=True))


class TestGraphFiles:
    def test_round_trip(self, sample_graph, tmp_path):
        path = tmp_path / "g.graph"
        write_graph_file(sample_graph, path)
        graphs_equal(sample_graph, read_graph_file(path))

    def test_empty_graph_round_trip(self, tmp_path):
        graph = build_score_graph(make_score([]), GraphOptions(metrical=True))
        path = tmp_path / "empty.graph"
        write_graph_file(graph, path)
        loaded = read_graph_file(path)
        graphs_equal(graph, loaded)
        assert loaded.note_count == 0

    def test_corrupted_payload_detected(self, sample_graph, tmp_path):
        blob = bytearray(graph_to_bytes(sample_graph))
        blob[-3] ^= 0xFF
        path = tmp_path / "bad.graph"
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            read_graph_file(path)

    def test_version_mismatch_detected(self, sample_graph, tmp_path):
        blob = graph_to_bytes(sample_graph)
        blob = blob.replace(b'"format_version":1', b'"format_version":9', 1)
        path = tmp_path / "v9.graph"
        path.write_bytes(blob)
        with pytest.raises(FileFormatError, match="version"):
            read_graph_file(path)

    def test_truncated_payload_detected(self, sample_graph, tmp_path):
        blob = graph_to_bytes(sample_graph)
        path = tmp_path / "trunc.graph"
        path.write_bytes(blob[:-10])
        with pytest.raises(FileFormatError):
            read_graph_file(path)

    def test_bad_magic_detected(self, tmp_path):
        path = tmp_path / "junk.graph"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FileFormatError, match="magic"):
            read_graph_file(path)


class TestBatchContainers:
    def make_corpus(self, rng):
        opts = GraphOptions(inverse_edges=True, metrical=True)
        return [build_score_graph(synthetic_score(n, rng), opts)
                for n in (40, 60, 80)]

    def test_round_trip(self, rng, tmp_path):
        corpus = self.make_corpus(rng)
        cfg = SamplerConfig(target_size=15, scores_per_batch=2, seed=7,
                            include_metrical=True)
        batches = [sample_batch(corpus, cfg, i) for i in range(3)]
        path = tmp_path / "b.batches"
        write_batch_container(path, batches, cfg, ["a", "b", "c"])
        cfg2, names, loaded = read_batch_container(path)
        assert cfg2 == cfg
        assert names == ["a", "b", "c"]
        assert len(loaded) == 3
        for orig, back in zip(batches, loaded):
            assert back.batch_index == orig.batch_index
            assert back.config == cfg
            assert set(back.edges) == set(orig.edges)
            for t in orig.edges:
                assert np.array_equal(orig.edges[t], back.edges[t])
            for name in ("note_features", "beat_features", "measure_features",
                         "note_onsets", "note_pitches", "target_ids",
                         "score_records"):
                assert np.array_equal(getattr(orig, name), getattr(back, name))

    def test_byte_stable(self, rng, tmp_path):
        corpus = self.make_corpus(rng)
        cfg = SamplerConfig(target_size=10, scores_per_batch=3, seed=5,
                            include_metrical=True)
        p1, p2 = tmp_path / "one", tmp_path / "two"
        for p in (p1, p2):
            batches = [sample_batch(corpus, cfg, i) for i in range(2)]
            write_batch_container(p, batches, cfg, ["x", "y", "z"])
        assert p1.read_bytes() == p2.read_bytes()

    def test_unbounded_fanout_survives(self, rng, tmp_path):
        corpus = self.make_corpus(rng)
        cfg = SamplerConfig(target_size=10, scores_per_batch=1,
                            fanouts=(None, 2), seed=1, include_metrical=True)
        path = tmp_path / "u.batches"
        write_batch_container(path, [sample_batch(corpus, cfg)], cfg, ["g"])
        cfg2, _, _ = read_batch_container(path)
        assert cfg2.fanouts == (None, 2)

    def test_count_mismatch_detected(self, rng, tmp_path):
        corpus = self.make_corpus(rng)
        cfg = SamplerConfig(target_size=10, scores_per_batch=1, seed=1,
                            include_metrical=True)
        path = tmp_path / "c.batches"
        write_batch_container(path, [sample_batch(corpus, cfg)], cfg, ["g"])
        blob = path.read_bytes().replace(b'"num_batches":1',
                                         b'"num_batches":2', 1)
        path.write_bytes(blob)
        with pytest.raises(FileFormatError, match="announces"):
            read_batch_container(path)


class TestParamsFiles:
    def test_round_trip(self, tmp_path):
        params = init_params(relations=NOTE_RELATIONS, d_in=23, hidden=16,
                             num_layers=3, seed=9)
        path = tmp_path / "p.params"
        write_params_file(params, path)
        loaded = read_params_file(path)
        assert loaded.activation == params.activation
        assert loaded.relations == params.relations
        assert (loaded.d_in, loaded.hidden) == (params.d_in, params.hidden)
        for la, lb in zip(params.layers, loaded.layers):
            assert np.array_equal(la.self_weight, lb.self_weight)
            for r in params.relations:
                assert np.array_equal(la.weights[r], lb.weights[r])
