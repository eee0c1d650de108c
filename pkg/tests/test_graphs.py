import json

import numpy as np
import pytest

from gcnfuse import (
    DatasetFormatError,
    Dataset,
    FusionBatch,
    GeneratorSpec,
    Graph,
    InvalidSpecError,
    ScalarGraph,
    load_dataset,
    sample_batch,
    synthesize_dataset,
    write_dataset,
)
from conftest import make_graph, path_graph


class TestGraph:
    def test_edges_canonicalized(self):
        g = make_graph(3, edges=[(2, 0), (1, 2)])
        assert g.edges == ((0, 2), (1, 2))

    def test_self_loop_rejected(self):
        with pytest.raises(DatasetFormatError):
            make_graph(2, edges=[(1, 1)])

    def test_duplicate_edge_rejected(self):
        with pytest.raises(DatasetFormatError):
            make_graph(3, edges=[(0, 1), (1, 0)])

    def test_out_of_range_endpoint_rejected(self):
        with pytest.raises(DatasetFormatError):
            make_graph(3, edges=[(0, 5)])

    def test_feature_row_count_checked(self):
        with pytest.raises(DatasetFormatError):
            Graph(num_vertices=2, edges=(), features=np.zeros((3, 1)))

    def test_degrees_count_self(self):
        # isolated vertex has degree 1, never 0
        g = make_graph(3, edges=[(0, 1)])
        assert np.array_equal(g.degrees(), [2.0, 2.0, 1.0])

    def test_same_structure(self):
        a = path_graph(3)
        b = make_graph(3, edges=[(0, 1), (1, 2)])
        c = make_graph(3, edges=[(0, 1)])
        assert a.same_structure(b)
        assert not a.same_structure(c)

    def test_features_immutable(self):
        g = make_graph(2, values=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            g.features[0, 0] = 9.0


class TestScalarGraph:
    def test_length_checked(self):
        with pytest.raises(DatasetFormatError):
            ScalarGraph(graph=path_graph(3), values=np.zeros(2))


class TestDataset:
    def test_feature_dim_mismatch(self):
        g1 = make_graph(2, feature_dim=3)
        g2 = make_graph(2, feature_dim=2)
        with pytest.raises(DatasetFormatError, match="graph 1"):
            Dataset(graphs=(g1, g2), feature_dim=3)


class TestFusionBatch:
    def test_sample_size(self):
        batch = FusionBatch(graphs=(path_graph(2), path_graph(3)))
        assert batch.sample_size == 2

    def test_empty_rejected(self):
        with pytest.raises(InvalidSpecError):
            FusionBatch(graphs=())


class TestLoadDataset:
    def test_single_record(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(
            json.dumps({"feature_dim": 3}) + "\n"
            + json.dumps({"n": 2, "edges": [[0, 1]], "x": [[1, 2, 3], [4, 5, 6]], "y": 0.5}) + "\n"
        )
        ds = load_dataset(p)
        assert len(ds) == 1 and ds.feature_dim == 3
        g = ds.graphs[0]
        assert g.edges == ((0, 1),)
        assert g.target == 0.5
        assert np.array_equal(g.features, [[1, 2, 3], [4, 5, 6]])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("")
        with pytest.raises(DatasetFormatError, match="empty dataset"):
            load_dataset(p)

    def test_bad_edge_names_record(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(
            json.dumps({"n": 3, "edges": [[0, 1]], "x": [[0], [0], [0]]}) + "\n"
            + json.dumps({"n": 3, "edges": [[0, 5]], "x": [[0], [0], [0]]}) + "\n"
        )
        with pytest.raises(DatasetFormatError, match="record 2"):
            load_dataset(p)

    def test_invalid_json_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("{not json\n")
        with pytest.raises(DatasetFormatError, match="line 1"):
            load_dataset(p)

    def test_atom_records_expand_to_onehot(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(
            json.dumps({"feature_dim": 3, "vocab": 3}) + "\n"
            + json.dumps({"n": 2, "edges": [[0, 1]], "atom": [2, 0]}) + "\n"
        )
        ds = load_dataset(p)
        assert np.array_equal(ds.graphs[0].features, [[0, 0, 1], [1, 0, 0]])

    def test_atom_out_of_vocab(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(
            json.dumps({"feature_dim": 2, "vocab": 2}) + "\n"
            + json.dumps({"n": 1, "edges": [], "atom": [2]}) + "\n"
        )
        with pytest.raises(DatasetFormatError, match="record 2"):
            load_dataset(p)

    def test_header_feature_dim_enforced(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(
            json.dumps({"feature_dim": 3}) + "\n"
            + json.dumps({"n": 1, "edges": [], "x": [[1, 2]]}) + "\n"
        )
        with pytest.raises(DatasetFormatError, match="feature_dim"):
            load_dataset(p)

    def test_round_trip(self, tmp_path):
        spec = GeneratorSpec(count=5, min_vertices=2, max_vertices=5,
                             edge_density=0.5, feature_dim=3)
        ds = synthesize_dataset(spec, seed=1)
        p = tmp_path / "d.jsonl"
        write_dataset(ds, p)
        back = load_dataset(p)
        assert len(back) == len(ds) and back.feature_dim == ds.feature_dim
        for g1, g2 in zip(ds.graphs, back.graphs):
            assert g1.same_structure(g2)
            assert np.array_equal(g1.features, g2.features)
            assert g1.target == g2.target


class TestSampleBatch:
    def _dataset(self, n):
        return Dataset(graphs=tuple(make_graph(2, feature_dim=1) for _ in range(n)),
                       feature_dim=1)

    def test_exhaustive_sample_covers_all(self):
        ds = self._dataset(10)
        batch = sample_batch(ds, 10, seed=5)
        assert batch.sample_size == 10
        assert {id(g) for g in batch.graphs} == {id(g) for g in ds.graphs}

    def test_deterministic_per_seed(self):
        ds = self._dataset(8)
        b1 = sample_batch(ds, 4, seed=42)
        b2 = sample_batch(ds, 4, seed=42)
        assert [id(g) for g in b1.graphs] == [id(g) for g in b2.graphs]

    def test_size_out_of_range(self):
        ds = self._dataset(5)
        with pytest.raises(InvalidSpecError):
            sample_batch(ds, 6, seed=0)
        with pytest.raises(InvalidSpecError):
            sample_batch(ds, 0, seed=0)


class TestSynthesize:
    def test_full_density_gives_complete_graphs(self):
        spec = GeneratorSpec(count=4, min_vertices=3, max_vertices=3,
                             edge_density=1.0, feature_dim=2)
        ds = synthesize_dataset(spec, seed=0)
        assert len(ds) == 4
        for g in ds.graphs:
            assert g.num_vertices == 3
            assert set(g.edges) == {(0, 1), (0, 2), (1, 2)}

    def test_deterministic_bytes(self, tmp_path):
        spec = GeneratorSpec(count=6, min_vertices=2, max_vertices=5,
                             edge_density=0.4, feature_dim=3)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(synthesize_dataset(spec, seed=9), p1)
        write_dataset(synthesize_dataset(spec, seed=9), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_density_above_one_rejected(self):
        with pytest.raises(InvalidSpecError):
            GeneratorSpec(count=1, min_vertices=2, max_vertices=2,
                          edge_density=2.0, feature_dim=1)

    def test_target_rules(self):
        base = dict(count=3, min_vertices=2, max_vertices=3, edge_density=0.5, feature_dim=2)
        labeled = synthesize_dataset(GeneratorSpec(**base), seed=1)
        assert all(g.target is not None and np.isfinite(g.target) for g in labeled.graphs)
        bare = synthesize_dataset(GeneratorSpec(**base, target_rule="none"), seed=1)
        assert all(g.target is None for g in bare.graphs)

    def test_onehot_features(self):
        spec = GeneratorSpec(count=3, min_vertices=2, max_vertices=4,
                             edge_density=0.5, feature_dim=4, onehot=True)
        ds = synthesize_dataset(spec, seed=2)
        for g in ds.graphs:
            assert np.array_equal(g.features.sum(axis=1), np.ones(g.num_vertices))
            assert set(np.unique(g.features)) <= {0.0, 1.0}
