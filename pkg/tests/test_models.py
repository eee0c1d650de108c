import json

import numpy as np
import pytest

from gcnfuse import (
    ArchSpec,
    BatchNormParams,
    Dataset,
    Dense,
    DenseParams,
    DimensionMismatchError,
    Embedding,
    FusionBatch,
    GcnModel,
    GeneratorSpec,
    GraphConv,
    InvalidSpecError,
    MeanReadout,
    ModelFormatError,
    evaluate_mae,
    forward,
    forward_with_capture,
    label_with_model,
    load_model,
    normalized_adjacency,
    permute_model,
    perturb_model,
    random_model,
    save_model,
    synthesize_dataset,
)
from conftest import (
    assert_models_equal,
    constant_model,
    make_graph,
    path_graph,
    single_vertex_graphs,
    tiny_gcn,
)


def random_graphs(count, feature_dim, seed, max_vertices=6):
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        n = int(rng.integers(2, max_vertices + 1))
        edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
        graphs.append(make_graph(n, edges=edges,
                                 values=rng.standard_normal((n, feature_dim))))
    return graphs


class TestLayerValidation:
    def test_embedding_rejects_bias(self):
        with pytest.raises(ModelFormatError):
            Embedding(params=DenseParams(weight=[[1.0]], bias=[0.0]))

    def test_bias_length_checked(self):
        with pytest.raises(DimensionMismatchError):
            DenseParams(weight=np.ones((2, 3)), bias=np.ones(3))

    def test_bn_dim_checked(self):
        bn = BatchNormParams(gamma=[1, 1], beta_shift=[0, 0],
                             running_mean=[0, 0], running_var=[1, 1], epsilon=1e-5)
        with pytest.raises(DimensionMismatchError):
            GraphConv(params=DenseParams(weight=np.ones((3, 3))), batch_norm=bn)

    def test_bn_negative_var_rejected(self):
        with pytest.raises(ModelFormatError):
            BatchNormParams(gamma=[1], beta_shift=[0], running_mean=[0],
                            running_var=[-1.0], epsilon=1e-5)

    def test_unknown_activation_rejected(self):
        with pytest.raises(ModelFormatError):
            Dense(params=DenseParams(weight=[[1.0]]), activation="tanh")

    def test_bn_inference_formula(self):
        bn = BatchNormParams(gamma=[2.0], beta_shift=[0.5], running_mean=[1.0],
                             running_var=[4.0], epsilon=0.0)
        x = np.array([[3.0], [7.0]])
        expected = 2.0 * (x - 1.0) / np.sqrt(4.0) + 0.5
        assert np.allclose(bn.apply(x), expected)


class TestModelValidation:
    def test_dense_before_readout_rejected(self):
        with pytest.raises(ModelFormatError):
            GcnModel(layers=(Dense(params=DenseParams(weight=[[1.0]])), MeanReadout()))

    def test_graph_conv_after_readout_rejected(self):
        with pytest.raises(ModelFormatError):
            GcnModel(layers=(GraphConv(params=DenseParams(weight=[[1.0]])),
                             MeanReadout(),
                             GraphConv(params=DenseParams(weight=[[1.0]]))))

    def test_two_readouts_rejected(self):
        with pytest.raises(ModelFormatError):
            GcnModel(layers=(GraphConv(params=DenseParams(weight=[[1.0]])),
                             MeanReadout(), MeanReadout()))

    def test_dim_chain_checked(self):
        with pytest.raises(ModelFormatError, match="layer 1"):
            GcnModel(layers=(Embedding(params=DenseParams(weight=np.ones((3, 2)))),
                             Dense(params=DenseParams(weight=np.ones((1, 4))))))

    def test_is_mlp(self):
        mlp = constant_model(0.0)
        assert mlp.is_mlp
        gcn = tiny_gcn([[1.0]], [0.0])
        assert not gcn.is_mlp


class TestForward:
    def test_single_vertex_graph_conv(self):
        # deg = 1, so normalization is the identity: ReLU(2*3 + 1) = 7
        model = GcnModel(layers=(GraphConv(params=DenseParams(weight=[[2.0]], bias=[1.0])),))
        g = make_graph(1, values=[[3.0]])
        assert forward(model, g) == 7.0

    def test_zero_inputs_zero_biases_give_zero(self):
        model = tiny_gcn([[2.0]], [0.0], head_weight=[[5.0]])
        g = path_graph(3)  # all-zero features
        assert forward(model, g) == 0.0

    def test_two_vertex_path_hand_value(self):
        # deg_u = deg_v = 2; normalized aggregation averages the endpoints:
        # agg = (1/sqrt 2)(1/sqrt 2 * 1 + 1/sqrt 2 * 5) = 3; z = 3*3 - 1 = 8
        model = tiny_gcn([[3.0]], [-1.0])
        g = make_graph(2, edges=[(0, 1)], values=[[1.0], [5.0]])
        assert forward(model, g) == pytest.approx(8.0, abs=1e-12)

    def test_normalized_adjacency_values(self):
        g = make_graph(2, edges=[(0, 1)])
        assert np.allclose(normalized_adjacency(g), [[0.5, 0.5], [0.5, 0.5]])

    def test_feature_dim_mismatch(self):
        model = tiny_gcn([[1.0]], [0.0])
        with pytest.raises(DimensionMismatchError):
            forward(model, make_graph(2, feature_dim=3))

    def test_mlp_matches_plain_arithmetic(self):
        rng = np.random.default_rng(0)
        W1, W2 = rng.standard_normal((4, 3)), rng.standard_normal((1, 4))
        b2 = rng.standard_normal(1)
        model = GcnModel(layers=(
            Embedding(params=DenseParams(weight=W1)),
            Dense(params=DenseParams(weight=W2, bias=b2), activation="none"),
        ))
        x = rng.standard_normal(3)
        g = make_graph(1, values=[x.tolist()])
        assert forward(model, g) == pytest.approx((W2 @ (W1 @ x) + b2)[0], rel=1e-12)


class TestCapture:
    def test_pre_equals_post_without_bn(self):
        model = tiny_gcn([[3.0]], [-1.0])
        batch = FusionBatch(graphs=tuple(random_graphs(3, 1, seed=1)))
        _, pre = forward_with_capture(model, batch, "pre_bn")
        _, post = forward_with_capture(model, batch, "post_bn")
        for i in pre:
            if pre[i].is_graph_valued:
                for a, b in zip(pre[i].graph_values, post[i].graph_values):
                    assert np.array_equal(a, b)
            else:
                assert np.array_equal(pre[i].readout_values, post[i].readout_values)

    def test_capture_is_pre_activation(self):
        # captured value is the affine output before ReLU: 2*3 + 1 = 7
        model = GcnModel(layers=(GraphConv(params=DenseParams(weight=[[2.0]], bias=[1.0])),))
        batch = FusionBatch(graphs=(make_graph(1, values=[[3.0]]),))
        preds, acts = forward_with_capture(model, batch)
        assert preds[0] == 7.0
        assert acts[0].graph_values[0][0, 0] == 7.0

    def test_post_bn_subtracts_running_mean(self):
        m = 2.5
        bn = BatchNormParams(gamma=[1.0], beta_shift=[0.0], running_mean=[m],
                             running_var=[1.0], epsilon=0.0)
        model = tiny_gcn([[3.0]], [-1.0], bn=bn)
        batch = FusionBatch(graphs=tuple(random_graphs(4, 1, seed=2)))
        _, pre = forward_with_capture(model, batch, "pre_bn")
        _, post = forward_with_capture(model, batch, "post_bn")
        for a, b in zip(pre[0].graph_values, post[0].graph_values):
            assert np.allclose(b, a - m)

    def test_predictions_bitwise_equal_forward(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=5, gc_layers=2, dense_layers=2,
                        batch_norm=True)
        model = random_model(spec, seed=4)
        graphs = random_graphs(5, 3, seed=5)
        batch = FusionBatch(graphs=tuple(graphs))
        preds, _ = forward_with_capture(model, batch)
        for k, g in enumerate(graphs):
            assert preds[k] == forward(model, g)

    def test_neuron_accessors(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=5, gc_layers=1, dense_layers=2)
        model = random_model(spec, seed=6)
        graphs = random_graphs(4, 3, seed=7)
        batch = FusionBatch(graphs=tuple(graphs))
        _, acts = forward_with_capture(model, batch)
        gc_idx, dense_idx = 1, 3  # emb, gc, readout, dense, head
        assert acts[gc_idx].is_graph_valued and acts[gc_idx].width == 5
        sgs = acts[gc_idx].neuron_scalar_graphs(2)
        assert len(sgs) == 4
        assert all(sg.graph.same_structure(g) for sg, g in zip(sgs, graphs))
        assert not acts[dense_idx].is_graph_valued
        assert acts[dense_idx].neuron_readout(0).shape == (4,)

    def test_bad_capture_point(self):
        model = tiny_gcn([[1.0]], [0.0])
        batch = FusionBatch(graphs=(path_graph(2),))
        with pytest.raises(InvalidSpecError):
            forward_with_capture(model, batch, "mid_bn")


class TestEvaluateMae:
    def test_perfect_model_scores_zero(self):
        spec = GeneratorSpec(count=8, min_vertices=2, max_vertices=4,
                             edge_density=0.5, feature_dim=3)
        ds = synthesize_dataset(spec, seed=8)
        model = random_model(ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=1,
                                      dense_layers=1), seed=9)
        assert evaluate_mae(model, label_with_model(model, ds)) == 0.0

    def test_constant_zero_model(self):
        graphs = single_vertex_graphs([[0.0], [0.0]], targets=[1.0, -1.0])
        ds = Dataset(graphs=tuple(graphs), feature_dim=1)
        assert evaluate_mae(constant_model(0.0), ds) == 1.0

    def test_matches_direct_recomputation(self):
        spec = GeneratorSpec(count=10, min_vertices=2, max_vertices=5,
                             edge_density=0.4, feature_dim=3)
        ds = synthesize_dataset(spec, seed=10)
        model = random_model(ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=1,
                                      dense_layers=2), seed=11)
        direct = np.mean([abs(forward(model, g) - g.target) for g in ds.graphs])
        assert evaluate_mae(model, ds) == pytest.approx(direct, rel=1e-15)

    def test_missing_target_rejected(self):
        ds = Dataset(graphs=(make_graph(2, feature_dim=1),), feature_dim=1)
        with pytest.raises(InvalidSpecError):
            evaluate_mae(constant_model(0.0), ds)


class TestPermuteModel:
    def test_identity_permutations_keep_model(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=1, dense_layers=2,
                        batch_norm=True)
        model = random_model(spec, seed=12)
        n_hidden = len(model.parameterized_indices()) - 1
        same = permute_model(model, [np.arange(4)] * n_hidden)
        assert_models_equal(model, same)

    def test_functional_equality(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=5, gc_layers=2, dense_layers=2,
                        batch_norm=True)
        model = random_model(spec, seed=13)
        rng = np.random.default_rng(14)
        perms = [rng.permutation(5) for _ in range(len(model.parameterized_indices()) - 1)]
        twin = permute_model(model, perms)
        for g in random_graphs(100, 3, seed=15):
            a, b = forward(model, g), forward(twin, g)
            assert b == pytest.approx(a, rel=1e-6, abs=1e-9)

    def test_two_neuron_swap_moves_rows_and_columns(self):
        W1 = np.array([[1.0, 2.0], [3.0, 4.0]])
        W2 = np.array([[5.0, 6.0]])
        model = GcnModel(layers=(
            Embedding(params=DenseParams(weight=W1)),
            Dense(params=DenseParams(weight=W2), activation="none"),
        ))
        swapped = permute_model(model, [np.array([1, 0])])
        assert np.array_equal(swapped.layers[0].params.weight, W1[[1, 0], :])
        assert np.array_equal(swapped.layers[1].params.weight, W2[:, [1, 0]])

    def test_wrong_count_rejected(self):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=1,
                                      dense_layers=2), seed=16)
        with pytest.raises(InvalidSpecError, match="permutations"):
            permute_model(model, [np.arange(3)])

    def test_non_bijection_rejected(self):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=0,
                                      dense_layers=2), seed=17)
        with pytest.raises(InvalidSpecError, match="bijection"):
            permute_model(model, [np.array([0, 0, 2]), np.arange(3)])


class TestPerturbModel:
    def test_zero_scale_is_identity(self):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=1,
                                      dense_layers=1, batch_norm=True), seed=18)
        assert_models_equal(model, perturb_model(model, 0.0, seed=1))

    def test_bn_statistics_untouched(self):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=1,
                                      dense_layers=1, batch_norm=True), seed=19)
        noisy = perturb_model(model, 0.05, seed=2)
        bn_a = model.layers[1].batch_norm
        bn_b = noisy.layers[1].batch_norm
        assert np.array_equal(bn_a.running_mean, bn_b.running_mean)
        assert np.array_equal(bn_a.running_var, bn_b.running_var)
        assert not np.array_equal(model.layers[1].params.weight,
                                  noisy.layers[1].params.weight)

    def test_deterministic(self):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=0,
                                      dense_layers=2), seed=20)
        assert_models_equal(perturb_model(model, 0.01, seed=3),
                            perturb_model(model, 0.01, seed=3))


class TestRandomModel:
    def test_same_seed_same_model(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=2, dense_layers=2,
                        batch_norm=True)
        assert_models_equal(random_model(spec, seed=21), random_model(spec, seed=21))

    def test_architecture_layout(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=2, dense_layers=2,
                        batch_norm=True)
        model = random_model(spec, seed=22)
        kinds = [type(l).__name__ for l in model.layers]
        assert kinds == ["Embedding", "GraphConv", "GraphConv", "MeanReadout",
                         "Dense", "Dense"]
        head = model.layers[-1]
        assert head.activation == "none" and head.batch_norm is None
        assert head.params.out_dim == 1

    def test_mlp_mode_has_no_graph_layers(self):
        spec = ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=0, dense_layers=3,
                        batch_norm=True)
        model = random_model(spec, seed=23)
        assert model.is_mlp
        # hidden dense layers carry BN in MLP mode, the head never does
        assert model.layers[1].batch_norm is not None
        assert model.layers[-1].batch_norm is None

    def test_invalid_spec(self):
        with pytest.raises(InvalidSpecError):
            ArchSpec(feature_dim=0, hidden_dim=4, gc_layers=1, dense_layers=1)
        with pytest.raises(InvalidSpecError):
            ArchSpec(feature_dim=2, hidden_dim=4, gc_layers=1, dense_layers=0)


class TestModelIo:
    def test_round_trip_exact(self, tmp_path):
        spec = ArchSpec(feature_dim=3, hidden_dim=4, gc_layers=2, dense_layers=2,
                        batch_norm=True)
        model = random_model(spec, seed=24, name="m")
        p = tmp_path / "m.json"
        save_model(model, p)
        assert_models_equal(model, load_model(p))

    def test_save_deterministic(self, tmp_path):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=1,
                                      dense_layers=1), seed=25)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_dims_error_names_layer(self, tmp_path):
        model = random_model(ArchSpec(feature_dim=2, hidden_dim=3, gc_layers=1,
                                      dense_layers=1), seed=26)
        p = tmp_path / "m.json"
        save_model(model, p)
        doc = json.loads(p.read_text())
        doc["layers"][1]["bias"] = [0.0]  # wrong length for a 3-wide layer
        p.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError, match="layer 1"):
            load_model(p)

    def test_unknown_kind_rejected(self, tmp_path):
        model = constant_model(1.0)
        p = tmp_path / "m.json"
        save_model(model, p)
        doc = json.loads(p.read_text())
        doc["layers"][0]["kind"] = "attention"
        p.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError, match="unknown layer kind"):
            load_model(p)

    def test_unknown_schema_rejected(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"schema": "something-else/9", "layers": []}))
        with pytest.raises(ModelFormatError, match="schema"):
            load_model(p)
