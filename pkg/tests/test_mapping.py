import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bprlex.core import FeatureStore
from bprlex.errors import ConfigError, DataError
from bprlex.mapping import (FOUR_LAYER_TANH, LINEAR, MappingModel, MapTrainConfig, SeedPairs,
                            apply_map, build_word_aux_store, init_nn_layers, mean_squared_loss,
                            nn_loss_and_grads, train_linear_map, train_nn_map)


def stores_from(X_E, X_F):
    emb_E = FeatureStore("we", X_E.shape[1], {f"t{i}": v for i, v in enumerate(X_E)})
    emb_F = FeatureStore("we", X_F.shape[1], {f"s{i}": v for i, v in enumerate(X_F)})
    return emb_E, emb_F


def planted_linear(n, d_e, d_f, seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(d_e, d_f)) / math.sqrt(d_e)
    X_E = rng.normal(size=(n, d_e))
    return W, X_E, X_E @ W


def oracle_forward(layers, x):
    # explicit loops, no vectorized matmul
    h = list(x)
    for li, phi in enumerate(layers):
        out = []
        for row in phi:
            acc = 0.0
            for w, v in zip(row, h):
                acc += w * v
            out.append(math.tanh(acc) if li < 3 else acc)
        h = out
    return np.array(h)


class TestApplyMap:
    def test_identity(self):
        x = np.array([0.5, -1.0, 2.0])
        assert np.array_equal(apply_map(MappingModel(LINEAR, W=np.eye(3)), x), x)

    def test_scaling(self):
        x = np.array([0.5, -1.0, 2.0])
        assert np.array_equal(apply_map(MappingModel(LINEAR, W=2 * np.eye(3)), x), 2 * x)

    def test_rectangular_orientation(self):
        W = np.arange(6.0).reshape(2, 3)
        assert apply_map(MappingModel(LINEAR, W=W), [1.0, 1.0]).tolist() == [3.0, 5.0, 7.0]

    def test_shape_error(self):
        with pytest.raises(ValueError):
            apply_map(MappingModel(LINEAR, W=np.eye(3)), np.ones(4))

    def test_forward_pass_oracle(self):
        rng = np.random.default_rng(5)
        layers = [rng.uniform(-0.5, 0.5, size=s) for s in [(4, 3), (5, 4), (2, 5), (3, 2)]]
        model = MappingModel(FOUR_LAYER_TANH, layers=layers)
        for _ in range(10):
            x = rng.normal(size=3)
            assert np.max(np.abs(apply_map(model, x) - oracle_forward(layers, x))) < 1e-12

    def test_hand_computed_forward(self):
        layers = [np.array([[1.0, 0.0]]), np.array([[2.0]]), np.array([[1.0], [-1.0]]),
                  np.array([[1.0, 1.0]])]
        model = MappingModel(FOUR_LAYER_TANH, layers=layers)
        h2 = math.tanh(2 * math.tanh(0.3))
        assert apply_map(model, [0.3, 9.0])[0] == pytest.approx(
            math.tanh(h2) + math.tanh(-h2), abs=1e-15)

    def test_batch_equals_rowwise(self):
        rng = np.random.default_rng(6)
        model = MappingModel(FOUR_LAYER_TANH, layers=init_nn_layers(3, 2, (4, 4, 4), rng))
        X = rng.normal(size=(5, 3))
        batch = apply_map(model, X)
        for i in range(5):
            assert np.allclose(batch[i], apply_map(model, X[i]), rtol=0, atol=1e-14)

    def test_bad_layer_chain(self):
        with pytest.raises(ValueError):
            MappingModel(FOUR_LAYER_TANH, layers=[np.ones((2, 2))] * 3 + [np.ones((2, 3))])


class TestLinearMap:
    def test_planted_recovery(self):
        W, X_E, X_F = planted_linear(300, 12, 10, seed=1)
        emb_E, emb_F = stores_from(X_E, X_F)
        seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(300)])
        fit = train_linear_map(seeds, emb_E, emb_F, MapTrainConfig(epochs=100))
        assert np.linalg.norm(fit.model.W - W) / np.linalg.norm(W) < 1e-2
        assert fit.final_loss <= fit.initial_loss

    def test_identity_from_basis(self):
        d = 4
        emb_E, emb_F = stores_from(np.eye(d), np.eye(d))
        seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(d)])
        fit = train_linear_map(seeds, emb_E, emb_F, MapTrainConfig(eta=0.1, epochs=200))
        assert np.allclose(fit.model.W, np.eye(d), atol=1e-6)

    def test_missing_embeddings_listed(self):
        emb_E, emb_F = stores_from(np.eye(2), np.eye(2))
        seeds = SeedPairs([("t0", "s0"), ("t9", "s1"), ("t1", "zz")])
        with pytest.raises(DataError) as err:
            train_linear_map(seeds, emb_E, emb_F)
        assert "t9" in str(err.value) and "zz" in str(err.value)

    def test_no_seeds(self):
        emb_E, emb_F = stores_from(np.eye(2), np.eye(2))
        with pytest.raises(DataError):
            train_linear_map(SeedPairs([]), emb_E, emb_F)

    def test_deterministic(self):
        _, X_E, X_F = planted_linear(40, 5, 5, seed=2)
        emb_E, emb_F = stores_from(X_E, X_F)
        seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(40)])
        cfg = MapTrainConfig(epochs=5, seed=3)
        a = train_linear_map(seeds, emb_E, emb_F, cfg)
        b = train_linear_map(seeds, emb_E, emb_F, cfg)
        assert np.array_equal(a.model.W, b.model.W)


class TestNnMap:
    def test_memorizes_ten_pairs(self):
        rng = np.random.default_rng(4)
        X_E, X_F = rng.normal(size=(10, 10)), rng.normal(size=(10, 10)) * 0.5
        emb_E, emb_F = stores_from(X_E, X_F)
        seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(10)])
        fit = train_nn_map(seeds, emb_E, emb_F, MapTrainConfig())
        assert fit.final_loss < 1e-3
        assert fit.final_loss < fit.initial_loss

    def test_init_breaks_symmetry(self):
        layers = init_nn_layers(8, 3, (5, 6, 7), np.random.default_rng(0))
        assert [L.shape for L in layers] == [(5, 8), (6, 5), (7, 6), (3, 7)]
        for L in layers:
            bound = 1 / math.sqrt(L.shape[1])
            assert np.all(np.abs(L) <= bound) and np.unique(L).size == L.size

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            layers = init_nn_layers(4, 3, (5, 5, 5), rng)
            x_e, x_f = rng.normal(size=4), rng.normal(size=3)
            _, grads = nn_loss_and_grads(layers, x_e, x_f)
            for li in range(4):
                num = np.zeros_like(layers[li])
                for idx in np.ndindex(layers[li].shape):
                    old = layers[li][idx]
                    layers[li][idx] = old + 1e-5
                    up, _ = nn_loss_and_grads(layers, x_e, x_f)
                    layers[li][idx] = old - 1e-5
                    down, _ = nn_loss_and_grads(layers, x_e, x_f)
                    layers[li][idx] = old
                    num[idx] = (up - down) / 2e-5
                err = np.linalg.norm(num - grads[li]) / np.linalg.norm(num + grads[li])
                assert err < 1e-4

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        emb_E, emb_F = stores_from(rng.normal(size=(6, 3)), rng.normal(size=(6, 2)))
        seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(6)])
        cfg = MapTrainConfig(epochs=3, hidden=(4, 4, 4), seed=1)
        a, b = (train_nn_map(seeds, emb_E, emb_F, cfg) for _ in range(2))
        assert all(np.array_equal(x, y) for x, y in zip(a.model.layers, b.model.layers))


class TestWordAuxStore:
    def test_identity_map(self):
        rng = np.random.default_rng(0)
        emb_E, emb_F = stores_from(rng.normal(size=(5, 3)), rng.normal(size=(4, 3)))
        tgt, src = build_word_aux_store(MappingModel(LINEAR, W=np.eye(3)), emb_E, emb_F)
        assert tgt == emb_E and src == emb_F

    def test_output_dimension(self):
        rng = np.random.default_rng(1)
        emb_E, emb_F = stores_from(rng.normal(size=(5, 4)), rng.normal(size=(4, 2)))
        model = MappingModel(FOUR_LAYER_TANH, layers=init_nn_layers(4, 2, (3, 3, 3), rng))
        tgt, _ = build_word_aux_store(model, emb_E, emb_F)
        assert tgt.dim == 2 and all(tgt.vector(w).shape == (2,) for w in tgt.words)

    def test_dimension_mismatch(self):
        emb_E, emb_F = stores_from(np.eye(3), np.eye(2))
        with pytest.raises(ValueError):
            build_word_aux_store(MappingModel(LINEAR, W=np.eye(3)), emb_E, emb_F)

    def test_held_out_retrieval(self):
        W, X_E, X_F = planted_linear(300, 10, 10, seed=3)
        emb_E, emb_F = stores_from(X_E, X_F)
        seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(200)])
        fit = train_linear_map(seeds, emb_E, emb_F, MapTrainConfig(epochs=30))
        tgt, src = build_word_aux_store(fit.model, emb_E, emb_F)
        rng = np.random.default_rng(0)

        def cos(a, b):
            return a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        for i in range(200, 300):
            m = tgt.vector(f"t{i}")
            others = rng.choice([j for j in range(300) if j != i], size=99, replace=False)
            rand = [cos(m, src.vector(f"s{j}")) for j in others]
            assert cos(m, src.vector(f"s{i}")) > np.median(rand)


class TestMapTrainConfig:
    def test_defaults(self):
        c = MapTrainConfig()
        assert (c.eta, c.epochs, c.hidden) == (0.01, 200, (200, 200, 200))

    def test_from_mapping(self):
        c = MapTrainConfig.from_mapping({"hidden": "8 16 32", "eta": "0.5", "epochs": "3"})
        assert c.hidden == (8, 16, 32) and c.eta == 0.5 and c.epochs == 3

    @pytest.mark.parametrize("values", [{"hidden": "1 2"}, {"eta": "-1"}, {"hidden": "0 1 1"},
                                        {"momentum": "0.9"}, {"epochs": "x"}])
    def test_rejects(self, values):
        with pytest.raises(ConfigError):
            MapTrainConfig.from_mapping(values)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_linear_map_is_linear(d_in, d_out, seed):
    rng = np.random.default_rng(seed)
    model = MappingModel(LINEAR, W=rng.normal(size=(d_in, d_out)))
    a, b = rng.normal(size=d_in), rng.normal(size=d_in)
    assert np.allclose(apply_map(model, a + 2 * b), apply_map(model, a) + 2 * apply_map(model, b))


def test_mean_squared_loss_is_mean_over_rows():
    model = MappingModel(LINEAR, W=np.zeros((2, 2)))
    X_F = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert mean_squared_loss(model, np.ones((2, 2)), X_F) == 2.5
