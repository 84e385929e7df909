"""MLP prior models: forward, loss, training, search, persistence."""

import inspect
import math

import numpy as np
import pytest

from ebisg import (
    ConfigError,
    FormatError,
    MlpArchitecture,
    MlpWeights,
    NgramProvider,
    PriorModel,
    SearchSpace,
    TrainingConfig,
    TrainingError,
    forward,
    hyperparameter_search,
    load_weights,
    loss,
    predict_prior,
    save_weights,
    train,
)
from ebisg.prior_model import init_weights, loss_and_gradients
from ebisg.races import RACES

from conftest import central_difference_gradients


def zero_model(input_dim=4, hidden=(3,)):
    m = init_weights(MlpArchitecture(input_dim, hidden), seed=0)
    for w in m.weights:
        w[:] = 0.0
    for b in m.biases:
        b[:] = 0.0
    return m


def toy_dataset(n=200, dim=16, seed=1):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(2, 1, (n // 2, dim)), rng.normal(-2, 1, (n // 2, dim))])
    T = np.zeros((n, 6))
    T[: n // 2, 0] = 1.0
    T[n // 2 :, 2] = 1.0
    return [(X[i], T[i], 1.0) for i in range(n)]


class TestForward:
    def test_zero_weights_give_uniform(self):
        out = forward(zero_model(), np.ones(4))
        assert np.array_equal(out, np.full(6, 1 / 6))

    def test_inference_deterministic_and_dropout_independent(self):
        m = init_weights(MlpArchitecture(4, (8,), dropout_rate=0.5), seed=3)
        x = np.arange(4.0)
        a = forward(m, x, training=False, dropout_seed=1)
        b = forward(m, x, training=False, dropout_seed=999)
        assert np.array_equal(a, b)

    def test_training_dropout_seeded(self):
        m = init_weights(MlpArchitecture(4, (32,), dropout_rate=0.5), seed=3)
        x = np.arange(4.0)
        a = forward(m, x, training=True, dropout_seed=7)
        b = forward(m, x, training=True, dropout_seed=7)
        c = forward(m, x, training=True, dropout_seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_hand_forward_single_hidden_unit(self):
        # z = 1.0*0.3 - 2.0*0.1 + 0.5 = 0.6; logits = W2 * relu(z)
        arch = MlpArchitecture(2, (1,))
        m = MlpWeights(
            arch=arch,
            weights=[np.array([[1.0, -2.0]]), np.array([[1.0], [0.0], [-1.0], [2.0], [0.5], [0.0]])],
            biases=[np.array([0.5]), np.zeros(6)],
        )
        out = forward(m, np.array([0.3, 0.1]))
        logits = [0.6, 0.0, -0.6, 1.2, 0.3, 0.0]
        exps = [math.exp(v) for v in logits]
        expected = [e / sum(exps) for e in exps]
        assert np.allclose(out, expected, atol=1e-15)

    def test_relu_clamps_negative_preactivation(self):
        arch = MlpArchitecture(2, (1,))
        m = MlpWeights(
            arch=arch,
            weights=[np.array([[1.0, -2.0]]), np.ones((6, 1))],
            biases=[np.array([-5.0]), np.zeros(6)],
        )
        # z = 0.3 - 0.2 - 5 < 0 -> hidden 0 -> uniform softmax
        assert np.array_equal(forward(m, np.array([0.3, 0.1])), np.full(6, 1 / 6))

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError, match="dimension"):
            forward(zero_model(input_dim=4), np.ones(5))


class TestLoss:
    def test_uniform_prediction_gives_log6(self):
        rng = np.random.default_rng(0)
        uniform = np.full(6, 1 / 6)
        for _ in range(20):
            target = rng.dirichlet(np.ones(6))
            assert abs(loss(uniform, target, 1.0) - math.log(6)) < 1e-12

    def test_near_match_is_small(self):
        eps = 1e-4
        pred = np.array([1 - 5 * eps, eps, eps, eps, eps, eps])
        target = np.array([1.0, 0, 0, 0, 0, 0])
        assert abs(loss(pred, target, 1.0) + math.log(1 - 5 * eps)) < 1e-15

    def test_zero_weight_is_zero(self):
        assert loss(np.full(6, 1 / 6), np.array([1.0, 0, 0, 0, 0, 0]), 0.0) == 0.0

    def test_count_weighting_exact(self):
        rng = np.random.default_rng(4)
        pred = rng.dirichlet(np.ones(6))
        target = rng.dirichlet(np.ones(6))
        for k in (2, 3, 4, 8):
            repeated = float(np.sum(np.asarray([loss(pred, target, 1.0)] * k)))
            assert loss(pred, target, float(k)) == repeated


class TestGradients:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for inst in range(10):
            arch = MlpArchitecture(5, (8, 8))
            model = init_weights(arch, seed=100 + inst)
            X = rng.standard_normal((4, 5))
            T = rng.dirichlet(np.ones(6), size=4)
            W = rng.uniform(0.5, 3.0, size=4)
            _, gw, gb = loss_and_gradients(model, X, T, W)
            nw, nb = central_difference_gradients(lambda: loss_and_gradients(model, X, T, W)[0], model)
            for a, n in zip(gw + gb, nw + nb):
                rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
                worst = max(worst, float(rel.max()))
        assert worst < 1e-4

    def test_dropout_gradient_with_fixed_mask(self):
        model = init_weights(MlpArchitecture(5, (8,), dropout_rate=0.4), seed=9)
        rng = np.random.default_rng(1)
        X = rng.standard_normal((3, 5))
        T = rng.dirichlet(np.ones(6), size=3)
        W = np.ones(3)
        _, gw, gb = loss_and_gradients(model, X, T, W, training=True, dropout_seed=42)
        nw, nb = central_difference_gradients(
            lambda: loss_and_gradients(model, X, T, W, training=True, dropout_seed=42)[0], model
        )
        for a, n in zip(gw + gb, nw + nb):
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            assert float(rel.max()) < 1e-4


class TestTrain:
    def test_separable_clusters_learned(self):
        ds = toy_dataset(n=400)
        w, report = train(ds, MlpArchitecture(16, (16,)), TrainingConfig(epochs=30, seed=7))
        assert report.final_validation_loss < 0.1
        assert report.n_train + report.n_val == len(ds)

    def test_determinism(self):
        ds = toy_dataset()
        cfg = TrainingConfig(epochs=10, seed=7)
        w1, r1 = train(ds, MlpArchitecture(16, (16,), 0.2), cfg)
        w2, r2 = train(ds, MlpArchitecture(16, (16,), 0.2), cfg)
        assert r1.train_loss == r2.train_loss
        assert r1.val_loss == r2.val_loss
        for a, b in zip(w1.weights + w1.biases, w2.weights + w2.biases):
            assert np.array_equal(a, b)

    def test_single_example_fits(self):
        x = np.ones(4)
        t = np.array([0.0, 1.0, 0, 0, 0, 0])
        w, report = train(
            [(x, t, 1.0)],
            MlpArchitecture(4, (8,)),
            TrainingConfig(epochs=400, seed=0, batch_size=1, learning_rate=0.02),
        )
        assert report.final_validation_loss < 0.05
        assert forward(w, x).argmax() == 1

    def test_divergence_aborts_with_location(self):
        ds = toy_dataset(n=64)
        with pytest.raises(TrainingError, match="epoch"):
            train(ds, MlpArchitecture(16, (16,)), TrainingConfig(epochs=50, seed=0, learning_rate=1e30))

    def test_empty_dataset_rejected(self):
        with pytest.raises(Exception, match="empty"):
            train([], MlpArchitecture(4, (8,)), TrainingConfig())

    def test_early_stopping_bounds_epochs(self):
        # pure-noise targets overfit fast, so validation loss rises and the
        # patience rule halts the loop well before the epoch budget
        rng = np.random.default_rng(3)
        ds = [(rng.standard_normal(6), rng.dirichlet(np.ones(6)), 1.0) for _ in range(40)]
        w, report = train(ds, MlpArchitecture(6, (32,)), TrainingConfig(epochs=400, seed=1, patience=3, learning_rate=0.01))
        assert len(report.val_loss) < 400
        assert report.final_validation_loss == min(report.val_loss)


class TestHyperparameterSearch:
    SPACE = SearchSpace(widths=(8, 16), epochs=4, patience=2)

    def test_single_trial_returns_its_config(self):
        ds = toy_dataset(n=80)
        arch, cfg, board = hyperparameter_search(ds, self.SPACE, trials=1, seed=5)
        assert len(board) == 1
        assert board[0].arch == arch and board[0].cfg == cfg

    def test_default_trial_count_is_50(self):
        assert inspect.signature(hyperparameter_search).parameters["trials"].default == 50

    def test_leaderboard_ordering(self):
        ds = toy_dataset(n=80)
        arch, cfg, board = hyperparameter_search(ds, self.SPACE, trials=10, seed=5)
        ok = [t for t in board if t.status == "ok"]
        assert ok[0].val_loss == min(t.val_loss for t in ok)
        assert [t.val_loss for t in ok] == sorted(t.val_loss for t in ok)

    def test_deterministic(self):
        ds = toy_dataset(n=80)
        a = hyperparameter_search(ds, self.SPACE, trials=4, seed=9)
        b = hyperparameter_search(ds, self.SPACE, trials=4, seed=9)
        assert [t.val_loss for t in a[2]] == [t.val_loss for t in b[2]]
        assert a[0] == b[0] and a[1] == b[1]

    def test_all_trials_diverge_carries_leaderboard(self):
        ds = toy_dataset(n=64)
        bad = SearchSpace(widths=(8,), epochs=8, learning_rate=(1e29, 1e30))
        with pytest.raises(TrainingError) as exc:
            hyperparameter_search(ds, bad, trials=3, seed=0)
        assert len(exc.value.leaderboard) == 3
        assert all(t.status == "failed" for t in exc.value.leaderboard)

    def test_samples_within_space(self):
        ds = toy_dataset(n=80)
        _, _, board = hyperparameter_search(ds, self.SPACE, trials=6, seed=11)
        for t in board:
            assert len(t.arch.hidden_layers) in (1, 2, 3)
            assert all(w in (8, 16) for w in t.arch.hidden_layers)
            assert 0.0 <= t.arch.dropout_rate <= 0.5
            assert 1e-5 <= t.cfg.learning_rate <= 1e-2
            assert t.cfg.batch_size in (32, 64, 128, 256)


class TestPersistence:
    def _trained(self):
        ds = toy_dataset(n=80)
        prov = NgramProvider(dim=16, seed=0)  # dim matches toy dataset
        w, _ = train(ds, MlpArchitecture(16, (8,), 0.1), TrainingConfig(epochs=5, seed=2), provenance=prov.provenance)
        return w, prov

    def test_round_trip_identical_outputs(self, tmp_path):
        w, _ = self._trained()
        p = tmp_path / "m.emlp"
        save_weights(w, p)
        loaded = load_weights(p)
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.standard_normal(16)
            assert np.array_equal(forward(w, x), forward(loaded, x))
        assert loaded.provenance == w.provenance
        assert loaded.train_seed == w.train_seed
        assert loaded.race_order == RACES

    def test_save_load_save_identical_bytes(self, tmp_path):
        w, _ = self._trained()
        p1, p2 = tmp_path / "a.emlp", tmp_path / "b.emlp"
        save_weights(w, p1)
        save_weights(load_weights(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_race_order_mismatch_rejected(self, tmp_path):
        w, _ = self._trained()
        w.race_order = tuple(reversed(RACES))
        p = tmp_path / "m.emlp"
        save_weights(w, p)
        with pytest.raises(FormatError, match="race-order"):
            load_weights(p)

    def test_truncation_reports_offset(self, tmp_path):
        w, _ = self._trained()
        p = tmp_path / "m.emlp"
        save_weights(w, p)
        raw = p.read_bytes()
        for cut in (3, 9, 40, len(raw) - 7):
            q = tmp_path / f"c{cut}.emlp"
            q.write_bytes(raw[:cut])
            with pytest.raises(FormatError, match="offset"):
                load_weights(q)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.emlp"
        p.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError, match="magic"):
            load_weights(p)


class TestPredictPrior:
    def test_provenance_mismatch_rejected(self):
        w, prov = TestPersistence()._trained()
        other = NgramProvider(dim=16, seed=99)
        with pytest.raises(ConfigError, match="provenance"):
            predict_prior(w, other, "GARCIA")
        with pytest.raises(ConfigError, match="provenance"):
            PriorModel(w, other)

    def test_zero_weights_predict_uniform_for_any_name(self):
        prov = NgramProvider(dim=16, seed=0)
        m = zero_model(input_dim=16, hidden=(4,))
        m.provenance = prov.provenance
        for name in ("GARCIA", "NGUYEN", "X"):
            assert np.array_equal(predict_prior(m, prov, name), np.full(6, 1 / 6))

    def test_prior_model_cache_consistent(self):
        w, prov = TestPersistence()._trained()
        pm = PriorModel(w, prov)
        a = pm.predict("GARCIA")
        b = pm.predict("garcía")
        assert np.array_equal(a, b)
        assert np.array_equal(a, predict_prior(w, prov, "GARCIA"))
