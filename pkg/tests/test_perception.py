import math

import numpy as np
import pytest

from symground.annealing import Temperature, acceptance_ratio
from symground.perception import (ClassifierModel, Featurizer, OptimState, RegressorModel,
                                  discrete_scorer, gaussian_scorer, grad_nll,
                                  load_checkpoint, log_softmax, logp_discrete, logp_gaussian,
                                  optimizer_step, predict_argmax, save_checkpoint, softmax,
                                  uniform_classifier)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


class TestFeaturizer:
    def test_noiseless_draw_is_scaled_prototype(self, rng):
        f = Featurizer(5, feature_dim=8, scale=2.0, noise_sigma=0.0, seed=3)
        np.testing.assert_array_equal(f.features(2, rng), 2.0 * f.prototypes[2])

    def test_distinct_classes_distinct_features(self, rng):
        f = Featurizer(13, noise_sigma=0.0, seed=0)
        feats = [f.features(c, rng) for c in range(13)]
        for i in range(13):
            for j in range(i + 1, 13):
                assert not np.allclose(feats[i], feats[j])

    def test_noisy_draws_differ_but_share_nearest_prototype(self, rng):
        f = Featurizer(13, seed=1)
        a = f.features(7, rng)
        b = f.features(7, rng)
        assert not np.array_equal(a, b)
        assert f.nearest_prototype(a) == 7
        assert f.nearest_prototype(b) == 7

    def test_out_of_range_class(self, rng):
        f = Featurizer(4, seed=0)
        with pytest.raises(ValueError):
            f.features(4, rng)

    def test_prototypes_fixed_by_seed(self):
        a = Featurizer(13, seed=9)
        b = Featurizer(13, seed=9)
        np.testing.assert_array_equal(a.prototypes, b.prototypes)

    def test_feature_sequence_reproducible(self):
        f = Featurizer(13, seed=4)
        one = f.features_for_classes((1, 9, 3), feature_seed=77)
        two = f.features_for_classes((1, 9, 3), feature_seed=77)
        np.testing.assert_array_equal(one, two)


class TestLogpDiscrete:
    def test_uniform_model_seven_positions(self, rng):
        model = uniform_classifier(16, 13)
        features = rng.normal(size=(7, 16))
        tokens = [1, 9, 5, 10, 3, 12, 8]
        assert logp_discrete(model, features, tokens) == pytest.approx(7 * math.log(1 / 13))

    def test_uniform_model_one_position(self, rng):
        model = uniform_classifier(16, 13)
        assert logp_discrete(model, rng.normal(size=(1, 16)), [4]) == pytest.approx(math.log(1 / 13))

    def test_matches_independent_forward_pass(self, rng):
        model = ClassifierModel(6, 10, 5, seed=8)
        features = rng.normal(size=(4, 6))
        tokens = [0, 3, 4, 1]
        # straight-line reimplementation of the forward pass
        expected = 0.0
        for row, token in zip(features, tokens):
            hidden = np.tanh(row @ model.params["w1"] + model.params["b1"])
            logits = hidden @ model.params["w2"] + model.params["b2"]
            logz = math.log(np.exp(logits - logits.max()).sum()) + logits.max()
            expected += logits[token] - logz
        assert logp_discrete(model, features, tokens) == pytest.approx(expected, abs=1e-9)

    def test_dimension_mismatch(self, rng):
        model = ClassifierModel(6, 10, 5, seed=8)
        with pytest.raises(ValueError):
            logp_discrete(model, rng.normal(size=(3, 6)), [0, 1])

    def test_never_positive_and_rows_normalized(self, rng):
        model = ClassifierModel(6, 10, 5, seed=8)
        features = rng.normal(size=(5, 6))
        assert logp_discrete(model, features, [0, 1, 2, 3, 4]) <= 0
        rows = softmax(model.forward(features))
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)

    def test_permutation_equivariance(self, rng):
        model = ClassifierModel(6, 10, 5, seed=8)
        features = rng.normal(size=(4, 6))
        tokens = np.array([2, 0, 4, 1])
        perm = rng.permutation(4)
        assert logp_discrete(model, features, tokens) == pytest.approx(
            logp_discrete(model, features[perm], tokens[perm]), abs=1e-12)


class TestLogpGaussian:
    def test_zero_residual(self, rng):
        model = RegressorModel(9, 8, 30, seed=2, sigma=1.0)
        x = rng.normal(size=9)
        z = model.forward(x)
        assert logp_gaussian(model, x, z) == pytest.approx(-15 * math.log(2 * math.pi))

    def test_unit_residual_one_dim(self, rng):
        model = RegressorModel(4, 8, 1, seed=2, sigma=1.0)
        x = rng.normal(size=4)
        z = model.forward(x) + 1.0
        assert logp_gaussian(model, x, z) == pytest.approx(-0.5 - 0.5 * math.log(2 * math.pi))
        assert logp_gaussian(model, x, z) == pytest.approx(-1.41894, abs=1e-5)

    def test_acceptance_ratio_cancels_normalizer(self, rng):
        sigma, gamma = 1.7, 0.45
        model = RegressorModel(4, 8, 6, seed=5, sigma=sigma)
        x = rng.normal(size=4)
        mean = model.forward(x)
        z_old = mean + rng.normal(size=6)
        z_new = mean + rng.normal(size=6)
        tau = acceptance_ratio(logp_gaussian(model, x, z_new), logp_gaussian(model, x, z_old),
                               Temperature(gamma))
        r_old = ((z_old - mean) ** 2).sum()
        r_new = ((z_new - mean) ** 2).sum()
        assert tau == pytest.approx(math.exp((r_old - r_new) / (2 * sigma**2 * gamma)), rel=1e-9)


def _flat(grads):
    return np.concatenate([grads[k].ravel() for k in sorted(grads)])


def _fd_grads(loss, model, step=1e-4):
    out = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = loss()
            flat[i] = keep - step
            lo = loss()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2 * step)
        out[name] = g
    return out


class TestGradNll:
    def test_confident_correct_classifier_has_zero_output_gradient(self, rng):
        model = ClassifierModel(3, 4, 2, seed=0)
        model.params["w2"][...] = 0.0
        model.params["b2"][...] = [60.0, -60.0]  # softmax is numerically one-hot at class 0
        features = rng.normal(size=(1, 3))
        grads = grad_nll(model, [(features, np.array([0]))])
        assert np.abs(grads["b2"]).max() < 1e-20
        assert np.abs(grads["w2"]).max() < 1e-20

    def test_regressor_zero_residual_zero_gradient(self, rng):
        model = RegressorModel(4, 6, 3, seed=1)
        x = rng.normal(size=4)
        z = model.forward(x)
        grads = grad_nll(model, [(x, z)])
        assert max(np.abs(g).max() for g in grads.values()) == 0.0

    def test_classifier_matches_finite_differences(self):
        failures = 0
        for draw in range(50):
            rng = np.random.default_rng(1000 + draw)
            model = ClassifierModel(4, 5, 3, seed=draw)
            batch = [(rng.normal(size=(2, 4)), rng.integers(0, 3, size=2)) for _ in range(2)]

            def loss():
                total = 0.0
                for feats, toks in batch:
                    total -= logp_discrete(model, feats, toks)
                return total / len(batch)

            exact = _flat(grad_nll(model, batch))
            approx = _flat(_fd_grads(loss, model))
            scale = np.maximum(np.maximum(np.abs(exact), np.abs(approx)), 1e-3)
            failures += (np.abs(exact - approx) / scale).max() > 1e-4
        assert failures == 0

    def test_regressor_matches_finite_differences(self):
        failures = 0
        for draw in range(50):
            rng = np.random.default_rng(2000 + draw)
            model = RegressorModel(5, 4, 3, seed=draw, sigma=1.3)
            batch = [(rng.normal(size=5), rng.normal(size=3)) for _ in range(2)]

            def loss():
                return -sum(logp_gaussian(model, x, z) for x, z in batch) / len(batch)

            exact = _flat(grad_nll(model, batch))
            approx = _flat(_fd_grads(loss, model))
            scale = np.maximum(np.maximum(np.abs(exact), np.abs(approx)), 1e-3)
            failures += (np.abs(exact - approx) / scale).max() > 1e-4
        assert failures == 0

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            grad_nll(ClassifierModel(3, 4, 2, seed=0), [])


class TestOptimizer:
    def test_sgd_step(self):
        model = uniform_classifier(4, 3)
        grads = {k: np.ones_like(v) for k, v in model.params.items()}
        optimizer_step(model, OptimState("sgd", 0.1), grads)
        for p in model.params.values():
            np.testing.assert_allclose(p, -0.1, atol=1e-15)

    def test_zero_gradient_leaves_parameters(self):
        model = ClassifierModel(4, 5, 3, seed=1)
        before = {k: v.copy() for k, v in model.params.items()}
        zeros = {k: np.zeros_like(v) for k, v in model.params.items()}
        opt = OptimState("adam", 1e-3)
        optimizer_step(model, opt, zeros)
        for k in before:
            np.testing.assert_array_equal(model.params[k], before[k])
        assert opt.step_count == 1

    def test_adam_first_step_magnitude(self):
        model = uniform_classifier(4, 3)
        grads = {k: np.ones_like(v) for k, v in model.params.items()}
        optimizer_step(model, OptimState("adam", 1e-3), grads)
        for p in model.params.values():
            np.testing.assert_allclose(np.abs(p), 1e-3, rtol=1e-6)

    def test_shape_mismatch_rejected(self):
        model = uniform_classifier(4, 3)
        grads = {k: np.ones_like(v) for k, v in model.params.items()}
        grads["w1"] = np.ones((2, 2))
        with pytest.raises(ValueError):
            optimizer_step(model, OptimState("sgd", 0.1), grads)

    def test_version_bumps(self):
        model = uniform_classifier(4, 3)
        grads = {k: np.zeros_like(v) for k, v in model.params.items()}
        optimizer_step(model, OptimState("sgd", 0.1), grads)
        assert model.version == 1


class TestPredict:
    def test_zero_model_tie_breaks_to_class_zero(self, rng):
        model = uniform_classifier(5, 4)
        labels = predict_argmax(model, rng.normal(size=(6, 5)))
        assert labels.tolist() == [0] * 6

    def test_strictly_ordered_logits(self):
        model = uniform_classifier(3, 4)
        model.params["b2"][...] = [0.0, 3.0, 1.0, -2.0]
        assert predict_argmax(model, np.zeros((2, 3))).tolist() == [1, 1]

    def test_trained_toy_recovers_classes(self, rng):
        featurizer = Featurizer(2, feature_dim=6, noise_sigma=0.0, seed=5)
        model = ClassifierModel(6, 8, 2, seed=5)
        xs = np.stack([featurizer.features(c, rng) for c in (0, 1) * 20])
        ys = np.array([0, 1] * 20)
        opt = OptimState("sgd", 0.5)
        for _ in range(200):
            optimizer_step(model, opt, grad_nll(model, [(xs, ys)]))
        assert predict_argmax(model, xs).tolist() == ys.tolist()


class TestScorers:
    def test_discrete_scorer_matches_logp(self, rng):
        model = ClassifierModel(6, 10, 5, seed=8)
        features = rng.normal(size=(4, 6))
        scorer = discrete_scorer(model, features)
        state = (2, 0, 4, 1)
        assert scorer.logp(state) == pytest.approx(logp_discrete(model, features, state), abs=1e-12)

    def test_gaussian_scorer_matches_logp(self, rng):
        model = RegressorModel(4, 8, 6, seed=5, sigma=0.8)
        x = rng.normal(size=4)
        z = rng.normal(size=6)
        scorer = gaussian_scorer(model, x)
        assert scorer.logp(z) == pytest.approx(logp_gaussian(model, x, z), abs=1e-12)


class TestCheckpoint:
    def test_roundtrip_bit_identical_logits(self, tmp_path, rng):
        model = ClassifierModel(6, 10, 5, seed=8)
        model.version = 17
        x = rng.normal(size=(3, 6))
        save_checkpoint(model, tmp_path / "model.npz")
        loaded = load_checkpoint(tmp_path / "model.npz")
        np.testing.assert_array_equal(loaded.forward(x), model.forward(x))
        assert loaded.version == 17 and loaded.kind == "classifier"

    def test_regressor_roundtrip(self, tmp_path, rng):
        model = RegressorModel(9, 7, 4, seed=3, sigma=2.5)
        x = rng.normal(size=(2, 9))
        save_checkpoint(model, tmp_path / "model.npz")
        loaded = load_checkpoint(tmp_path / "model.npz")
        np.testing.assert_array_equal(loaded.forward(x), model.forward(x))
        assert loaded.sigma == 2.5


def test_log_softmax_matches_softmax(rng):
    logits = rng.normal(size=(4, 7)) * 10
    np.testing.assert_allclose(np.exp(log_softmax(logits)), softmax(logits), atol=1e-12)
