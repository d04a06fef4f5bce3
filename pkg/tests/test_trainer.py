import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from symground import datasets, trainer
from symground.annealing import Temperature, gamma_at
from symground.config import RunConfig
from symground.errors import UnsatisfiableError
from symground.perception import (ClassifierModel, Featurizer, OptimState, discrete_scorer,
                                  grad_nll, optimizer_step, uniform_classifier)
from symground.tasks import get_task
from symground.tasks.hwf import HwfInstance, str_to_tokens


def hwf_config(**overrides):
    cfg = RunConfig(task="hwf", method="ours", seed=0)
    cfg.train.stage1_epochs = overrides.pop("stage1_epochs", 3)
    cfg.train.stage2_epochs = overrides.pop("stage2_epochs", 2)
    cfg.train.batch_size = overrides.pop("batch_size", 16)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture(scope="module")
def hwf_data():
    featurizer = datasets.make_featurizer("hwf", seed=0)
    return datasets.generate_dataset("hwf", 30, seed=0, featurizer=featurizer)


def toy_instance():
    return HwfInstance(example_id=0, target=Fraction(3), gold=str_to_tokens("1*3"),
                       feature_seed=7)


def toy_setup(seed=7):
    task = get_task("hwf")
    inst = toy_instance()
    featurizer = Featurizer(13, seed=seed)
    features = featurizer.features_for_classes(inst.gold, seed)
    model = ClassifierModel(16, 32, 13, seed=seed)
    return task, inst, features, model


class TestSslGradientCheck:
    def test_discrepancy_is_numerical_noise_at_unit_temperature(self):
        for seed in range(5):
            task, inst, features, model = toy_setup(seed)
            assert trainer.ssl_gradient_check(task, inst, features, model) <= 1e-6

    def test_single_solution_support_matches_supervised_gradient(self):
        task = get_task("hwf")
        inst = HwfInstance(0, Fraction(6561), str_to_tokens("9*9*9*9"))
        featurizer = Featurizer(13, seed=1)
        features = featurizer.features_for_classes(inst.gold, 1)
        model = ClassifierModel(16, 32, 13, seed=1)
        assert trainer.ssl_gradient_check(task, inst, features, model) == 0.0

    def test_other_temperatures_disagree(self):
        task, inst, features, model = toy_setup()
        assert trainer.ssl_gradient_check(task, inst, features, model, gamma=0.5) > 1e-4


class TestExactGroundingOracle:
    def test_single_solution_is_one_hot(self):
        task = get_task("hwf")
        inst = HwfInstance(0, Fraction(6561), str_to_tokens("9*9*9*9"))
        scorer = discrete_scorer(uniform_classifier(16, 13),
                                 np.zeros((7, 16)))
        dist = trainer.exact_grounding_oracle(task, inst, scorer, Temperature(1.0))
        np.testing.assert_array_equal(dist.probs(), [1.0])

    def test_uniform_model_gives_uniform_distribution(self):
        task = get_task("hwf")
        inst = toy_instance()
        scorer = discrete_scorer(uniform_classifier(16, 13), np.zeros((3, 16)))
        probs = trainer.exact_grounding_oracle(task, inst, scorer, Temperature(0.37)).probs()
        np.testing.assert_allclose(probs, 1.0 / 13, atol=1e-12)

    def test_refuses_oversized_support(self):
        task, inst, features, model = toy_setup()
        scorer = discrete_scorer(model, features)
        with pytest.raises(ValueError):
            trainer.exact_grounding_oracle(task, inst, scorer, Temperature(1.0), max_support=5)


class TestGradientBias:
    def test_bias_decays_with_more_inner_steps(self):
        task, inst, features, model = toy_setup()
        projection = task.projection(inst, "default")
        biases = [trainer.gradient_bias(task, inst, features, model, projection,
                                        Temperature(1.0), steps, n_seeds=20)
                  for steps in (1, 10, 100)]
        assert biases[0] >= biases[1] >= biases[2]


class TestStage1:
    def test_zero_inner_steps_equals_supervised_step_on_initial_state(self, hwf_data):
        ds = datasets.Dataset(hwf_data.task_name, hwf_data.featurizer, hwf_data.instances[:1])
        cfg = hwf_config(stage1_epochs=1, stage2_epochs=0, batch_size=1)
        cfg.sampler.steps = 0
        model, chains, _ = trainer.train_stage1(cfg, ds)

        task = get_task("hwf")
        expected = trainer.build_model(cfg, ds)
        features = ds.features(ds.instances[0])
        initial = task.initial_solution(ds.instances[0], None)
        grads = grad_nll(expected, [(features, np.asarray(initial))])
        optimizer_step(expected, OptimState("sgd", cfg.train.stage1_lr), grads)
        for name in expected.params:
            np.testing.assert_array_equal(model.params[name], expected.params[name])
        assert chains[0].state == initial

    def test_gamma_trace_follows_schedule(self, hwf_data):
        cfg = hwf_config(stage1_epochs=4, stage2_epochs=0)
        _, _, metrics = trainer.train_stage1(cfg, hwf_data)
        schedule = cfg.cooling_schedule()
        assert [m.gamma for m in metrics] == [gamma_at(schedule, e).gamma for e in range(4)]

    def test_ssl_and_na_pin_their_temperatures(self, hwf_data):
        for method, expected in (("ssl", 1.0), ("na", 0.001)):
            cfg = hwf_config(stage1_epochs=2, stage2_epochs=0, method=method)
            _, _, metrics = trainer.train_stage1(cfg, hwf_data)
            assert all(m.gamma == expected for m in metrics)

    def test_chains_persist_across_calls(self, hwf_data):
        cfg = hwf_config(stage1_epochs=1, stage2_epochs=0)
        model, chains, _ = trainer.train_stage1(cfg, hwf_data)
        steps_after_one = [c.steps_taken for c in chains]
        assert all(s == cfg.sampler.steps for s in steps_after_one)
        trainer.train_stage1(cfg, hwf_data, model=model, chains=chains)
        assert all(c.steps_taken == 2 * cfg.sampler.steps for c in chains)

    def test_chain_states_stay_feasible(self, hwf_data):
        cfg = hwf_config(stage1_epochs=3, stage2_epochs=0)
        task = get_task("hwf")
        _, chains, _ = trainer.train_stage1(cfg, hwf_data)
        for chain, inst in zip(chains, hwf_data.instances):
            assert task.feasible(inst, chain.state)

    def test_unsatisfiable_example_reports_its_id(self, hwf_data):
        bad = HwfInstance(example_id=17, target=Fraction(10000),
                          gold=str_to_tokens("1+1+1+1"), feature_seed=1)
        ds = datasets.Dataset("hwf", hwf_data.featurizer, [bad])
        with pytest.raises(UnsatisfiableError, match="17"):
            trainer.train_stage1(hwf_config(), ds)

    def test_determinism_bitwise(self, hwf_data):
        cfg = hwf_config(stage1_epochs=2, stage2_epochs=1)
        a = trainer.train(cfg, hwf_data)
        b = trainer.train(cfg, hwf_data)
        assert [dataclasses.asdict(m) for m in a.stage1_metrics + a.stage2_metrics] \
            == [dataclasses.asdict(m) for m in b.stage1_metrics + b.stage2_metrics]
        for name in a.model.params:
            np.testing.assert_array_equal(a.model.params[name], b.model.params[name])

    def test_parallel_workers_match_serial(self, hwf_data):
        serial = hwf_config(stage1_epochs=2, stage2_epochs=0)
        parallel = hwf_config(stage1_epochs=2, stage2_epochs=0, workers=2)
        a = trainer.train(serial, hwf_data)
        b = trainer.train(parallel, hwf_data)
        assert [m.to_record(1) for m in a.stage1_metrics] == [m.to_record(1) for m in b.stage1_metrics]
        for name in a.model.params:
            np.testing.assert_array_equal(a.model.params[name], b.model.params[name])


class TestStage2:
    def test_no_feasible_predictions_is_a_recorded_noop(self, hwf_data):
        cfg = hwf_config(stage2_epochs=2)
        model = uniform_classifier(16, 13)  # predicts all-ones tokens: malformed
        before = {k: v.copy() for k, v in model.params.items()}
        _, metrics = trainer.train_stage2(cfg, hwf_data, model)
        assert len(metrics) == 2
        assert all(m.grounded == 0 for m in metrics)
        for name in before:
            np.testing.assert_array_equal(model.params[name], before[name])

    def test_feasible_predictions_are_trained_on(self):
        # a supervised model on clean features predicts gold, so the filter
        # keeps every example and fine-tuning runs on its own predictions
        featurizer = datasets.make_featurizer("hwf", seed=9, noise_sigma=0.0)
        ds = datasets.generate_dataset("hwf", 20, seed=9, featurizer=featurizer)
        cfg = hwf_config(method="sup", stage1_epochs=60, batch_size=8, stage2_epochs=3)
        model, _ = trainer.train_sup(cfg, ds)
        assert trainer.evaluate(model, ds).feasible_rate == 1.0
        before = {k: v.copy() for k, v in model.params.items()}
        model, metrics = trainer.train_stage2(cfg, ds, model)
        assert all(m.grounded == 20 for m in metrics)
        assert any(not np.array_equal(model.params[k], before[k]) for k in before)


class TestEvaluate:
    def test_uniform_model_matches_hand_computed_fixture(self, hwf_data):
        fixture = datasets.Dataset("hwf", hwf_data.featurizer, hwf_data.instances[:5])
        model = uniform_classifier(16, 13)
        metrics = trainer.evaluate(model, fixture)
        expected_symbol = np.mean([
            sum(t == 0 for t in inst.gold) / 7 for inst in fixture.instances])
        assert metrics.symbol_accuracy == pytest.approx(expected_symbol)
        assert metrics.output_accuracy == 0.0
        assert metrics.feasible_rate == 0.0 and metrics.grounded == 0

    def test_supervised_training_reaches_perfect_scores_on_clean_features(self):
        featurizer = datasets.make_featurizer("hwf", seed=2, noise_sigma=0.0)
        ds = datasets.generate_dataset("hwf", 25, seed=2, featurizer=featurizer)
        cfg = hwf_config(method="sup", stage1_epochs=60, batch_size=8)
        model, metrics = trainer.train_sup(cfg, ds)
        final = trainer.evaluate(model, ds)
        assert final.symbol_accuracy == 1.0
        assert final.output_accuracy == 1.0

    def test_chance_level_symbol_accuracy_for_random_tokens(self):
        # symbol accuracy of the uniform model equals the empirical rate of
        # class-zero gold tokens, about 1/13 of digit slots plus 1/4 chance ops
        featurizer = datasets.make_featurizer("hwf", seed=4)
        ds = datasets.generate_dataset("hwf", 200, seed=4, featurizer=featurizer)
        metrics = trainer.evaluate(uniform_classifier(16, 13), ds)
        assert 0.02 < metrics.symbol_accuracy < 0.12


class TestSup:
    def test_zero_epochs_returns_init_model(self, hwf_data):
        cfg = hwf_config(method="sup", stage1_epochs=0)
        model, metrics = trainer.train_sup(cfg, hwf_data)
        expected = trainer.build_model(cfg, hwf_data)
        for name in expected.params:
            np.testing.assert_array_equal(model.params[name], expected.params[name])
        assert metrics == []

    def test_sdsp_regression_loss_collapses(self):
        ds = datasets.generate_dataset("sdsp", 20, seed=1, featurizer=None)
        cfg = RunConfig(task="sdsp", method="sup", seed=0)
        cfg.train.stage1_epochs = 300
        cfg.train.batch_size = 10
        cfg.train.stage1_optimizer = "adam"
        cfg.train.stage1_lr = 3e-3
        cfg.model.hidden = 128
        model, metrics = trainer.train_sup(cfg, ds)
        residual = 0.0
        for inst in ds.instances:
            pred = model.forward(inst.features())
            residual += float(((pred - inst.exact_distances) ** 2).mean())
        assert residual / len(ds.instances) < 0.5
        assert metrics[-1].output_accuracy >= 0.9


class TestMcmcNoProjMode:
    def test_uses_identity_projection_and_value_permutation(self):
        cfg = RunConfig(task="sudoku", method="mcmc_noproj", seed=0)
        task, choice = trainer.task_for_config(cfg)
        assert choice == "identity"
        assert task.walk == "value_permutation"

    def test_runs_end_to_end(self):
        featurizer = datasets.make_featurizer("sudoku", seed=0)
        ds = datasets.generate_dataset("sudoku", 8, seed=0, featurizer=featurizer)
        cfg = RunConfig(task="sudoku", method="mcmc_noproj", seed=0)
        cfg.train.stage1_epochs = 2
        cfg.train.stage2_epochs = 1
        cfg.train.batch_size = 4
        result = trainer.train(cfg, ds)
        assert len(result.stage1_metrics) == 2 and len(result.stage2_metrics) == 1
