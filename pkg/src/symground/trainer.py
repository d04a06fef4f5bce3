"""Two-stage weakly supervised training plus exact small-instance oracles.

Stage one anneals the sampling temperature while alternating projected
random-walk steps on every minibatch example's chain with one stochastic
gradient step on the sampled feasible states.  Stage two sets the temperature
to zero in spirit: it keeps only the examples whose argmax prediction already
satisfies the constraint and fine-tunes on those predictions as hard pseudo
labels.  The oracle helpers enumerate small feasible sets exactly and are the
reference every sampling claim is tested against.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .annealing import Temperature, closed_form_grounding, gamma_at, GroundingDistribution
from .config import NA_GAMMA, SSL_GAMMA, RunConfig
from .datasets import Dataset
from .errors import UnsatisfiableError
from .perception import (ClassifierModel, DiscreteScorer, GaussianScorer, Mlp, OptimState,
                         RegressorModel, discrete_scorer, gaussian_scorer, grad_nll,
                         optimizer_step, predict_argmax)
from .sampler import (GroundingChain, Projection, chain_escaped, init_chain,
                      metropolis_step, run_chain)
from .tasks import SudokuTask, get_task
from .tasks.base import Task

_SHUFFLE_STREAM = 606
_STAGE2_STREAM = 707


@dataclass
class EpochMetrics:
    """One line of the training trace."""

    epoch: int
    gamma: float
    feasible_rate: float
    grounded: int
    symbol_accuracy: float
    output_accuracy: float
    mean_acceptance: float | None = None
    escape_rate: float | None = None

    def to_record(self, stage: int) -> dict:
        return {
            "stage": stage,
            "epoch": self.epoch,
            "gamma": self.gamma,
            "feasible_rate": self.feasible_rate,
            "grounded": self.grounded,
            "symbol_accuracy": self.symbol_accuracy,
            "output_accuracy": self.output_accuracy,
            "mean_acceptance": self.mean_acceptance,
            "escape_rate": self.escape_rate,
        }


@dataclass
class TrainResult:
    model: Mlp
    chains: list | None
    stage1_metrics: list
    stage2_metrics: list


def task_for_config(cfg: RunConfig) -> tuple[Task, str]:
    """Task object and projection choice realizing the configured method."""
    if cfg.method == "mcmc_noproj":
        return SudokuTask(walk="value_permutation"), "identity"
    return get_task(cfg.task), cfg.sampler.projection


def build_model(cfg: RunConfig, dataset: Dataset) -> Mlp:
    if cfg.task == "sdsp":
        n = dataset.instances[0].n
        return RegressorModel(n * n, cfg.model.hidden, n, seed=cfg.seed, sigma=cfg.model.sigma)
    featurizer = dataset.featurizer
    return ClassifierModel(featurizer.feature_dim, cfg.model.hidden,
                           featurizer.num_classes, seed=cfg.seed)


def feature_cache(dataset: Dataset) -> list[np.ndarray]:
    return [dataset.features(inst) for inst in dataset.instances]


def _scorers(model: Mlp, features: list[np.ndarray], ids, value_offset: int = 0) -> list:
    """Fresh per-example scorers for the model's current parameters."""
    if model.kind == "classifier":
        stacked = np.concatenate([features[i] for i in ids], axis=0)
        logits = model.forward(stacked)
        shifted = logits - logits.max(axis=-1, keepdims=True)
        tables = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        lengths = [features[i].shape[0] for i in ids]
        offsets = np.cumsum([0] + lengths)
        return [DiscreteScorer(tables[offsets[k]:offsets[k + 1]], value_offset)
                for k in range(len(ids))]
    means = model.forward(np.stack([features[i] for i in ids]))
    return [GaussianScorer(means[k], model.sigma) for k in range(len(ids))]


def _gamma_for(cfg: RunConfig, epoch: int) -> Temperature:
    if cfg.method == "ssl":
        return Temperature(SSL_GAMMA, floor=cfg.schedule.floor)
    if cfg.method == "na":
        return Temperature(NA_GAMMA, floor=min(cfg.schedule.floor, NA_GAMMA))
    return gamma_at(cfg.cooling_schedule(), epoch)


def _advance_slice(args):
    """Advance a slice of chains; runs in a worker process when workers > 1."""
    chains, instances, scorers, task, projection, gamma, steps = args
    for chain, instance, scorer in zip(chains, instances, scorers):
        run_chain(chain, instance, task, projection, scorer, gamma, steps)
    return chains


def _predict_all(model: Mlp, task: Task, features: list[np.ndarray]):
    """Argmax decoding of every example (distance vectors for the regressor)."""
    if model.kind == "classifier":
        stacked = np.concatenate(features, axis=0)
        labels = predict_argmax(model, stacked)
        lengths = [f.shape[0] for f in features]
        offsets = np.cumsum([0] + lengths)
        return [task.labels_to_state(labels[offsets[k]:offsets[k + 1]])
                for k in range(len(features))]
    means = model.forward(np.stack(features))
    return [means[k] for k in range(len(features))]


def _prediction_metrics(model: Mlp, task: Task, dataset: Dataset,
                        features: list[np.ndarray]) -> tuple[float, int, float, float]:
    states = _predict_all(model, task, features)
    n = len(states)
    feasible = sum(task.feasible(inst, s) for inst, s in zip(dataset.instances, states))
    symbol = sum(task.symbol_accuracy(inst, s) for inst, s in zip(dataset.instances, states))
    output = sum(task.output_correct(inst, s) for inst, s in zip(dataset.instances, states))
    return feasible / n, feasible, symbol / n, output / n


def evaluate(model: Mlp, dataset: Dataset, task: Task | None = None,
             features: list[np.ndarray] | None = None, epoch: int = -1) -> EpochMetrics:
    """Prediction metrics of ``model`` on ``dataset`` (no sampling involved)."""
    task = task or get_task(dataset.task_name)
    features = features or feature_cache(dataset)
    feasible_rate, grounded, symbol, output = _prediction_metrics(model, task, dataset, features)
    return EpochMetrics(epoch=epoch, gamma=0.0, feasible_rate=feasible_rate, grounded=grounded,
                        symbol_accuracy=symbol, output_accuracy=output)


def init_chains(cfg: RunConfig, dataset: Dataset, task: Task) -> list[GroundingChain]:
    chains = []
    for instance in dataset.instances:
        try:
            chains.append(init_chain(instance, task, cfg.seed))
        except UnsatisfiableError as exc:
            raise UnsatisfiableError(
                f"example {instance.example_id} is unsatisfiable at init: {exc}") from exc
    return chains


def train_stage1(cfg: RunConfig, dataset: Dataset, *, model: Mlp | None = None,
                 chains: list[GroundingChain] | None = None, pool=None):
    """Annealed sampling stage; returns (model, chains, per-epoch metrics)."""
    task, projection_choice = task_for_config(cfg)
    projection = task.projection(dataset.instances[0], projection_choice)
    features = feature_cache(dataset)
    if model is None:
        model = build_model(cfg, dataset)
    if chains is None:
        chains = init_chains(cfg, dataset, task)
    opt = OptimState(cfg.train.stage1_optimizer, cfg.train.stage1_lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _SHUFFLE_STREAM)))
    metrics: list[EpochMetrics] = []
    n = len(dataset.instances)
    for epoch in range(cfg.train.stage1_epochs):
        gamma = _gamma_for(cfg, epoch)
        accepted_before = sum(c.accepted for c in chains)
        proposals_before = sum(c.proposals for c in chains)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.train.batch_size):
            ids = sorted(int(i) for i in order[start:start + cfg.train.batch_size])
            scorers = _scorers(model, features, ids, task.label_offset)
            _advance_batch(cfg, pool, chains, dataset, scorers, task, projection, gamma, ids)
            batch = [(features[i], _grad_target(task, chains[i].state)) for i in ids]
            optimizer_step(model, opt, grad_nll(model, batch))
        feasible_rate, grounded, symbol, output = _prediction_metrics(model, task, dataset, features)
        proposals = sum(c.proposals for c in chains) - proposals_before
        accepted = sum(c.accepted for c in chains) - accepted_before
        metrics.append(EpochMetrics(
            epoch=epoch, gamma=gamma.gamma, feasible_rate=feasible_rate, grounded=grounded,
            symbol_accuracy=symbol, output_accuracy=output,
            mean_acceptance=(accepted / proposals) if proposals else None,
            escape_rate=sum(chain_escaped(c, task) for c in chains) / len(chains)))
    return model, chains, metrics


def _grad_target(task: Task, state):
    if task.kind == "discrete":
        return np.asarray(task.state_to_labels(state), dtype=int)
    return np.asarray(state, dtype=float)


def _advance_batch(cfg, pool, chains, dataset, scorers, task, projection, gamma, ids):
    picked = [chains[i] for i in ids]
    instances = [dataset.instances[i] for i in ids]
    if pool is None or cfg.workers <= 1:
        _advance_slice((picked, instances, scorers, task, projection, gamma, cfg.sampler.steps))
        return
    shards = np.array_split(np.arange(len(ids)), cfg.workers)
    jobs = [( [picked[j] for j in shard], [instances[j] for j in shard],
              [scorers[j] for j in shard], task, projection, gamma, cfg.sampler.steps)
            for shard in shards if len(shard)]
    for shard, advanced in zip([s for s in shards if len(s)], pool.map(_advance_slice, jobs)):
        for j, chain in zip(shard, advanced):
            chains[ids[j]] = chain


def train_stage2(cfg: RunConfig, dataset: Dataset, model: Mlp):
    """Hard-filter fine-tuning: train only on feasible argmax predictions."""
    task, _ = task_for_config(cfg)
    features = feature_cache(dataset)
    opt = OptimState(cfg.train.stage2_optimizer, cfg.train.stage2_lr)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STAGE2_STREAM)))
    metrics: list[EpochMetrics] = []
    for epoch in range(cfg.train.stage2_epochs):
        states = _predict_all(model, task, features)
        keep = [i for i, s in enumerate(states) if task.feasible(dataset.instances[i], s)]
        if keep:
            order = rng.permutation(len(keep))
            for start in range(0, len(keep), cfg.train.batch_size):
                ids = [keep[int(j)] for j in order[start:start + cfg.train.batch_size]]
                batch = [(features[i], _grad_target(task, states[i])) for i in ids]
                optimizer_step(model, opt, grad_nll(model, batch))
        # with no feasible predictions the epoch is a recorded no-op
        feasible_rate, grounded, symbol, output = _prediction_metrics(model, task, dataset, features)
        metrics.append(EpochMetrics(epoch=epoch, gamma=0.0, feasible_rate=feasible_rate,
                                    grounded=grounded, symbol_accuracy=symbol,
                                    output_accuracy=output))
    return model, metrics


def train_sup(cfg: RunConfig, dataset: Dataset):
    """Supervised reference: plain training on the hidden gold states."""
    task, _ = task_for_config(cfg)
    features = feature_cache(dataset)
    model = build_model(cfg, dataset)
    opt = OptimState(cfg.train.stage1_optimizer, cfg.train.stage1_lr)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _SHUFFLE_STREAM)))
    metrics: list[EpochMetrics] = []
    targets = [_grad_target(task, task.gold_state(inst)) for inst in dataset.instances]
    n = len(dataset.instances)
    for epoch in range(cfg.train.stage1_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.train.batch_size):
            ids = [int(i) for i in order[start:start + cfg.train.batch_size]]
            batch = [(features[i], targets[i]) for i in ids]
            optimizer_step(model, opt, grad_nll(model, batch))
        feasible_rate, grounded, symbol, output = _prediction_metrics(model, task, dataset, features)
        metrics.append(EpochMetrics(epoch=epoch, gamma=0.0, feasible_rate=feasible_rate,
                                    grounded=grounded, symbol_accuracy=symbol,
                                    output_accuracy=output))
    return model, metrics


def train(cfg: RunConfig, dataset: Dataset) -> TrainResult:
    """Run the configured method end to end."""
    if cfg.method == "sup":
        model, metrics = train_sup(cfg, dataset)
        return TrainResult(model=model, chains=None, stage1_metrics=metrics, stage2_metrics=[])
    pool = None
    try:
        if cfg.workers > 1:
            pool = ProcessPoolExecutor(max_workers=cfg.workers)
        model, chains, stage1 = train_stage1(cfg, dataset, pool=pool)
    finally:
        if pool is not None:
            pool.shutdown()
    stage2: list[EpochMetrics] = []
    if cfg.train.stage2_epochs > 0:
        model, stage2 = train_stage2(cfg, dataset, model)
    return TrainResult(model=model, chains=chains, stage1_metrics=stage1, stage2_metrics=stage2)


# -- exact small-instance oracles --------------------------------------------


def exact_grounding_oracle(task: Task, instance, scorer, gamma: Temperature,
                           max_support: int = 10_000) -> GroundingDistribution:
    """Brute-force grounding distribution over an enumerated feasible set."""
    support = task.enumerate_feasible(instance)
    if not support:
        raise UnsatisfiableError("instance has an empty feasible set")
    if len(support) > max_support:
        raise ValueError(f"feasible set too large to enumerate exactly ({len(support)})")
    logps = np.array([scorer.logp(state) for state in support])
    return GroundingDistribution(support=support, logps=logps, gamma=gamma)


def _per_state_grads(model: Mlp, features: np.ndarray, task: Task, support) -> np.ndarray:
    rows = []
    for state in support:
        g = grad_nll(model, [(features, _grad_target(task, state))])
        rows.append(np.concatenate([g[k].ravel() for k in sorted(g)]))
    return np.stack(rows)


def ssl_gradient_check(task: Task, instance, features: np.ndarray, model: ClassifierModel,
                       gamma: float = 1.0) -> float:
    """Max-abs gap between the marginal-likelihood gradient and the expected
    grounding gradient at the given temperature.

    The direct side differentiates -log sum_z P(z|x) in probability space; the
    oracle side averages per-state gradients under the closed-form grounding
    distribution.  At temperature 1 the two are the same function, so the gap
    is numerical noise; at other temperatures it is genuinely nonzero.
    """
    scorer = discrete_scorer(model, features, task.label_offset)
    support = task.enumerate_feasible(instance)
    logps = np.array([scorer.logp(state) for state in support])
    probs = np.exp(logps)
    direct_weights = probs / probs.sum()
    grads = _per_state_grads(model, features, task, support)
    direct = direct_weights @ grads
    oracle = closed_form_grounding(logps, Temperature(gamma)) @ grads
    return float(np.abs(direct - oracle).max())


def chain_oracle_tv(task: Task, instance, features: np.ndarray, model: Mlp,
                    projection: Projection, gamma: Temperature, n_samples: int = 100_000,
                    burn_in: int = 2_000, seed: int = 0,
                    chain_gamma: Temperature | None = None) -> float:
    """Total-variation distance between a long chain's empirical state
    distribution and the exact grounding distribution.

    ``chain_gamma`` lets diagnostics run the chain at a deliberately wrong
    temperature while still comparing against the reference distribution.
    """
    scorer = (discrete_scorer(model, features, task.label_offset)
              if model.kind == "classifier" else gaussian_scorer(model, features))
    oracle = exact_grounding_oracle(task, instance, scorer, gamma)
    sample_gamma = chain_gamma if chain_gamma is not None else gamma
    index = {state: k for k, state in enumerate(oracle.support)}
    counts = np.zeros(len(index))
    chain = init_chain(instance, task, seed)
    run_chain(chain, instance, task, projection, scorer, sample_gamma, burn_in)
    for _ in range(n_samples):
        metropolis_step(chain, instance, task, projection, scorer, sample_gamma)
        counts[index[chain.state]] += 1
    empirical = counts / counts.sum()
    return float(0.5 * np.abs(empirical - oracle.probs()).sum())


def gradient_bias(task: Task, instance, features: np.ndarray, model: Mlp,
                  projection: Projection, gamma: Temperature, steps: int,
                  n_seeds: int = 20, chains_per_seed: int = 64) -> float:
    """Norm of the gap between the chain-sampled mean gradient after ``steps``
    inner iterations and the exact expectation under the grounding oracle."""
    scorer = (discrete_scorer(model, features, task.label_offset)
              if model.kind == "classifier" else gaussian_scorer(model, features))
    oracle = exact_grounding_oracle(task, instance, scorer, gamma)
    grads = _per_state_grads(model, features, task, oracle.support)
    index = {state: k for k, state in enumerate(oracle.support)}
    exact_mean = oracle.probs() @ grads
    total = np.zeros(grads.shape[1])
    draws = 0
    for seed in range(n_seeds):
        for c in range(chains_per_seed):
            chain = init_chain(instance, task, (seed, c))
            run_chain(chain, instance, task, projection, scorer, gamma, steps)
            total += grads[index[chain.state]]
            draws += 1
    return float(np.linalg.norm(total / draws - exact_mean))
