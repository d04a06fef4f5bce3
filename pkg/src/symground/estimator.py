"""Scikit-learn style front door for the weakly supervised trainer.

``GroundingEstimator`` wraps dataset -> fit -> predict so the method composes
with the surrounding ecosystem (``get_params``/``set_params``/``clone`` all
behave).  ``fit`` consumes a :class:`~symground.datasets.Dataset`, whose
instances carry the weak supervision; gold symbols are never read during
training.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import RunConfig
from .datasets import Dataset
from .errors import ConfigError
from .trainer import evaluate, feature_cache, task_for_config, train, _predict_all


def check_dataset(X, task: str | None = None) -> Dataset:
    """Validate a fit/predict input and return it unchanged."""
    if not isinstance(X, Dataset):
        raise TypeError(f"expected a symground Dataset, got {type(X).__name__}")
    if len(X) == 0:
        raise ValueError("dataset is empty")
    if task is not None and X.task_name != task:
        raise ValueError(f"dataset is for task {X.task_name!r}, estimator expects {task!r}")
    return X


class GroundingEstimator(BaseEstimator):
    """Weakly supervised symbol perception trained by annealed constrained MCMC.

    Parameters mirror the run-config leaves; see ``symground print-config``
    for their meanings.  After ``fit`` the trained perception model is in
    ``model_`` and the per-epoch training trace in ``stage1_metrics_`` /
    ``stage2_metrics_``.
    """

    def __init__(self, task="hwf", method="ours", schedule="exponential", gamma0=1.0,
                 alpha=0.0, floor=1e-3, steps=10, projection="default", batch_size=64,
                 stage1_epochs=200, stage2_epochs=30, stage1_optimizer="sgd", stage1_lr=0.1,
                 stage2_optimizer="adam", stage2_lr=1e-3, hidden=64, sigma=1.0,
                 seed=0, workers=1):
        self.task = task
        self.method = method
        self.schedule = schedule
        self.gamma0 = gamma0
        self.alpha = alpha
        self.floor = floor
        self.steps = steps
        self.projection = projection
        self.batch_size = batch_size
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.stage1_optimizer = stage1_optimizer
        self.stage1_lr = stage1_lr
        self.stage2_optimizer = stage2_optimizer
        self.stage2_lr = stage2_lr
        self.hidden = hidden
        self.sigma = sigma
        self.seed = seed
        self.workers = workers

    def _config(self) -> RunConfig:
        cfg = RunConfig(task=self.task, method=self.method, seed=self.seed, workers=self.workers)
        cfg.schedule.kind = self.schedule
        cfg.schedule.gamma0 = self.gamma0
        cfg.schedule.alpha = self.alpha
        cfg.schedule.floor = self.floor
        cfg.sampler.steps = self.steps
        cfg.sampler.projection = self.projection
        cfg.model.hidden = self.hidden
        cfg.model.sigma = self.sigma
        cfg.train.batch_size = self.batch_size
        cfg.train.stage1_epochs = self.stage1_epochs
        cfg.train.stage2_epochs = self.stage2_epochs
        cfg.train.stage1_optimizer = self.stage1_optimizer
        cfg.train.stage1_lr = self.stage1_lr
        cfg.train.stage2_optimizer = self.stage2_optimizer
        cfg.train.stage2_lr = self.stage2_lr
        try:
            return cfg.validate()
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc

    def fit(self, X: Dataset, y=None):
        """Train on weakly supervised instances; gold symbols stay unread."""
        X = check_dataset(X, self.task)
        cfg = self._config()
        result = train(cfg, X)
        self.model_ = result.model
        self.chains_ = result.chains
        self.stage1_metrics_ = result.stage1_metrics
        self.stage2_metrics_ = result.stage2_metrics
        self.task_, _ = task_for_config(cfg)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, X: Dataset):
        """Decoded symbol states (token tuples, boards, or distance vectors)."""
        self._check_fitted()
        X = check_dataset(X, self.task)
        return _predict_all(self.model_, self.task_, feature_cache(X))

    def score(self, X: Dataset, y=None) -> float:
        """Final-output accuracy on ``X`` (calculation/board/path accuracy)."""
        self._check_fitted()
        X = check_dataset(X, self.task)
        return evaluate(self.model_, X, task=self.task_).output_accuracy
