"""Annealed constrained-MCMC symbol grounding for weakly supervised learning.

The package trains perception models (symbol classifiers, distance
regressors) from final outputs only: per-example Metropolis chains sample
feasible latent symbol states from a temperature-annealed grounding
distribution, using projection plus task-specific inverse-projection solvers
to move between otherwise disconnected solutions.
"""

from .annealing import (CoolingSchedule, GroundingDistribution, StateEnergy, Temperature,
                        acceptance_ratio, closed_form_grounding, gamma_at)
from .config import RunConfig, load_config, reference_config
from .datasets import Dataset, generate_dataset, make_featurizer, read_dataset, write_dataset
from .errors import ConfigError, NumericalFault, SymgroundError, UnsatisfiableError
from .estimator import GroundingEstimator
from .perception import (ClassifierModel, Featurizer, OptimState, RegressorModel,
                         grad_nll, load_checkpoint, logp_discrete, logp_gaussian,
                         optimizer_step, predict_argmax, save_checkpoint)
from .sampler import (GroundingChain, Projection, ProposalOutcome, connectivity_probe,
                      identity_projection, init_chain, metropolis_step, run_chain)
from .tasks import HwfTask, SdspTask, SudokuTask, get_task
from .trainer import (EpochMetrics, TrainResult, chain_oracle_tv, evaluate,
                      exact_grounding_oracle, gradient_bias, ssl_gradient_check, train,
                      train_stage1, train_stage2, train_sup)

__version__ = "0.1.0"

__all__ = [
    "Temperature", "CoolingSchedule", "gamma_at", "acceptance_ratio",
    "closed_form_grounding", "GroundingDistribution", "StateEnergy",
    "Projection", "identity_projection", "GroundingChain", "ProposalOutcome",
    "init_chain", "metropolis_step", "run_chain", "connectivity_probe",
    "Featurizer", "ClassifierModel", "RegressorModel", "OptimState",
    "logp_discrete", "logp_gaussian", "grad_nll", "optimizer_step", "predict_argmax",
    "save_checkpoint", "load_checkpoint",
    "HwfTask", "SudokuTask", "SdspTask", "get_task",
    "Dataset", "generate_dataset", "make_featurizer", "read_dataset", "write_dataset",
    "RunConfig", "load_config", "reference_config",
    "EpochMetrics", "TrainResult", "train", "train_stage1", "train_stage2", "train_sup",
    "evaluate", "exact_grounding_oracle", "ssl_gradient_check", "chain_oracle_tv",
    "gradient_bias",
    "GroundingEstimator",
    "SymgroundError", "UnsatisfiableError", "NumericalFault", "ConfigError",
]
