"""Run configuration: a sectioned YAML file with strict key checking.

Every experiment (dataset generation, training, probes) is driven by one
config so that method/schedule/task matrices stay versionable.  Unknown keys
are rejected; ``reference_config`` documents every default.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .annealing import CoolingSchedule
from .errors import ConfigError

METHODS = ("ours", "ssl", "na", "mcmc_noproj", "sup")
TASKS = ("hwf", "sudoku", "sdsp")

ENV_OUTPUT_DIR = "SYMGROUND_OUTPUT_DIR"
ENV_WORKERS = "SYMGROUND_WORKERS"

# desk-scale dataset sizes per task: (train, test)
_DEFAULT_SIZES = {"hwf": (2000, 400), "sudoku": (100, 200), "sdsp": (300, 100)}

# temperature pinned by baseline methods
SSL_GAMMA = 1.0
NA_GAMMA = 0.001


@dataclass
class DataConfig:
    train_size: int = 0  # 0 -> per-task default
    test_size: int = 0
    hwf_length: int = 7
    graph_nodes: int = 10
    edge_prob: float = 0.35
    feature_dim: int = 16
    prototype_scale: float = 3.0
    noise_sigma: float = 0.6
    train_path: str = ""  # "" -> <output_dir>/train.jsonl
    test_path: str = ""


@dataclass
class ScheduleConfig:
    kind: str = "exponential"
    gamma0: float = 1.0
    alpha: float = 0.0  # 0 -> derived: 0.995 (exponential), gamma0/(0.9*E) (linear)
    floor: float = 1e-3
    # schedule step unit is one training epoch


@dataclass
class SamplerConfig:
    steps: int = 10  # inner random-walk steps per example per epoch
    projection: str = "default"


@dataclass
class ModelConfig:
    hidden: int = 64
    sigma: float = 1.0  # regressor observation noise


@dataclass
class TrainSection:
    batch_size: int = 64
    stage1_epochs: int = 200
    stage2_epochs: int = 30
    stage1_optimizer: str = "sgd"
    stage1_lr: float = 0.1
    stage2_optimizer: str = "adam"
    stage2_lr: float = 1e-3


@dataclass
class RunConfig:
    task: str = "hwf"
    method: str = "ours"
    seed: int = 0
    output_dir: str = "runs/out"
    workers: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "mcmc_noproj" and self.task != "sudoku":
            raise ConfigError("mcmc_noproj is the value-permutation walk and only applies to sudoku")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.sampler.steps < 0:
            raise ConfigError("sampler.steps must be >= 0")
        if self.train.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        for name in ("stage1_optimizer", "stage2_optimizer"):
            if getattr(self.train, name) not in ("sgd", "adam"):
                raise ConfigError(f"train.{name} must be 'sgd' or 'adam'")
        if self.schedule.kind not in ("logarithmic", "exponential", "linear"):
            raise ConfigError(f"unknown schedule kind {self.schedule.kind!r}")
        return self

    @property
    def train_size(self) -> int:
        return self.data.train_size or _DEFAULT_SIZES[self.task][0]

    @property
    def test_size(self) -> int:
        return self.data.test_size or _DEFAULT_SIZES[self.task][1]

    @property
    def train_path(self) -> str:
        return self.data.train_path or os.path.join(self.output_dir, "train.jsonl")

    @property
    def test_path(self) -> str:
        return self.data.test_path or os.path.join(self.output_dir, "test.jsonl")

    def cooling_schedule(self) -> CoolingSchedule:
        s = self.schedule
        alpha = s.alpha
        if alpha == 0.0:
            if s.kind == "exponential":
                alpha = 0.995
            elif s.kind == "linear":
                alpha = s.gamma0 / (0.9 * max(self.train.stage1_epochs, 1))
            else:
                alpha = 1.0  # unused by the logarithmic rule
        return CoolingSchedule(kind=s.kind, gamma0=s.gamma0, alpha=alpha, floor=s.floor)


_SECTIONS = {"data": DataConfig, "schedule": ScheduleConfig, "sampler": SamplerConfig,
             "model": ModelConfig, "train": TrainSection}


def config_from_dict(raw: dict) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    cfg = RunConfig()
    top_fields = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in raw.items():
        if key not in top_fields:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTIONS:
            section_cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            section = getattr(cfg, key)
            names = {f.name for f in dataclasses.fields(section_cls)}
            for sub, subval in value.items():
                if sub not in names:
                    raise ConfigError(f"unknown config key {key}.{sub}")
                setattr(section, sub, subval)
        else:
            setattr(cfg, key, value)
    return cfg.validate()


def apply_env_overrides(cfg: RunConfig) -> RunConfig:
    out_dir = os.environ.get(ENV_OUTPUT_DIR)
    if out_dir:
        cfg.output_dir = out_dir
    workers = os.environ.get(ENV_WORKERS)
    if workers:
        try:
            cfg.workers = int(workers)
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS} must be an integer, got {workers!r}") from exc
    return cfg.validate()


def load_config(path, *, seed: int | None = None, env: bool = True) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        raw = yaml.safe_load(handle)
    cfg = config_from_dict(raw)
    if seed is not None:
        cfg.seed = seed
    if env:
        apply_env_overrides(cfg)
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


_REFERENCE_COMMENTS = {
    "task": "hwf | sudoku | sdsp",
    "method": "ours | ssl (gamma pinned to 1) | na (gamma pinned to 0.001) | mcmc_noproj (sudoku only) | sup",
    "seed": "global seed; every derived stream is deterministic in it",
    "output_dir": f"overridable via {ENV_OUTPUT_DIR}",
    "workers": f"parallel sampling processes; overridable via {ENV_WORKERS}",
    "data.train_size": "0 means the per-task default (hwf 2000, sudoku 100, sdsp 300)",
    "data.test_size": "0 means the per-task default (hwf 400, sudoku 200, sdsp 100)",
    "schedule.kind": "logarithmic | exponential | linear; steps are epochs",
    "schedule.alpha": "0 derives a default: 0.995 exponential, gamma0/(0.9*stage1_epochs) linear",
    "sampler.steps": "random-walk steps per example between gradient steps",
    "sampler.projection": "default | identity | endpoints (hwf only)",
    "train.stage2_epochs": "0 disables the hard-filter fine-tuning stage",
}


def reference_config() -> str:
    """Default config as YAML, one commented line per leaf key."""
    cfg = RunConfig()
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            lines.append(f"{f.name}:")
            for sub in dataclasses.fields(value):
                comment = _REFERENCE_COMMENTS.get(f"{f.name}.{sub.name}")
                entry = yaml.safe_dump({sub.name: getattr(value, sub.name)},
                                       default_flow_style=True).strip().strip("{}")
                lines.append(f"  {entry}" + (f"  # {comment}" if comment else ""))
        else:
            comment = _REFERENCE_COMMENTS.get(f.name)
            entry = yaml.safe_dump({f.name: value}, default_flow_style=True).strip().strip("{}")
            lines.append(entry + (f"  # {comment}" if comment else ""))
    return "\n".join(lines) + "\n"
