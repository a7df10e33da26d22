"""Co-imitation learning for sparse-reward gridworlds, in plain numpy."""

from .env import Action, GridSpec, Kind, SeedMode, make_env, wrap_delayed
from .errors import ConfigError, NumericError, TrainingAborted, UsageError
from .nn import NetworkArch
from .trainer import TrainConfig, Trainer, evaluate, fairness_accounting, train

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ConfigError",
    "GridSpec",
    "Kind",
    "NetworkArch",
    "NumericError",
    "SeedMode",
    "TrainConfig",
    "Trainer",
    "TrainingAborted",
    "UsageError",
    "evaluate",
    "fairness_accounting",
    "make_env",
    "train",
    "wrap_delayed",
]
