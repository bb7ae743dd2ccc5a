"""gknet: a small from-scratch CNN library and training harness on numpy."""

from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DecodeError,
    ModelSpecError,
    ShapeError,
    StateError,
    TrainingError,
)
from .layers import Network
from .metrics import MetricsReport, metrics_report
from .model_config import (
    ModelConfig,
    builtin_presets,
    instantiate,
    parse_model_spec,
    render_model_spec,
)
from .optim import SGD, Adam, OptimizerConfig, RMSProp, build_optimizer
from .train import History, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DecodeError",
    "History",
    "MetricsReport",
    "ModelConfig",
    "ModelSpecError",
    "Network",
    "OptimizerConfig",
    "RMSProp",
    "SGD",
    "ShapeError",
    "StateError",
    "TrainingError",
    "TrainConfig",
    "builtin_presets",
    "build_optimizer",
    "evaluate",
    "instantiate",
    "metrics_report",
    "parse_model_spec",
    "render_model_spec",
    "train",
]
