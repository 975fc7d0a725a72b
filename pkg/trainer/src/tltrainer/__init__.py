"""Transfer-learning trainer with frozen backbones and prediction export.

Trains a classification head on top of a fixed feature extractor, decaying
the learning rate when validation accuracy plateaus, and exports per-sample
class-score tables in the file format the downstream ensembling tools read.
The two packages share only file formats and CLIs, never imports.
"""

from .config import TrainConfig, toy_config
from .errors import ConfigError, DataError, TrainerError, TrainingError
from .train import Checkpoint, PlateauDecay, load_checkpoint, save_checkpoint, train
from .export import export_predictions

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "toy_config",
    "TrainerError",
    "ConfigError",
    "DataError",
    "TrainingError",
    "Checkpoint",
    "PlateauDecay",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "export_predictions",
    "__version__",
]
