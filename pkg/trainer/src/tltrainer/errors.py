"""Error types shared across the trainer."""


class TrainerError(Exception):
    """Base class for everything this package raises on purpose."""


class ConfigError(TrainerError, ValueError):
    """A training configuration is malformed."""


class DataError(TrainerError, ValueError):
    """A manifest or image source cannot be used."""


class TrainingError(TrainerError, RuntimeError):
    """Training itself went off the rails (non-finite loss and friends)."""
