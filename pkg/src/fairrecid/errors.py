"""Exception types shared across the package.

Grouped by failure family so the CLI can map them onto distinct exit codes:
data problems (bad file, bad rows, bad schema), numeric problems (diverged
training), and configuration problems (bad flag combinations).
"""


class FairRecidError(Exception):
    """Base class for all package errors."""


class ConfigError(FairRecidError):
    """Invalid configuration value or flag combination."""


# ---------------------------------------------------------------- data layer


class DataError(FairRecidError):
    """Base class for ingest/encode/split/standardize failures."""


class InputNotFoundError(DataError):
    pass


class MalformedHeaderError(DataError):
    pass


class RowParseError(DataError):
    """A single unparseable row; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ParseThresholdExceededError(DataError):
    """Too many unparseable rows to trust the file."""


class EmptyInputError(DataError):
    pass


class UnknownCategoryError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class DegenerateSplitError(DataError):
    pass


# ------------------------------------------------------------ network layer


class NetworkError(FairRecidError):
    """Base class for dense-network construction/evaluation failures."""


class InvalidDimsError(NetworkError):
    pass


class ShapeMismatchError(NetworkError):
    pass


class StaleCacheError(NetworkError):
    """Forward cache does not match the network it is replayed against."""


class InvalidStepError(NetworkError):
    """Non-positive step size passed to the finite-difference oracle."""


class CheckpointError(NetworkError):
    """Unreadable or shape-inconsistent checkpoint file."""


# ------------------------------------------------------------ trainer layer


class TrainerError(FairRecidError):
    pass


class NoAdversaryError(TrainerError):
    """Adversary-only operation requested in baseline mode."""


class TrainingDivergedError(TrainerError):
    """Non-finite loss encountered; carries the epoch/batch it happened at."""

    def __init__(self, epoch: int, batch: int, message: str):
        super().__init__(f"epoch {epoch}, batch {batch}: {message}")
        self.epoch = epoch
        self.batch = batch


# ------------------------------------------------------------- metric layer


class MetricError(FairRecidError):
    pass


class InvalidThresholdError(MetricError):
    pass


class EmptyGroupError(MetricError):
    pass


class UndefinedRateError(MetricError):
    """A group lacks the denominator needed for an FP or FN rate."""


class SingleClassError(MetricError):
    """AUC requested with only one label class present."""


class InvalidBinCountError(MetricError):
    pass
