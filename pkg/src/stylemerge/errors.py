"""Exception types shared across the package."""


class StylemergeError(Exception):
    """Base class for all package errors."""


class ShapeError(StylemergeError, ValueError):
    """Tensor shapes do not conform for the requested operation."""


class NumericError(StylemergeError, ValueError):
    """Non-finite values where finite ones are required."""


class TapeError(StylemergeError, RuntimeError):
    """Misuse of the gradient tape (e.g. backward on an unrecorded value)."""


class ConfigError(StylemergeError, ValueError):
    """Invalid configuration or empty input where data is required."""


class VocabularyError(StylemergeError, ValueError):
    """Token id outside the tokenizer vocabulary."""


class TemplateError(StylemergeError, ValueError):
    """Annotation template missing a required placeholder."""


class ContextLengthError(StylemergeError, ValueError):
    """Sequence longer than the model context window."""


class CheckpointFormatError(StylemergeError, ValueError):
    """Malformed checkpoint or adapter file."""


class MergeError(StylemergeError, ValueError):
    """Checkpoints or adapters that cannot be merged."""


class RankError(StylemergeError, ValueError):
    """LoRA rank exceeds a target weight dimension."""


class TargetSpecError(StylemergeError, ValueError):
    """Adapter target spec matches no weights or mismatches the checkpoint."""


class DataError(StylemergeError, ValueError):
    """Insufficient or malformed training/evaluation data."""


class TrainingDivergedError(StylemergeError, RuntimeError):
    """Loss became non-finite during training."""
