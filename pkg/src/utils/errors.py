"""
Exception types raised by the matting toolkit
"""


class MattingError(Exception):
    """Base class for every error raised by this package"""


class InvalidInputError(MattingError, ValueError):
    """Rejected input: mismatched dimensions or out-of-range values"""


class ManifestError(MattingError):
    """Dataset layout problem; the message names the offending file"""

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{message}: {path}")
        self.path = path


class EmptyDatasetError(MattingError):
    pass


class ConfigError(MattingError):
    """Invalid experiment configuration; carries the dotted key path"""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class CheckpointError(MattingError):
    pass


class TrainingAbort(MattingError):
    """Non-finite loss during training"""

    def __init__(self, stage, step, detail):
        super().__init__(f"training aborted in {stage} at step {step}: {detail}")
        self.stage = stage
        self.step = step


class StageError(MattingError):
    """Wraps any failure raised inside a named pipeline stage"""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class OutputExistsError(MattingError):
    """Refusing to write into a non-empty output directory"""
