"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class ShapeError(ValueError):
    """Array arguments have incompatible shapes."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class RenderError(ValueError):
    """Text cannot be rasterized (empty input or missing glyph)."""


class AspectError(ValueError):
    """Image content exceeds the maximum width:height ratio."""


class ManifestError(ValueError):
    """A manifest file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class AlphabetError(ValueError):
    """A label contains characters outside the recognizer's alphabet."""


class WriterLookupError(ValueError):
    """A writer id has no slot in the embedding table."""


class TrainingError(RuntimeError):
    """Training diverged; carries the step at which loss became non-finite."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class ConfigError(ValueError):
    """An experiment config file is invalid."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
