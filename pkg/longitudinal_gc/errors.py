"""Exception types shared across the toolkit. CLI exit codes key off these."""


class ConfigError(ValueError):
    """Invalid configuration. `line` is the 1-based YAML line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(ValueError):
    """Malformed or unusable dataset."""


class MissingTargetError(DataError):
    """No observed target cells to score against."""


class GraphError(ValueError):
    """Malformed graph: cycles, unknown nodes, mismatched node sets."""


class TrainingDivergence(RuntimeError):
    """Non-finite loss or parameters during forecaster training."""


class InvariantBreach(RuntimeError):
    """A runtime invariant did not hold."""
