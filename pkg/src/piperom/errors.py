"""Exception types shared across the toolkit."""


class PipeRomError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(PipeRomError, ValueError):
    """Array shapes or sizes are inconsistent with the operation."""


class DataError(PipeRomError, ValueError):
    """Input data violates a value constraint (non-finite entries, bad time spacing)."""


class DomainError(PipeRomError, ValueError):
    """A physical quantity is outside its admissible range."""


class StabilityError(PipeRomError, RuntimeError):
    """Explicit time step exceeds the stable limit."""


class DivergenceError(PipeRomError, RuntimeError):
    """A state or trajectory became non-finite.

    ``index`` identifies the first offending cell (solver) or the step
    number (rollout), depending on where the divergence occurred.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateDataError(PipeRomError, ValueError):
    """Snapshot data carries no variance to decompose."""


class FitFailureError(PipeRomError, RuntimeError):
    """Every candidate regularizer produced a divergent model.

    ``statuses`` maps each attempted regularizer value to a short outcome
    string, so the caller can see which candidates failed and how.
    """

    def __init__(self, message: str, statuses=None):
        super().__init__(message)
        self.statuses = dict(statuses or {})


class ConfigError(PipeRomError, ValueError):
    """Configuration file or override is invalid."""


class FormatError(PipeRomError, ValueError):
    """A container file is malformed or truncated."""
