"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: ConfigError -> 2, MissingArtifactError -> 3,
NumericError (and subclasses) -> 4. Everything else is a plain failure.
"""


class VoxeditError(Exception):
    """Base class for all library errors."""


class ContractError(VoxeditError, ValueError):
    """A documented precondition was violated by the caller."""


class DomainError(ContractError):
    """An input value is outside the mathematical domain of an operation."""


class ConfigError(VoxeditError, ValueError):
    """Invalid or inconsistent configuration."""


class NumericError(VoxeditError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""


class DivergenceError(NumericError):
    """An iterative routine failed to converge within its step budget."""


class TrainingError(VoxeditError, RuntimeError):
    """Training diverged or was handed degenerate data."""


class MissingArtifactError(VoxeditError, FileNotFoundError):
    """A required upstream artifact does not exist on disk."""


class ManifestError(ContractError):
    """A dataset manifest is incomplete or inconsistent."""
