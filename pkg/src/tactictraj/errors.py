"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` used by the command line front end:
2 for usage problems, 3 for data problems, 4 for numeric aborts.
"""


class TacticTrajError(Exception):
    exit_code = 2


class ArgumentError(TacticTrajError, ValueError):
    """An argument is outside its documented domain."""


class DimensionError(TacticTrajError, ValueError):
    """Tensor shapes do not agree."""


class ConfigError(TacticTrajError, ValueError):
    """A configuration does not match the parameters it is applied to."""


class ContractError(TacticTrajError, RuntimeError):
    """A call violated an API precondition (for example a non-scalar loss)."""


class CapacityError(TacticTrajError, ValueError):
    """Exact enumeration refused because the problem is too large."""


class DomainError(TacticTrajError, ValueError):
    """A numeric argument lies outside the function's domain."""


class DataError(TacticTrajError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    """A scene record violates the file schema or dataset configuration."""


class VocabularyError(DataError):
    """A tactic id is not part of the vocabulary."""


class MappingError(DataError):
    """An agent is not mapped to a team."""


class CheckpointVersionError(DataError):
    """A checkpoint cannot be used with the requested configuration."""


class NumericAbort(TacticTrajError, FloatingPointError):
    exit_code = 4
