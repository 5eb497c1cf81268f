"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat
and the classes meaningful.
"""


class BargainError(Exception):
    """Base class for all package errors."""


class ConfigError(BargainError):
    """Invalid or unresolvable run configuration."""


class DataError(BargainError):
    """Corpus or input data problems (missing files, empty inputs)."""


class ContractError(BargainError):
    """A caller violated an operation precondition."""


class IllegalTransition(ContractError):
    """An act was applied to a terminal dialogue state."""


class InvalidAct(ContractError):
    """An act is malformed or infeasible for its scenario."""


class InvalidDivision(ContractError):
    """A division claims more items than the scenario provides."""


class SamplingError(BargainError):
    """Scenario sampling could not satisfy its constraints."""


class TrainingError(BargainError):
    """Optimization diverged or produced non-finite values."""


class IntegrityError(BargainError):
    """A checkpoint or report failed a hash/consistency check."""
