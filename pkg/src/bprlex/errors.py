"""Exception hierarchy shared across the package.

Each family maps to a distinct CLI exit status (see ``bprlex.cli``).
"""


class BprlexError(Exception):
    exit_code = 1


class ConfigError(BprlexError, ValueError):
    exit_code = 2


class PrerequisiteError(ConfigError):
    """A pipeline step needs the output of an earlier command."""


class DataError(BprlexError, ValueError):
    exit_code = 3


class CheckpointError(DataError):
    pass


class ColdScoringImpossible(DataError):
    """No auxiliary signal is available to score a cold source word."""


class TrainingDivergence(BprlexError, ArithmeticError):
    exit_code = 4
