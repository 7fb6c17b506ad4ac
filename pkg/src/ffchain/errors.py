"""Exception hierarchy shared by all pipelines.

Each class carries the CLI exit code it maps to.
"""


class FFChainError(Exception):
    """Base class for toolkit errors."""

    exit_code = 3


class ShapeError(FFChainError, ValueError):
    """Operands have inconsistent chain length or cell dimension."""

    exit_code = 1


class ConfigError(FFChainError, ValueError):
    """Malformed or semantically invalid configuration text."""

    exit_code = 1

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class PreconditionError(FFChainError, ValueError):
    exit_code = 3


class SemisimplicityError(FFChainError):
    exit_code = 2


class NormFormError(FFChainError):
    exit_code = 3


class GenericityError(FFChainError):
    """A nondegeneracy condition required by a bifurcation pipeline fails."""

    exit_code = 2


class InvarianceError(GenericityError):
    """Response function is not in S^1-invariant normal form."""


class BracketOverflowError(FFChainError):
    exit_code = 3


class BranchError(FFChainError):
    """Newton failure while continuing a bifurcation branch."""

    exit_code = 3


class SideError(BranchError):
    """Parameter value lies on the side where no branch exists."""


class StiffnessError(FFChainError):
    exit_code = 4


class NoOrbitError(FFChainError):
    exit_code = 4


class FitError(FFChainError):
    exit_code = 5
