"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operand shapes do not conform."""


class EmptyInputError(ValueError):
    """An operation received an empty point set or index set."""


class SingularTriangularError(ValueError):
    """A triangular solve hit a (numerically) zero diagonal entry."""


class SingularEvaluationError(ValueError):
    """Kernel evaluated at coincident points."""


class BreakdownError(RuntimeError):
    """An iterative solver hit a breakdown (e.g. non-SPD operator in CG)."""


class FactorizationError(RuntimeError):
    """An incomplete factorization could not be completed."""


class ContractError(RuntimeError):
    """A structural precondition of the H^2 machinery was violated."""
