"""Exception hierarchy.

Two families matter to callers: bad inputs (:class:`PreconditionError`) and
numerical procedures that did not reach their tolerance
(:class:`NumericalError`).  The command line maps them to distinct exit codes.
"""


class PreconditionError(ValueError):
    """Inputs violate the documented preconditions."""


class NumericalError(RuntimeError):
    """A solver, quadrature or inversion failed to meet its tolerance."""
