"""Exception types raised across the package."""


class AbsminError(Exception):
    """Base class for all package errors."""


class DomainError(AbsminError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConfigError(AbsminError, ValueError):
    """Invalid or empty configuration (sample sets, grids, scenes)."""


class CoercivityError(AbsminError, ArithmeticError):
    """A sublevel set or a Legendre search escaped the configured bounds."""


class TableRangeError(AbsminError, ValueError):
    """A tabulated Hamiltonian was queried outside its covector table."""


class ReachabilityError(AbsminError, ValueError):
    """A requested node cannot be reached from the source."""


class NotApplicableError(AbsminError, ValueError):
    """A closed-form formula was requested where it does not hold."""


class PreconditionError(AbsminError, ValueError):
    """Inputs violate a stated precondition of an operation."""


class DataIncompatibilityError(AbsminError, ValueError):
    """Boundary data too steep for every level in the level table."""
