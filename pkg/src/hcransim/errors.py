# Exception hierarchy shared by all modules.


class HcranError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(HcranError, ValueError):
    """Invalid configuration or experiment specification."""


class EmptyNullSpace(HcranError):
    """The stacked channel rows span the full space; no nulling direction exists."""


class DegenerateChannel(HcranError):
    """A channel draw has (numerically) zero useful signal; resample it."""


class InfiniteSinr(HcranError):
    """SINR denominator is zero with the noise term dropped; caller must handle."""


class DomainError(HcranError, ValueError):
    """Argument outside the mathematical domain of a special function."""


class QuadratureFailure(HcranError):
    """Numerical integration did not reach the requested error bound."""


class Infeasible(HcranError):
    """The power-allocation problem has no feasible point."""


class InfeasibleInner(Infeasible):
    """An inner allocation step cannot host nonzero RRH power for some MUE."""


class NoConvergence(HcranError):
    """Iterative solver exhausted its iteration budget."""
