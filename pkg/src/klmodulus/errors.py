"""Exception hierarchy.

Every failure the library can signal derives from :class:`KLModulusError`.
The CLI maps the subclasses onto stable exit codes (see ``cli.EXIT_CODES``).
"""


class KLModulusError(Exception):
    """Base class for all library errors."""


class ConfigurationError(KLModulusError, ValueError):
    pass


class BadParamsError(ConfigurationError):
    pass


class UnknownNameError(ConfigurationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class LscViolationError(ConfigurationError):
    pass


class NotRepresentableError(KLModulusError):
    pass


class OutsideDomainError(KLModulusError, ValueError):
    pass


# numerics
class DivergentIntegralError(KLModulusError):
    pass


class NotMonotoneError(KLModulusError):
    pass


class OutOfRangeError(KLModulusError, ValueError):
    pass


class EmptyDomainError(KLModulusError):
    pass


class AtOriginError(KLModulusError, ValueError):
    pass


# modulus
class HInfiniteError(KLModulusError):
    """The supremum defining h(s) is unbounded for the chosen (U, eta)."""

    def __init__(self, message, s=None, witness=None):
        super().__init__(message)
        self.s = s
        self.witness = witness


class NotConvexError(KLModulusError):
    pass


class NotStationaryError(KLModulusError):
    pass


class NonConstantOnSetError(KLModulusError):
    pass


class NoCoverError(KLModulusError):
    pass


# desingularizers
class EmptyLevelSetError(KLModulusError):
    pass


class UInfiniteError(KLModulusError):
    pass


class UNotIntegrableError(KLModulusError):
    pass


class StationaryPointError(KLModulusError):
    pass


# palm
class ProxFailureError(KLModulusError):
    pass


class DescentViolationError(KLModulusError):
    def __init__(self, message, k=None, slack=None):
        super().__init__(message)
        self.k = k
        self.slack = slack


class BandNotEnteredError(KLModulusError):
    pass


class NotSettledError(KLModulusError):
    pass


# catalog
class QuadratureBudgetError(KLModulusError):
    pass
