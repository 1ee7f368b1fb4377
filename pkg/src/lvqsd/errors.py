"""Exception hierarchy.

Validation problems (bad coefficients, bad inputs, bad configs) derive from
:class:`ValidationError`; failures of a numerical procedure derive from
:class:`NumericalError`.  The CLI maps the two families to exit codes 1 and 2.
"""


class LVQSDError(Exception):
    pass


class ValidationError(LVQSDError, ValueError):
    pass


class NumericalError(LVQSDError, RuntimeError):
    pass


# -- parameter validation ---------------------------------------------------

class PositivityViolation(ValidationError):
    pass


class BalanceViolation(ValidationError):
    pass


class SignMismatch(ValidationError):
    pass


class StrongCooperation(ValidationError):
    pass


class NegativeInput(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class InvalidStart(ValidationError):
    pass


class NonPositiveRate(ValidationError):
    pass


class ConfigParseError(ValidationError):
    pass


class UnknownSubcommand(ValidationError):
    pass


# -- numerical failures -----------------------------------------------------

class BlowUp(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class TruncationUnstable(NumericalError):
    pass


class StepUnstable(NumericalError):
    pass


class Collapse(NumericalError):
    pass


class InsufficientTail(NumericalError):
    pass


class CensoredExit(NumericalError):
    pass


class CrossCheckFailure(NumericalError):
    pass


class SamplingBudgetExceeded(NumericalError):
    pass


class RateOrderViolation(NumericalError):
    pass


class NegativeWeight(NumericalError):
    pass
