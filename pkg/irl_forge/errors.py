"""
errors.py

Exception hierarchy shared by every irl_forge module.

Three families are distinguished so that callers (and the CLI exit-code map)
can tell bad input from numerical trouble from a negative test verdict:

    InputError    malformed or inconsistent inputs
    NumericError  a solver or iteration failed to produce a usable answer
    VerdictError  the data failed the test; the exception carries the evidence
"""


class IrlForgeError(Exception):
    """Base class for all irl_forge errors."""


# --- input problems ---------------------------------------------------------

class InputError(IrlForgeError, ValueError):
    """Inputs violate a documented precondition."""


class DimensionMismatch(InputError):
    pass


class NonPositiveProbe(InputError):
    pass


class BudgetNotActive(InputError):
    pass


class CalibrationMismatch(InputError):
    pass


class CertificateMismatch(InputError):
    pass


class CertificateInvalid(InputError):
    pass


class DegenerateMenu(InputError):
    pass


class AllActionsUnused(InputError):
    pass


class MissingDensity(InputError):
    pass


class EmptyCloud(InputError):
    pass


class TooLargeForExact(InputError):
    pass


# --- numerical failures -----------------------------------------------------

class NumericError(IrlForgeError, RuntimeError):
    """A numerical routine failed."""


class NoConvergence(NumericError):
    pass


class NonPDInnovation(NumericError):
    pass


class SingularInnovation(NumericError):
    pass


class NodeBudgetExceeded(NumericError):
    pass


class NotFeasibleAtHi(NumericError):
    pass


class NonMonotoneDetected(NumericError):
    pass


class OptimizerStall(NumericError):
    pass


class NonFinite(NumericError):
    pass


class NonFiniteIterate(NumericError):
    pass


class ZeroLikelihood(NumericError):
    pass


class NonUnichainDetected(NumericError):
    pass


class InfeasibleMask(NumericError):
    pass


class WitnessOutOfBounds(NumericError):
    pass


# --- negative verdicts ------------------------------------------------------

class VerdictError(IrlForgeError):
    """
    The data failed a rationality test.

    Parameters
    ----------
    message : str
        Human readable summary.
    evidence : object, optional
        Whatever proves the verdict (a GarpReport, a slack vector, ...).
    """

    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence


class NotRationalizable(VerdictError):
    pass


class NotCoordinated(VerdictError):
    pass


class NotNashRational(VerdictError):
    pass


class NotUMRI(VerdictError):
    pass


class NotOptimal(VerdictError):
    pass


class GeneratorNotViolating(VerdictError):
    pass
