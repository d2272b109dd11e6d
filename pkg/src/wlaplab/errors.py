"""Exception hierarchy shared by every module."""


class WlapError(Exception):
    """Base class for all package errors."""


class UnknownKind(WlapError):
    pass


class ParameterOutOfRange(WlapError):
    pass


class PointOutsideChart(WlapError):
    pass


class TruncationInsufficient(WlapError):
    pass


class IncompatibleBasis(WlapError):
    pass


class GramIllConditioned(WlapError):
    pass


class InsufficientSmoothness(WlapError):
    pass


class GaussBonnetViolated(WlapError):
    pass


class PoissonSolveFailed(WlapError):
    pass


class ConvergenceFailure(WlapError):
    pass


class GramNotPD(WlapError):
    pass


class AllZero(WlapError):
    pass


class NotFirstCluster(WlapError):
    pass


class SymbolicDerivativeUnavailable(WlapError):
    pass


class NonIntegrable(WlapError):
    pass


class NotASoliton(WlapError):
    pass


class NormalizationViolated(WlapError):
    pass


class NotOneEigenfunction(WlapError):
    pass


class PotentialUnavailable(WlapError):
    pass


class MalformedFile(WlapError):
    pass


class DegeneratePolytope(WlapError):
    pass


class NoSpectrumData(WlapError):
    pass


class ConfigInvalid(WlapError):
    pass


class OperatorTooLarge(WlapError):
    """Dense materialization of a tensor-structured operator was refused."""
