"""Exception hierarchy shared by all flatlas modules."""


class FlatlasError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


# symexpr
class ParseError(FlatlasError):
    pass


class UnboundVariable(FlatlasError):
    pass


class DomainError(FlatlasError):
    """Evaluation hit a pole or a negative square root."""


class TruncationOverflow(FlatlasError):
    pass


class SamplingFailure(FlatlasError):
    pass


# orepoly
class UnsupportedEntry(FlatlasError):
    pass


class EliminationStall(FlatlasError):
    pass


class NotUnimodular(FlatlasError):
    pass


class NotCompletable(FlatlasError):
    pass


# implicit_system
class NoExplicitForm(FlatlasError):
    pass


class NotOnZeroSet(FlatlasError):
    pass


# atlas
class OutOfDomain(FlatlasError):
    pass


class NoOverlapSamples(FlatlasError):
    pass


class NoChartAvailable(FlatlasError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


# planner
class DegenerateWaypoints(FlatlasError):
    pass


class SingularParametrization(FlatlasError):
    pass


class InfeasibleProfile(FlatlasError):
    pass
