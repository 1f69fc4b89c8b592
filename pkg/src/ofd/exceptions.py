"""Exception hierarchy shared by all modules."""


class OFDError(Exception):
    """Base class for every error raised by this package."""


# solvers
class MalformedProblem(OFDError, ValueError):
    pass


class CycleLimit(OFDError, RuntimeError):
    """The simplex iteration budget ran out; indicates an internal failure."""


class NonFiniteEntries(OFDError, ValueError):
    pass


# shapes and inputs
class DimensionMismatch(OFDError, ValueError):
    pass


class EmptyFleet(OFDError, ValueError):
    pass


class KindMismatch(OFDError, ValueError):
    pass


class ParseError(OFDError, ValueError):
    pass


class LengthMismatch(OFDError, ValueError):
    pass


class InfeasibleScenario(OFDError, RuntimeError):
    pass


class BudgetExhausted(OFDError, RuntimeError):
    pass


# learning
class SingleClassDataset(OFDError, ValueError):
    pass


class Diverged(OFDError, RuntimeError):
    pass


class DegenerateEllipsoid(OFDError, ValueError):
    pass


# geometry
class InvalidDelta(OFDError, ValueError):
    pass


class RowExplosion(OFDError, RuntimeError):
    pass


class UnboundedPolytope(OFDError, ValueError):
    pass


class EmptyPolytope(OFDError, ValueError):
    pass


# design
class NoFeasiblePoints(OFDError, ValueError):
    pass


class RowInfeasible(OFDError, RuntimeError):
    pass


class DegenerateBeta(OFDError, RuntimeError):
    pass


class NonpositiveBeta(OFDError, ValueError):
    pass


class InvalidCount(OFDError, ValueError):
    pass


class ConfigError(OFDError, ValueError):
    """Invalid or incomplete pipeline configuration."""
