"""Exception types raised across the package."""


class PPADMMError(Exception):
    """Base class for all package errors."""


# graph
class InvalidEdge(PPADMMError, ValueError):
    pass


class DisconnectedGraph(PPADMMError, ValueError):
    pass


class NotSymmetric(PPADMMError, ValueError):
    pass


class NotPSD(PPADMMError, ValueError):
    pass


class ZeroMatrix(PPADMMError, ValueError):
    pass


# model / solver
class NonFinite(PPADMMError, ValueError):
    pass


class NonFiniteObjective(PPADMMError, ArithmeticError):
    pass


class DimensionMismatch(PPADMMError, ValueError):
    pass


class SolverDidNotConverge(PPADMMError, RuntimeError):
    pass


# engine / privacy
class ScheduleInvalid(PPADMMError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:3])
        more = "" if len(self.violations) <= 3 else f" (+{len(self.violations) - 3} more)"
        super().__init__(f"penalty schedule invalid: {head}{more}")


class ThetaConditionViolated(PPADMMError, ValueError):
    def __init__(self, nodes):
        self.nodes = list(nodes)
        super().__init__(f"theta condition 2*c1 < (B_i/C)(rho/N + 2*theta*V_i) fails at nodes {self.nodes}")


class InvalidScale(PPADMMError, ValueError):
    pass


class IsolatedNode(PPADMMError, ValueError):
    pass


# analysis
class NotInColumnSpace(PPADMMError, ValueError):
    pass


class NotStronglyConvex(PPADMMError, ValueError):
    pass


class UnknownSchedule(PPADMMError, ValueError):
    pass


# data / harness
class EmptyAfterFiltering(PPADMMError, ValueError):
    pass


class UnknownLabelValue(PPADMMError, ValueError):
    pass


class TooManyNodes(PPADMMError, ValueError):
    pass


class IterationOutOfRange(PPADMMError, IndexError):
    pass


class LengthMismatch(PPADMMError, ValueError):
    pass


class ConfigError(PPADMMError, ValueError):
    pass
