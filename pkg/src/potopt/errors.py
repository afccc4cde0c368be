"""Exception hierarchy shared by every potopt module."""


class PotoptError(Exception):
    pass


class InvalidDomain(PotoptError, ValueError):
    pass


class GridMismatch(PotoptError, ValueError):
    pass


class NegativePotential(PotoptError, ValueError):
    pass


class SingularSystem(PotoptError, ArithmeticError):
    pass


class NoConvergence(PotoptError, RuntimeError):
    """Raised when an iterative solver exhausts its budget.

    The best iterate found so far is attached as ``result`` so callers can
    still inspect or report it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ZeroMinimizer(PotoptError, ValueError):
    pass


class DegenerateContactSet(PotoptError, ValueError):
    pass


class SignViolation(PotoptError, ValueError):
    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class BracketingFailure(PotoptError, RuntimeError):
    pass


class AllBelowThreshold(PotoptError, ValueError):
    pass


class UnderResolvedGrid(PotoptError, ValueError):
    pass


class OverlappingSupports(PotoptError, ValueError):
    pass


class ConfigError(PotoptError, ValueError):
    pass
