"""Exception types shared across the package."""


class PWAError(Exception):
    """Base class for all errors raised by pwabarrier."""


class UnboundedPolytope(PWAError):
    pass


class DomainMismatch(PWAError):
    pass


class NotSimplicial(PWAError):
    pass


class PartitionMismatch(PWAError):
    """A partition is not a refinement of the one it is paired with."""


class OutOfDomain(PWAError):
    pass


class DegenerateArrangement(PWAError):
    pass


class DegenerateSimplex(PWAError):
    pass


class NumericalFailure(PWAError):
    pass


class SolverFailure(PWAError):
    """The LP backend returned something other than an optimum."""


class NoCertifiedMember(PWAError):
    def __init__(self, msg, results=()):
        super().__init__(msg)
        self.results = list(results)
