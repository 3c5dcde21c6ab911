"""Exception hierarchy shared by all modules."""


class OptRegError(Exception):
    """Base class for library errors."""


class SingularMatrix(OptRegError):
    pass


class NoConvergence(OptRegError):
    pass


class BoundViolation(OptRegError):
    def __init__(self, y, hessian, bounds):
        self.y = y
        self.hessian = hessian
        self.bounds = bounds
        super().__init__(
            f"sampled Hessian {hessian:.6g} at y={y:.6g} outside [{bounds[0]:.6g}, {bounds[1]:.6g}]"
        )


class BracketFailure(OptRegError):
    pass


class NoRelativeDegree(OptRegError):
    pass


class DegenerateTransform(OptRegError):
    pass


class Unsolvable(OptRegError):
    pass


class Uncontrollable(OptRegError):
    pass


class Unobservable(OptRegError):
    pass


class AssignmentFailure(OptRegError):
    pass


class NotMinimumPhase(OptRegError):
    pass


class ZeroHighFrequencyGain(OptRegError):
    pass


class NonFiniteState(OptRegError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"closed-loop state became non-finite at t={t:.6g}")


class ScenarioError(OptRegError):
    """Malformed or inconsistent scenario document."""
