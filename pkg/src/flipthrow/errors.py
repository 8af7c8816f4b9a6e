"""Exception types shared across the stack."""


class FlipthrowError(Exception):
    """Base class for package errors."""


class NotSkewError(FlipthrowError):
    """Matrix handed to vee() is not skew-symmetric within tolerance."""


class DegenerateThrustError(FlipthrowError):
    """Commanded force vector too small to define a thrust direction."""


class SingularYawError(FlipthrowError):
    """Yaw heading vector parallel to the thrust direction."""


class ProbeNotAttachedError(FlipthrowError):
    """Release requested but no probe on the link."""


class UnreachableRangeError(FlipthrowError):
    """No (V, theta) inside the bounds attains the requested range."""


class NoFeasibleHistoryError(FlipthrowError):
    """Fallback requested before any feasible solution exists."""


class ConfigError(FlipthrowError):
    """Configuration file violates the schema or an invariant."""


class SimDivergedError(FlipthrowError):
    """A state component went NaN or unbounded during simulation."""

    def __init__(self, tick: int, detail: str = ""):
        self.tick = tick
        msg = f"state diverged at tick {tick}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
