"""Exception types shared across the toolkit."""


class BubblescopeError(Exception):
    """Base class for all toolkit errors."""


class ResolutionError(BubblescopeError):
    """A requested evaluation is below what the mesh / grid can resolve."""


class TubeViolationError(BubblescopeError):
    """A point lies outside the retraction tube of the target manifold.

    This is the singular-set signal: extension values that raise it are
    exactly the points collected by the singular-set detector.
    """

    def __init__(self, point, distance, tube_radius):
        self.point = point
        self.distance = float(distance)
        self.tube_radius = float(tube_radius)
        super().__init__(
            f"point at distance {self.distance:.6g} from the target, "
            f"outside the tube of radius {self.tube_radius:.6g}"
        )


class CoarseLatticeError(BubblescopeError):
    """The sampling lattice is too coarse for the covering argument."""


class DecompositionError(BubblescopeError):
    """The bubble decomposition pipeline failed (with the offending point)."""

    def __init__(self, message, point=None):
        self.point = point
        super().__init__(message)


class ConfigError(BubblescopeError):
    """Invalid experiment configuration."""
