"""Exception hierarchy shared by the geometry, feature and I/O layers."""


class OpfrError(Exception):
    """Base class for all library errors."""


class GeometryError(OpfrError, ValueError):
    """Invalid geometric input (empty cloud, bad k, non-finite values)."""


class DegeneratePair(GeometryError):
    """Two points of a pair coincide, so no direction is defined."""


class DegenerateFrame(GeometryError):
    """Frame axes are (anti)parallel; the cross product vanishes."""


class InsufficientNeighbors(GeometryError):
    """Fewer neighbors than a construction needs."""


class NormalUndefined(GeometryError):
    """PCA neighborhood is rank deficient (e.g. collinear points)."""


class ParseError(OpfrError, ValueError):
    """Malformed point cloud or parameter file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
