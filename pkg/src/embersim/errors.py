"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EngineError):
    """Malformed input file; message carries path and line context."""

    def __init__(self, path, message, line=None):
        loc = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{loc}: {message}")
        self.path = str(path)
        self.line = line


class DegenerateTet(EngineError):
    pass


class DegenerateTriangle(EngineError):
    pass


class DegenerateEdge(EngineError):
    pass


class UnboundVertex(EngineError):
    """A collision vertex lies outside every embedding tet beyond tolerance."""

    def __init__(self, vertex_index, distance=None):
        detail = f" (outside by {distance:.3e} m)" if distance is not None else ""
        super().__init__(f"collision vertex {vertex_index} not contained in any embedding tet{detail}")
        self.vertex_index = vertex_index
        self.distance = distance


class NonpositiveDistance(EngineError):
    """A contact pair reached distance <= 0; the feasible-region contract is broken."""


class InitialIntersection(EngineError):
    """Scene is intersecting at t = 0."""

    def __init__(self, pair):
        super().__init__(f"initial configuration intersects: triangle pair {pair}")
        self.pair = pair


class MissingSample(EngineError):
    """Reference trajectory lacks a sample at a required time."""


class LinearSolveFailure(EngineError):
    """The SPD Newton solve failed; indicates an assembly bug."""
