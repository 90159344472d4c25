"""Exception hierarchy shared by all modules."""


class RicciOptError(Exception):
    """Base class for every error raised by ricciopt."""


class InvalidInputError(RicciOptError, ValueError):
    """Malformed graph, metric, config or measure."""


class DegenerateVertexError(RicciOptError):
    """Operation needs a vertex with at least one neighbour."""

    def __init__(self, vertex, msg=None):
        self.vertex = vertex
        super().__init__(msg or f"vertex {vertex} is isolated")


class DegenerateEdgeError(RicciOptError):
    """Edge whose endpoints are at zero distance."""

    def __init__(self, edge, msg=None):
        self.edge = edge
        super().__init__(msg or f"edge {edge} has zero length")


class TransportConvergenceError(RicciOptError):
    """Entropic solver did not reach the marginal tolerance.

    ``violation`` is the final L1 marginal violation; retrying with a larger
    epsilon usually helps.
    """

    def __init__(self, violation, iterations, edge=None):
        self.violation = float(violation)
        self.iterations = int(iterations)
        self.edge = edge
        where = f" on edge {edge}" if edge is not None else ""
        super().__init__(
            f"Sinkhorn did not converge{where}: marginal violation {violation:.3e} after {iterations} iterations"
        )


class SupportSizeError(RicciOptError):
    """Exact transport requested on a support larger than the oracle limit."""


class FlowBlowupError(RicciOptError):
    """Flow right-hand side became non-finite; surgery is required."""

    def __init__(self, edge, step=None):
        self.edge = edge
        self.step = step
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite flow on edge {edge}{at}")


class DivergenceError(RicciOptError):
    """Optimizer produced a non-finite state twice in a row."""

    def __init__(self, msg, state=None):
        self.state = state
        super().__init__(msg)


class UndefinedRateError(RicciOptError):
    """Simplification rate with an empty initial topology."""


class BoundaryError(RicciOptError):
    """Region is empty or covers the whole vertex set."""
