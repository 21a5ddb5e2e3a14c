"""Exception types shared across the package."""


class HypernibbleError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(HypernibbleError):
    def __init__(self, kind: str, message: str = "", line: int | None = None):
        self.kind = kind
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{kind}{where}: {message}" if message else f"{kind}{where}")


class InvalidHypergraph(HypernibbleError):
    pass


class HostMismatch(HypernibbleError):
    pass


class DegenerateVertex(HypernibbleError):
    pass


class DuplicateDualEdge(HypernibbleError):
    pass


class Overflow(HypernibbleError):
    pass


class NotPrime(HypernibbleError):
    pass


class InfeasibleOrder(HypernibbleError):
    pass


class InvalidLatinSquare(HypernibbleError):
    pass


class NotTriangleFree(HypernibbleError):
    def __init__(self, triangle):
        self.triangle = tuple(triangle)
        super().__init__(f"graph contains the triangle {self.triangle}")


class ListExhausted(HypernibbleError):
    def __init__(self, edge: int, tier: str | None = None):
        self.edge = edge
        self.tier = tier
        tag = f" in tier {tier}" if tier else ""
        super().__init__(f"no available colour for edge {edge}{tag}")


class ReservationFailed(HypernibbleError):
    pass


class TooLarge(HypernibbleError):
    pass


class ReservoirFailed(HypernibbleError):
    def __init__(self, bound: str, diagnostics=None):
        self.bound = bound
        self.diagnostics = diagnostics
        super().__init__(f"reservoir sampling failed: {bound}")


class AbsorptionFailed(HypernibbleError):
    def __init__(self, stage: str, slice_index=None, colour=None):
        self.stage = stage
        self.slice_index = slice_index
        self.colour = colour
        super().__init__(f"absorption failed ({stage}) at slice {slice_index}, colour {colour}")


class NoPerfectMatching(HypernibbleError):
    pass


class DegreeBoundViolated(HypernibbleError):
    pass


class PaletteExceeded(HypernibbleError):
    def __init__(self, total: int, bound: int, colouring=None, report=None):
        self.total = total
        self.bound = bound
        self.colouring = colouring
        self.report = report
        super().__init__(f"{total} colours used, budget {bound}")


class PostconditionFailed(HypernibbleError):
    pass
