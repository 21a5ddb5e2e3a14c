"""Nibble matchings and edge colourings of linear hypergraphs."""

from .errors import HypernibbleError
from .hypercore import Graph, Hypergraph, Matching, PartialEdgeColouring, EdgeOrdering, verify

__version__ = "0.1.0"

__all__ = ["Hypergraph", "Graph", "Matching", "PartialEdgeColouring", "EdgeOrdering", "verify", "HypernibbleError", "__version__"]
