"""Constructive toolkit for Steiner systems and clique decompositions.

The package builds, at desk scale, each ingredient of the absorption
pipeline for decomposing r-uniform hosts into q-cliques: local integral
decoders, the clique-exchange gadget, random greedy embedding processes,
the clique removal process, regularity boosting, and the absorber.
"""

from .core import (
    IntVector,
    Params,
    RGraph,
    boundary,
    bounded_check,
    canon,
    cliques_containing,
    cliques_of,
    link,
    typicality_check,
    verify_decomposition,
)
from .util import ConfigError, ParseError, SteinerError, derive_rng

__version__ = "0.1.0"
