"""Topology-based relationship discovery across spatio-temporal datasets."""

__version__ = "0.1.0"

from .resolution import (  # noqa: F401
    DEFAULT_DAG,
    Resolution,
    ResolutionDag,
    SpatialRes,
    TemporalRes,
    compatible_resolutions,
)
from .stgraph import (  # noqa: F401
    Provenance,
    ScalarFunction,
    SpatialDomain,
    STGraph,
    TemporalDomain,
    build_graph,
    classify_vertex,
    total_order,
)
from .mergetree import MergeTree, PersistencePair, join_tree, split_tree  # noqa: F401
