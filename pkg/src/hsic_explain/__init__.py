"""Model-agnostic explanation of black-box graph classifiers.

Perturb a graph, watch a black-box classifier's output move, and solve a
non-negative HSIC lasso over per-unit kernels to score which nodes, edges,
or (node, time) pairs the prediction depends on.
"""

from .graphs import (
    Graph,
    GraphSchemaError,
    GraphSeries,
    UnitId,
    parse_graph,
    parse_series,
)

__all__ = [
    "Graph",
    "GraphSeries",
    "GraphSchemaError",
    "UnitId",
    "parse_graph",
    "parse_series",
]
