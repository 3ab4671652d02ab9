"""MCMC over decomposable graphs with junction trees as the chain state."""

__version__ = "0.1.0"

from .graph_core import (  # noqa: E402
    Graph,
    NotDecomposable,
    cliques_of,
    induced_subgraph,
    is_decomposable,
    maximum_cardinality_search,
)
from .junction_tree import (  # noqa: E402
    JunctionTree,
    build_junction_tree,
    count_junction_trees,
    graph_of,
    randomize_junction_tree,
    validate,
)
from .moves import MoveProposal, propose_connect, propose_disconnect  # noqa: E402
from .sampler import ChainOptions, TargetDistribution, anneal, mh_step, run_chain  # noqa: E402

__all__ = [
    "ChainOptions", "Graph", "JunctionTree", "MoveProposal", "NotDecomposable",
    "TargetDistribution", "anneal", "build_junction_tree", "cliques_of",
    "count_junction_trees", "graph_of", "induced_subgraph", "is_decomposable",
    "maximum_cardinality_search", "mh_step", "propose_connect", "propose_disconnect",
    "randomize_junction_tree", "run_chain", "validate",
]
