"""Exact decay rate of consensus over random networks, with simulation and power allocation."""

from .errors import CapacityError, InsufficientDataError, InvalidInputError
from .graph import Graph, fiedler_value, is_connected, path_fiedler_constant, read_graph
from .mincut import CutResult, exhaustive_mincut, stoer_wagner
from .models import (
    DAdjacentModel,
    ExplicitModel,
    GossipModel,
    LinkFailureModel,
    StochasticMatrix,
    load_model,
    toy_model,
)
from .disconnected import (
    Collection,
    RateResult,
    enumerate_maximal_collections,
    p_max_brute,
)
from .rate import gossip_rate, link_failure_rate, regular_gossip_rate, regular_link_failure_rate

__version__ = "0.1.0"
