"""Edge-aware hard-clustering graph pooling on attributed graphs.

The toolkit bundles the pooling operator (edge scoring/gating, greedy star
clustering, edge-conditioned aggregation), an edge-conditioned convolution
network trained with a built-in reverse-mode autodiff engine, a planted-signal
synthetic data generator, cross-validation tooling, and a CLI.
"""

__version__ = "0.1.0"

from .autodiff import Adam, BatchNorm, Tape, Tensor, backward, grad_check
from .conv import EccLayer
from .errors import EhcPoolError
from .estimator import EhcPoolClassifier, SlidingWindowConnectivity
from .graphs import (
    AttributedGraph,
    GraphArrays,
    GraphDataset,
    NeighborIndex,
    build_neighbor_index,
    load_dataset,
    save_dataset,
    validate_graph,
)
from .network import Batch, ModelConfig, Network, build_network
from .pooling import (
    Cluster,
    ClusterAssignment,
    PoolConfig,
    PooledGraph,
    PoolParams,
    ScoreState,
    assign_clusters,
    edge_scores,
    gate_edges,
    node_scores,
    pool_forward,
    readout_fully_connected,
)
from .synth import SynthSpec, WindowConfig, gen_dataset, gen_time_series, gen_toy_graph
from .training import (
    CvSummary,
    Metrics,
    cross_validate,
    evaluate,
    sensitivity_sweep,
    train_network,
)

__all__ = [
    "Adam",
    "AttributedGraph",
    "Batch",
    "BatchNorm",
    "Cluster",
    "ClusterAssignment",
    "CvSummary",
    "EccLayer",
    "EhcPoolClassifier",
    "EhcPoolError",
    "GraphArrays",
    "GraphDataset",
    "Metrics",
    "ModelConfig",
    "NeighborIndex",
    "Network",
    "PoolConfig",
    "PoolParams",
    "PooledGraph",
    "ScoreState",
    "SlidingWindowConnectivity",
    "SynthSpec",
    "Tape",
    "Tensor",
    "WindowConfig",
    "assign_clusters",
    "backward",
    "build_network",
    "build_neighbor_index",
    "cross_validate",
    "edge_scores",
    "evaluate",
    "gate_edges",
    "gen_dataset",
    "gen_time_series",
    "gen_toy_graph",
    "grad_check",
    "load_dataset",
    "node_scores",
    "pool_forward",
    "readout_fully_connected",
    "save_dataset",
    "sensitivity_sweep",
    "train_network",
    "validate_graph",
]
