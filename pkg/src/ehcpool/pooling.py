"""Edge-aware hard-clustering graph pooling.

Pipeline: project edge features onto a learnable direction to score every
edge, gate the edge features with the sigmoid of their scores, score nodes by
a weighted feature projection plus the sum of incident edge scores, then
greedily carve the graph into up to gamma disjoint star-shaped clusters (one
core plus its best-scoring unassigned neighbors). Each cluster is finally
collapsed into one basis vector; missing clusters are zero rows so the pooled
output always has shape (gamma, d).

The cluster selection itself is discrete: indices are constants during the
backward pass, while gradients flow through the edge gates and the
aggregation weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    EPS_NORM,
    Tensor,
    add,
    clamp_min,
    elementwise_mul,
    gather_rows,
    l2_norm,
    matmul,
    reciprocal,
    reshape,
    rows_matvec,
    scalar_mul,
    scatter_add_rows,
    sigmoid,
    uniform_init,
)
from .errors import ConfigError, EmptyGraph
from .graphs import GraphArrays, NeighborIndex

SCORE_MODES = ("edge_to_node", "node_only", "edge_only")
READOUT_MODES = ("ne_aggregation", "feature_selection", "fully_connected")


@dataclass(frozen=True)
class PoolConfig:
    """Pooling hyperparameters.

    gamma:    number of clusters to retain (pooled output rows)
    beta_cap: cluster size cap, the realized ceil(beta * n) as an integer
    delta:    node-ignorance coefficient in [0, 1]; weights the node term
              of the combined score by (1 - delta)
    """

    gamma: int
    beta_cap: int
    delta: float = 0.0
    score_mode: str = "edge_to_node"
    readout_mode: str = "ne_aggregation"

    def __post_init__(self):
        if self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.beta_cap < 1:
            raise ConfigError(f"beta_cap must be >= 1, got {self.beta_cap}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")
        if self.score_mode not in SCORE_MODES:
            raise ConfigError(f"score_mode must be one of {SCORE_MODES}")
        if self.readout_mode not in READOUT_MODES:
            raise ConfigError(f"readout_mode must be one of {READOUT_MODES}")


class PoolParams:
    """Learnable pooling parameters: two projection vectors and the edge-to-matrix map."""

    def __init__(self, node_dim: int, edge_dim: int, rng: np.random.Generator,
                 name: str = "pool"):
        self.node_dim = node_dim
        self.edge_dim = edge_dim
        self.p1 = uniform_init(rng, (edge_dim,), edge_dim, f"{name}.p1")
        self.p2 = uniform_init(rng, (node_dim,), node_dim, f"{name}.p2")
        self.w_c = uniform_init(rng, (edge_dim, node_dim * node_dim), edge_dim,
                                f"{name}.w_c")
        self.b_c = uniform_init(rng, (node_dim,), edge_dim, f"{name}.b_c")

    def parameters(self) -> list[Tensor]:
        return [self.p1, self.p2, self.w_c, self.b_c]


@dataclass(frozen=True)
class Cluster:
    """One star cluster: a core node, its retained neighbors, and the star edges."""

    core: int
    regulars: tuple[int, ...]
    edges: tuple[int, ...]  # edge rows; every retained edge touches the core

    def members(self) -> tuple[int, ...]:
        return (self.core,) + self.regulars

    @property
    def size(self) -> int:
        return 1 + len(self.regulars)


@dataclass(frozen=True)
class ClusterAssignment:
    """Ordered, pairwise-disjoint clusters produced by the greedy selection."""

    clusters: tuple[Cluster, ...]

    def __len__(self) -> int:
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def assigned_nodes(self) -> set[int]:
        out: set[int] = set()
        for c in self.clusters:
            out.update(c.members())
        return out


@dataclass
class ScoreState:
    """Snapshot of the scoring stage plus the final assignment mask."""

    phi_edges: np.ndarray
    phi_nodes: np.ndarray
    gated_edges: np.ndarray
    assigned: np.ndarray


@dataclass
class PooledGraph:
    """Fixed-shape pooled output: one basis row per cluster, zero rows beyond K."""

    basis: Tensor  # (gamma, d)
    assignment: ClusterAssignment


def _inv_norm(p: Tensor) -> Tensor:
    return reciprocal(clamp_min(l2_norm(p), EPS_NORM))


def edge_scores(edge_feats: Tensor, p1: Tensor) -> Tensor:
    """Score each edge by projecting its feature row onto p1 / ||p1||."""
    return elementwise_mul(matmul(edge_feats, p1), _inv_norm(p1))


def gate_edges(edge_feats: Tensor, phi_edges: Tensor) -> Tensor:
    """Scale every edge feature row by the sigmoid of its score."""
    m = edge_feats.data.shape[0]
    gate = reshape(sigmoid(phi_edges), (m, 1))
    return elementwise_mul(edge_feats, gate)


def incident_score_sums(phi_edges: Tensor, inc_targets: np.ndarray,
                        inc_edges: np.ndarray, num_nodes: int) -> Tensor:
    """Per-node sum of incident edge scores; each stored edge counts once per endpoint."""
    m = phi_edges.data.shape[0]
    vals = gather_rows(reshape(phi_edges, (m, 1)), inc_edges)
    return reshape(scatter_add_rows(vals, inc_targets, num_nodes), (num_nodes,))


def node_scores(x: Tensor, p2: Tensor, delta: float, phi_edges: Tensor,
                arrays: GraphArrays, score_mode: str = "edge_to_node") -> Tensor:
    """Combined node score: (1 - delta) * projection plus incident edge score sum.

    node_only keeps just the raw projection, edge_only just the incident sum.
    """
    if score_mode == "edge_only":
        return incident_score_sums(phi_edges, arrays.inc_targets, arrays.inc_edges,
                                   arrays.num_nodes)
    proj = elementwise_mul(matmul(x, p2), _inv_norm(p2))
    if score_mode == "node_only":
        return proj
    inc = incident_score_sums(phi_edges, arrays.inc_targets, arrays.inc_edges,
                              arrays.num_nodes)
    return add(scalar_mul(proj, 1.0 - delta), inc)


def assign_clusters(phi_nodes: np.ndarray, phi_edges: np.ndarray,
                    neighbors: NeighborIndex, gamma: int,
                    beta_cap: int) -> ClusterAssignment:
    """Greedy hard clustering over node/edge scores.

    Repeats up to gamma times: pick the unassigned node with the highest score
    (ties to the lowest index) as a core, attach up to beta_cap - 1 of its
    still-unassigned neighbors along the highest-scoring incident edges (ties
    to the lowest edge row), and mark all of them assigned. Stops early once
    every node is assigned, so the result is always a partial hard partition.
    """
    n = len(phi_nodes)
    if n == 0:
        raise EmptyGraph("clustering needs at least one node")
    phi_edges = np.asarray(phi_edges, dtype=np.float64)
    assigned = np.zeros(n, dtype=bool)
    work = np.array(phi_nodes, dtype=np.float64)  # assigned entries drop to -inf
    remaining = n
    clusters: list[Cluster] = []
    for _ in range(gamma):
        if remaining == 0:
            break
        core = int(np.argmax(work))  # first occurrence = lowest index on ties
        assigned[core] = True
        work[core] = -np.inf
        remaining -= 1
        nbr_j, nbr_e = neighbors.arrays(core)
        open_mask = ~assigned[nbr_j]
        cand_j = nbr_j[open_mask]
        if cand_j.size:
            cand_e = nbr_e[open_mask]
            # primary key: score descending; secondary: edge row ascending
            order = np.lexsort((cand_e, -phi_edges[cand_e]))[: beta_cap - 1]
            regulars = tuple(int(j) for j in cand_j[order])
            edges = tuple(int(e) for e in cand_e[order])
            assigned[list(regulars)] = True
            work[list(regulars)] = -np.inf
            remaining -= len(regulars)
        else:
            regulars = ()
            edges = ()
        clusters.append(Cluster(core, regulars, edges))
    return ClusterAssignment(tuple(clusters))


def batched_readout(entries, x: Tensor, gated_edges: Tensor,
                    params: PoolParams | None, gamma: int, num_slots: int,
                    readout_mode: str) -> Tensor:
    """Build pooled basis rows for many graphs in one set of tensor ops.

    entries: (assignment, node_offset, edge_offset, slot_offset) per graph,
    with offsets into the concatenated node/edge tensors and the output rows.
    """
    d = x.data.shape[1]
    core_nodes: list[int] = []
    core_slots: list[int] = []
    edge_rows: list[int] = []
    reg_nodes: list[int] = []
    msg_slots: list[int] = []
    member_nodes: list[int] = []
    member_slots: list[int] = []
    member_weights: list[float] = []
    for assignment, node_off, edge_off, slot_off in entries:
        for k, cluster in enumerate(assignment):
            slot = slot_off + k
            core_nodes.append(node_off + cluster.core)
            core_slots.append(slot)
            for j, e in zip(cluster.regulars, cluster.edges):
                edge_rows.append(edge_off + e)
                reg_nodes.append(node_off + j)
                msg_slots.append(slot)
            if readout_mode == "fully_connected":
                w = 1.0 / cluster.size
                for v in cluster.members():
                    member_nodes.append(node_off + v)
                    member_slots.append(slot)
                    member_weights.append(w)

    if readout_mode == "fully_connected":
        vals = gather_rows(x, np.array(member_nodes, dtype=np.int64))
        weights = Tensor(np.array(member_weights, dtype=np.float64).reshape(-1, 1))
        return scatter_add_rows(elementwise_mul(vals, weights), member_slots, num_slots)

    core_feats = gather_rows(x, np.array(core_nodes, dtype=np.int64))
    basis = scatter_add_rows(core_feats, core_slots, num_slots)
    if readout_mode == "feature_selection":
        return basis

    # edge-conditioned aggregation: core self term + weighted regular messages + bias
    if edge_rows:
        w_mats = matmul(gather_rows(gated_edges, np.array(edge_rows, dtype=np.int64)),
                        params.w_c)
        messages = rows_matvec(w_mats, gather_rows(x, np.array(reg_nodes, dtype=np.int64)),
                               d)
        basis = add(basis, scatter_add_rows(messages, msg_slots, num_slots))
    bias_rows = gather_rows(reshape(params.b_c, (1, d)),
                            np.zeros(len(core_slots), dtype=np.int64))
    return add(basis, scatter_add_rows(bias_rows, core_slots, num_slots))


def ne_aggregate(assignment: ClusterAssignment, x: Tensor, gated_edges: Tensor,
                 params: PoolParams, gamma: int) -> Tensor:
    """Single-graph edge-conditioned aggregation into (gamma, d) basis rows."""
    return batched_readout([(assignment, 0, 0, 0)], x, gated_edges, params, gamma,
                           gamma, "ne_aggregation")


def readout_feature_selection(assignment: ClusterAssignment, x: Tensor,
                              gamma: int) -> Tensor:
    """Raw core-node feature rows, zero-padded to gamma rows."""
    return batched_readout([(assignment, 0, 0, 0)], x, x, None, gamma, gamma,
                           "feature_selection")


def readout_fully_connected(assignment: ClusterAssignment, x: Tensor,
                            gamma: int) -> Tensor:
    """Mean of member-node features per cluster, zero-padded to gamma rows."""
    return batched_readout([(assignment, 0, 0, 0)], x, x, None, gamma, gamma,
                           "fully_connected")


def pool_forward(arrays: GraphArrays, x: Tensor, edge_feats: Tensor,
                 params: PoolParams, cfg: PoolConfig) -> tuple[PooledGraph, ClusterAssignment]:
    """Full pooling pass on one graph: score, gate, cluster, read out."""
    phi_e = edge_scores(edge_feats, params.p1)
    gated = gate_edges(edge_feats, phi_e)
    phi_n = node_scores(x, params.p2, cfg.delta, phi_e, arrays, cfg.score_mode)
    assignment = assign_clusters(phi_n.data, phi_e.data, arrays.neighbors,
                                 cfg.gamma, cfg.beta_cap)
    basis = batched_readout([(assignment, 0, 0, 0)], x, gated, params, cfg.gamma,
                            cfg.gamma, cfg.readout_mode)
    return PooledGraph(basis=basis, assignment=assignment), assignment


def compute_scores(arrays: GraphArrays, x: Tensor, edge_feats: Tensor,
                   params: PoolParams, cfg: PoolConfig) -> ScoreState:
    """Scoring snapshot for inspection/export; mirrors pool_forward's score stage."""
    phi_e = edge_scores(edge_feats, params.p1)
    gated = gate_edges(edge_feats, phi_e)
    phi_n = node_scores(x, params.p2, cfg.delta, phi_e, arrays, cfg.score_mode)
    assignment = assign_clusters(phi_n.data, phi_e.data, arrays.neighbors,
                                 cfg.gamma, cfg.beta_cap)
    assigned = np.zeros(arrays.num_nodes, dtype=bool)
    for c in assignment:
        for v in c.members():
            assigned[v] = True
    return ScoreState(phi_edges=phi_e.data.copy(), phi_nodes=phi_n.data.copy(),
                      gated_edges=gated.data.copy(), assigned=assigned)


def assignment_record(graph_id: int, assignment: ClusterAssignment,
                      edge_list: np.ndarray) -> dict:
    """JSON-friendly export of one graph's cluster assignment."""
    return {
        "graph_id": graph_id,
        "clusters": [
            {
                "core": int(c.core),
                "regulars": [int(j) for j in c.regulars],
                "edges": [[int(edge_list[0, e]), int(edge_list[1, e])] for e in c.edges],
            }
            for c in assignment
        ],
    }
