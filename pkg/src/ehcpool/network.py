"""Full classification network: two edge-conditioned conv blocks, hard-clustering
pooling, and an MLP head producing one logit per graph.

Forward passes run on the disjoint union of a minibatch: node/edge features are
concatenated with index offsets so convolution, scoring, and cluster readout
are each a single set of tensor ops, while the discrete cluster selection runs
per graph on score slices. Batch-norm statistics therefore span all node rows
of the minibatch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .conv import EccLayer
from .errors import CheckpointMismatch, ConfigError
from .graphs import AttributedGraph, GraphArrays
from .pooling import (
    PoolConfig,
    PoolParams,
    assign_clusters,
    batched_readout,
    edge_scores,
    gate_edges,
    node_scores,
)


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for the network and its training/evaluation protocol."""

    conv_channels: tuple[int, int] = (16, 16)
    filter_hidden: int | None = None  # None -> 2 * edge_dim + 1
    gamma: int = 5
    beta_cap: int = 3
    delta: float = 0.0
    score_mode: str = "edge_to_node"
    readout_mode: str = "ne_aggregation"
    edge_transform: bool = False
    lr: float = 0.001
    epochs: int = 500
    batch_size: int = 8
    seed: int = 0
    folds: int = 5
    repeats: int = 10
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) != 2 or min(self.conv_channels) < 1:
            raise ConfigError(f"conv_channels must be two positive ints, got {self.conv_channels}")
        if self.filter_hidden is not None and self.filter_hidden < 1:
            raise ConfigError("filter_hidden must be positive")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        self.pool_config()  # validates gamma/beta_cap/delta/modes

    def pool_config(self) -> PoolConfig:
        return PoolConfig(gamma=self.gamma, beta_cap=self.beta_cap, delta=self.delta,
                          score_mode=self.score_mode, readout_mode=self.readout_mode)

    def with_ablation(self, ablation: str) -> "ModelConfig":
        """Map an ablation name onto the score/readout switches."""
        table = {
            "none": {},
            "node-only": {"score_mode": "node_only"},
            "edge-only": {"score_mode": "edge_only"},
            "feature-select": {"readout_mode": "feature_selection"},
            "fc-agg": {"readout_mode": "fully_connected"},
        }
        if ablation not in table:
            raise ConfigError(f"unknown ablation {ablation!r}, expected one of {sorted(table)}")
        return replace(self, **table[ablation])


class Batch:
    """Disjoint union of a list of graphs with offset incidence arrays."""

    def __init__(self, graphs: list[AttributedGraph], structs: list[GraphArrays]):
        self.size = len(graphs)
        node_offs, edge_offs = [], []
        n_off = e_off = 0
        for g in graphs:
            node_offs.append(n_off)
            edge_offs.append(e_off)
            n_off += g.num_nodes
            e_off += g.num_edges
        self.num_nodes = n_off
        self.num_edges = e_off
        self.node_offsets = node_offs
        self.edge_offsets = edge_offs
        self.graphs = graphs
        self.structs = structs
        self.x = Tensor(np.concatenate([g.node_features for g in graphs], axis=0))
        self.l = Tensor(np.concatenate([g.edge_features for g in graphs], axis=0))
        self.src = np.concatenate([s.src + o for s, o in zip(structs, node_offs)])
        self.dst = np.concatenate([s.dst + o for s, o in zip(structs, node_offs)])
        self.inc_targets = np.concatenate(
            [s.inc_targets + o for s, o in zip(structs, node_offs)])
        self.inc_edges = np.concatenate(
            [s.inc_edges + o for s, o in zip(structs, edge_offs)])
        self.inv_degree = np.concatenate([s.inv_degree for s in structs], axis=0)
        labels = [g.label for g in graphs]
        self.labels = (np.array(labels, dtype=np.float64)
                       if all(v is not None for v in labels) else None)


class Network:
    """The assembled classifier; parameters are plain named tensors."""

    def __init__(self, node_dim: int, edge_dim: int, cfg: ModelConfig,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        self.node_dim = node_dim
        self.edge_dim = edge_dim
        self.cfg = cfg
        h1, h2 = cfg.conv_channels
        self.conv1 = EccLayer(node_dim, h1, edge_dim, rng, cfg.filter_hidden, "conv1")
        self.conv2 = EccLayer(h1, h2, edge_dim, rng, cfg.filter_hidden, "conv2")
        if cfg.edge_transform:
            self.edge_w = ad.uniform_init(rng, (edge_dim, edge_dim), edge_dim, "edge.w")
            self.edge_b = ad.uniform_init(rng, (edge_dim,), edge_dim, "edge.b")
        else:
            self.edge_w = self.edge_b = None
        self.pool = PoolParams(h2, edge_dim, rng)
        head_in = cfg.gamma * h2
        head_hidden = 2 * head_in + 1
        self.head_w1 = ad.uniform_init(rng, (head_in, head_hidden), head_in, "head.w1")
        self.head_b1 = ad.uniform_init(rng, (head_hidden,), head_in, "head.b1")
        self.head_w2 = ad.uniform_init(rng, (head_hidden, 1), head_hidden, "head.w2")
        self.head_b2 = ad.uniform_init(rng, (1,), head_hidden, "head.b2")

    @property
    def head_hidden(self) -> int:
        return self.head_w1.data.shape[1]

    def parameters(self) -> list[Tensor]:
        params = self.conv1.parameters() + self.conv2.parameters()
        if self.edge_w is not None:
            params += [self.edge_w, self.edge_b]
        params += self.pool.parameters()
        params += [self.head_w1, self.head_b1, self.head_w2, self.head_b2]
        return params

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def pooled_batch(self, batch: Batch, training: bool):
        """Flattened pooled representation (B, gamma * h2) plus per-graph assignments."""
        cfg = self.cfg
        x = ad.relu(self.conv1.norm(
            self.conv1.forward(batch.x, batch.l, batch.src, batch.dst,
                               batch.inv_degree), training))
        x = ad.relu(self.conv2.norm(
            self.conv2.forward(x, batch.l, batch.src, batch.dst,
                               batch.inv_degree), training))
        edge_feats = batch.l
        if self.edge_w is not None:
            edge_feats = ad.add(ad.matmul(edge_feats, self.edge_w), self.edge_b)
        phi_e = edge_scores(edge_feats, self.pool.p1)
        gated = gate_edges(edge_feats, phi_e)
        phi_n = node_scores(x, self.pool.p2, cfg.delta, phi_e, batch, cfg.score_mode)

        assignments = []
        entries = []
        for b, (g, s) in enumerate(zip(batch.graphs, batch.structs)):
            n_off = batch.node_offsets[b]
            e_off = batch.edge_offsets[b]
            local_nodes = phi_n.data[n_off:n_off + g.num_nodes]
            local_edges = phi_e.data[e_off:e_off + g.num_edges]
            assignment = assign_clusters(local_nodes, local_edges, s.neighbors,
                                         cfg.gamma, cfg.beta_cap)
            assignments.append(assignment)
            entries.append((assignment, n_off, e_off, b * cfg.gamma))

        basis = batched_readout(entries, x, gated, self.pool, cfg.gamma,
                                batch.size * cfg.gamma, cfg.readout_mode)
        h2 = cfg.conv_channels[1]
        flat = ad.reshape(basis, (batch.size, cfg.gamma * h2))
        return flat, assignments

    def forward_batch(self, batch: Batch, training: bool):
        """Logits for every graph in the batch, plus per-graph cluster assignments."""
        flat, assignments = self.pooled_batch(batch, training)
        hidden = ad.relu(ad.add(ad.matmul(flat, self.head_w1), self.head_b1))
        logits = ad.reshape(ad.add(ad.matmul(hidden, self.head_w2), self.head_b2),
                            (batch.size,))
        return logits, assignments

    def loss_batch(self, batch: Batch, training: bool = True):
        """Mean binary cross entropy with logits over the batch."""
        logits, assignments = self.forward_batch(batch, training)
        per_example = ad.bce_with_logits(logits, batch.labels)
        loss = ad.scalar_mul(ad.sum_rows(per_example), 1.0 / batch.size)
        return loss, logits, assignments

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        named = dict(self.named_parameters())
        for tag, layer in (("conv1", self.conv1), ("conv2", self.conv2)):
            named_stats = {
                f"{tag}.bn.running_mean": Tensor(layer.norm.state.running_mean),
                f"{tag}.bn.running_var": Tensor(layer.norm.state.running_var),
            }
            named.update(named_stats)
        meta = {
            "node_dim": self.node_dim,
            "edge_dim": self.edge_dim,
            "config": _config_to_json(self.cfg),
        }
        ad.save_checkpoint(path, named, meta)

    @classmethod
    def load(cls, path) -> "Network":
        params, meta = ad.load_checkpoint(path)
        cfg = _config_from_json(meta["config"])
        net = cls(meta["node_dim"], meta["edge_dim"], cfg)
        named = net.named_parameters()
        for name, tensor in named.items():
            if name not in params:
                raise CheckpointMismatch(f"checkpoint missing parameter {name!r}")
            if params[name].shape != tensor.data.shape:
                raise CheckpointMismatch(
                    f"parameter {name!r} has shape {params[name].shape}, "
                    f"expected {tensor.data.shape}")
            tensor.data = params[name].copy()
        for tag, layer in (("conv1", net.conv1), ("conv2", net.conv2)):
            layer.norm.state.running_mean = params[f"{tag}.bn.running_mean"].copy()
            layer.norm.state.running_var = params[f"{tag}.bn.running_var"].copy()
        return net


def _config_to_json(cfg: ModelConfig) -> dict:
    out = asdict(cfg)
    out["conv_channels"] = list(cfg.conv_channels)
    return out


def _config_from_json(rec: dict) -> ModelConfig:
    rec = dict(rec)
    rec["conv_channels"] = tuple(rec["conv_channels"])
    return ModelConfig(**rec)


def build_network(node_dim: int, edge_dim: int, cfg: ModelConfig,
                  rng: np.random.Generator | None = None) -> Network:
    """Construct the seeded network for the given feature dimensions."""
    return Network(node_dim, edge_dim, cfg, rng)
