"""Edge-conditioned graph convolution.

Each edge feature vector is mapped by a small filter MLP to a flattened
out x in weight matrix; a node's update averages the matrix-weighted features
of its neighbors and adds a bias. Isolated nodes receive the bias alone.
Batch-norm parameters for the post-conv normalization live on the layer, but
normalization and ReLU are applied by the network assembly, not here.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    BatchNorm,
    Tensor,
    add,
    elementwise_mul,
    gather_rows,
    matmul,
    relu,
    rows_matvec,
    scatter_add_rows,
    uniform_init,
)
from .errors import ShapeMismatch


class EccLayer:
    """One edge-conditioned convolution block with its filter network."""

    def __init__(self, in_dim: int, out_dim: int, edge_dim: int,
                 rng: np.random.Generator, filter_hidden: int | None = None,
                 name: str = "ecc"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.edge_dim = edge_dim
        hidden = filter_hidden if filter_hidden is not None else 2 * edge_dim + 1
        self.filter_hidden = hidden
        self.w1 = uniform_init(rng, (edge_dim, hidden), edge_dim, f"{name}.filter.w1")
        self.b1 = uniform_init(rng, (hidden,), edge_dim, f"{name}.filter.b1")
        self.w2 = uniform_init(rng, (hidden, out_dim * in_dim), hidden, f"{name}.filter.w2")
        self.b2 = uniform_init(rng, (out_dim * in_dim,), hidden, f"{name}.filter.b2")
        self.bias = uniform_init(rng, (out_dim,), in_dim, f"{name}.bias")
        self.norm = BatchNorm(out_dim, name=f"{name}.bn")

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.bias] + self.norm.parameters()

    def edge_weight_matrices(self, edge_feats: Tensor) -> Tensor:
        """Run the filter MLP on every edge row: (M, d_e) -> (M, out*in)."""
        if edge_feats.data.ndim != 2 or edge_feats.data.shape[1] != self.edge_dim:
            raise ShapeMismatch(
                f"edge features {edge_feats.data.shape}, expected (*, {self.edge_dim})"
            )
        h = relu(add(matmul(edge_feats, self.w1), self.b1))
        return add(matmul(h, self.w2), self.b2)

    def filter_forward(self, edge_feature: np.ndarray) -> np.ndarray:
        """Weight matrix for a single edge feature vector, reshaped row-major."""
        feat = np.asarray(edge_feature, dtype=np.float64).reshape(1, -1)
        w = self.edge_weight_matrices(Tensor(feat))
        return w.data.reshape(self.out_dim, self.in_dim)

    def forward(self, x: Tensor, edge_feats: Tensor, src: np.ndarray,
                dst: np.ndarray, inv_degree: np.ndarray) -> Tensor:
        """Neighborhood average of filter-weighted neighbor features plus bias.

        src/dst are the two edge-list rows; each edge's weight matrix multiplies
        both endpoint features (once per direction) without duplicating the
        matrices. inv_degree is an (n, 1) column of 1/|Ne(v)| with 1.0 in the
        (unused) isolated slots. Scatter order follows edge-row order, which
        keeps the summation order per node invariant under relabeling.
        """
        n = inv_degree.shape[0]
        if x.data.shape[1] != self.in_dim:
            raise ShapeMismatch(f"node features {x.data.shape}, expected (*, {self.in_dim})")
        weights = self.edge_weight_matrices(edge_feats)
        x_src = gather_rows(x, src)
        x_dst = gather_rows(x, dst)
        msg_to_src = rows_matvec(weights, x_dst, self.out_dim)
        msg_to_dst = rows_matvec(weights, x_src, self.out_dim)
        agg = add(scatter_add_rows(msg_to_src, src, n),
                  scatter_add_rows(msg_to_dst, dst, n))
        scaled = elementwise_mul(agg, Tensor(inv_degree))
        return add(scaled, self.bias)
