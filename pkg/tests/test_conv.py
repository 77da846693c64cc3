import numpy as np
import pytest

import ehcpool.autodiff as ad
from ehcpool.autodiff import Tape, Tensor, backward, grad_check
from ehcpool.conv import EccLayer
from ehcpool.graphs import AttributedGraph, GraphArrays

from oracles import numeric_grad, pairs_to_edge_list, random_edge_pairs

RNG = np.random.default_rng(7)


def make_layer(in_dim, out_dim, edge_dim, seed=0, hidden=None):
    return EccLayer(in_dim, out_dim, edge_dim, np.random.default_rng(seed),
                    filter_hidden=hidden)


def set_identity_filter(layer):
    """Force the filter MLP to emit the identity matrix for every edge."""
    assert layer.in_dim == layer.out_dim
    layer.w1.data[:] = 0.0
    layer.b1.data[:] = 0.0
    layer.w2.data[:] = 0.0
    layer.b2.data[:] = np.eye(layer.in_dim).ravel()
    layer.bias.data[:] = 0.0


def run_forward(layer, graph, x_prev):
    s = GraphArrays(graph)
    out = layer.forward(Tensor(np.asarray(x_prev, dtype=float)),
                        Tensor(graph.edge_features), s.src, s.dst, s.inv_degree)
    return out.data


def graph_from_pairs(n, pairs, d=2, de=1, rng=None):
    rng = rng or RNG
    return AttributedGraph(rng.standard_normal((n, d)),
                           rng.standard_normal((len(pairs), de)),
                           pairs_to_edge_list(pairs))


def test_filter_zero_mlp_gives_zero_matrix():
    layer = make_layer(2, 2, 3)
    layer.w1.data[:] = 0
    layer.b1.data[:] = 0
    layer.w2.data[:] = 0
    layer.b2.data[:] = 0
    assert np.array_equal(layer.filter_forward([1.0, -2.0, 0.5]), np.zeros((2, 2)))


def test_filter_passthrough_reads_first_weight_row():
    # hidden weights route input coordinate 0 straight through; zero biases
    layer = make_layer(3, 2, 2, hidden=5)
    layer.b1.data[:] = 0
    layer.b2.data[:] = 0
    layer.w1.data[:] = 0
    layer.w1.data[0, 0] = 1.0
    out = layer.filter_forward([1.0, 0.0])
    assert np.allclose(out, layer.w2.data[0].reshape(2, 3))


def test_filter_distinguishes_edge_features():
    layer = make_layer(2, 2, 3, seed=5)
    a = layer.filter_forward(RNG.standard_normal(3))
    b = layer.filter_forward(RNG.standard_normal(3))
    assert not np.allclose(a, b)


def test_star_center_averages_identity_weighted_leaves():
    g = AttributedGraph(np.zeros((3, 2)), np.zeros((2, 1)),
                        pairs_to_edge_list([(0, 1), (0, 2)]))
    layer = make_layer(2, 2, 1)
    set_identity_filter(layer)
    x_prev = [[0.0, 0.0], [2.0, 0.0], [0.0, 4.0]]
    out = run_forward(layer, g, x_prev)
    assert np.allclose(out[0], [1.0, 2.0])


def test_zero_filter_leaves_only_bias():
    g = graph_from_pairs(4, [(0, 1), (1, 2)], d=2, de=1)
    layer = make_layer(2, 2, 1)
    layer.w1.data[:] = 0
    layer.b1.data[:] = 0
    layer.w2.data[:] = 0
    layer.b2.data[:] = 0
    layer.bias.data[:] = [0.5, -1.5]
    out = run_forward(layer, g, RNG.standard_normal((4, 2)))
    # node 3 is isolated and gets the bias as well
    assert np.allclose(out, np.tile([0.5, -1.5], (4, 1)))


def test_single_edge_swaps_features():
    g = AttributedGraph(np.zeros((2, 2)), np.zeros((1, 1)),
                        pairs_to_edge_list([(0, 1)]))
    layer = make_layer(2, 2, 1)
    set_identity_filter(layer)
    x_prev = np.array([[1.0, 2.0], [-3.0, 4.0]])
    out = run_forward(layer, g, x_prev)
    assert np.array_equal(out[0], x_prev[1])
    assert np.array_equal(out[1], x_prev[0])


def test_permutation_equivariance_is_exact():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(3, 9))
        pairs = random_edge_pairs(rng, n, density=0.5)
        g = graph_from_pairs(n, pairs, d=3, de=2, rng=rng)
        layer = make_layer(3, 4, 2, seed=int(rng.integers(1000)))
        x_prev = rng.standard_normal((n, 3))
        out1 = run_forward(layer, g, x_prev)

        perm = rng.permutation(n)
        inv = np.argsort(perm)
        g2 = AttributedGraph(g.node_features[inv], g.edge_features,
                             perm[np.asarray(g.edge_list)])
        out2 = run_forward(layer, g2, x_prev[inv])
        assert np.array_equal(out2[perm], out1)


def test_output_depends_only_on_neighborhood():
    # path 0-1-2-3: node 0's output must ignore nodes 2 and 3 entirely
    pairs = [(0, 1), (1, 2), (2, 3)]
    g = graph_from_pairs(4, pairs, d=2, de=1)
    layer = make_layer(2, 3, 1, seed=3)
    x_prev = RNG.standard_normal((4, 2))
    base = run_forward(layer, g, x_prev)
    x_mod = x_prev.copy()
    x_mod[2] += 10.0
    x_mod[3] -= 5.0
    moved = run_forward(layer, g, x_mod)
    assert np.array_equal(moved[0], base[0])
    assert not np.allclose(moved[1], base[1])


def test_ecc_forward_gradients():
    rng = np.random.default_rng(23)
    pairs = [(0, 1), (1, 2), (0, 2), (2, 3)]
    g = graph_from_pairs(4, pairs, d=2, de=2, rng=rng)
    layer = make_layer(2, 3, 2, seed=9)
    s = GraphArrays(g)
    x_prev = rng.standard_normal((4, 2))
    weights = rng.standard_normal((4, 3))

    def f(params):
        out = layer.forward(Tensor(x_prev), Tensor(g.edge_features), s.src,
                            s.dst, s.inv_degree)
        return ad.sum_rows(ad.sum_rows(ad.elementwise_mul(out, Tensor(weights))))

    params = [layer.w1, layer.b1, layer.w2, layer.b2, layer.bias]
    assert grad_check(f, params) <= 1e-5


def test_input_gradients_flow_through_conv():
    rng = np.random.default_rng(29)
    pairs = [(0, 1), (1, 2)]
    g = graph_from_pairs(3, pairs, d=2, de=1, rng=rng)
    layer = make_layer(2, 2, 1, seed=1)
    s = GraphArrays(g)
    x0 = rng.standard_normal((3, 2))
    weights = rng.standard_normal((3, 2))

    x = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        out = layer.forward(x, Tensor(g.edge_features), s.src, s.dst,
                            s.inv_degree)
        loss = ad.sum_rows(ad.sum_rows(ad.elementwise_mul(out, Tensor(weights))))
    backward(tape, loss)

    def f(xv):
        out = layer.forward(Tensor(xv), Tensor(g.edge_features), s.src, s.dst,
                            s.inv_degree)
        return float(np.sum(out.data * weights))

    numeric = numeric_grad(f, x0)
    err = np.abs(x.grad - numeric) / np.maximum(1e-8, np.abs(x.grad) + np.abs(numeric))
    assert err.max() <= 1e-6
