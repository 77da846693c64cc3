import numpy as np
import pytest

import ehcpool.autodiff as ad
from ehcpool.autodiff import Adam, Tape, Tensor, backward, grad_check
from ehcpool.errors import CheckpointMismatch, NonFinite, NotScalar, ShapeMismatch

from oracles import numeric_grad

RNG = np.random.default_rng(42)


def rel_err(a, n):
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def check_op(build, arrays, tol=1e-6, h=1e-5):
    """Compare tape gradients of sum(weights * build(*arrays)) with central differences.

    build takes Tensor arguments and returns a Tensor; every argument is checked.
    """
    out_probe = build(*[Tensor(a) for a in arrays]).data
    weights = RNG.standard_normal(out_probe.shape)

    for which in range(len(arrays)):
        tensors = [Tensor(a, requires_grad=(k == which)) for k, a in enumerate(arrays)]
        with Tape() as tape:
            out = build(*tensors)
            loss = ad.sum_rows(ad.reshape(ad.elementwise_mul(out, Tensor(weights)),
                                          (out.data.size,)))
        backward(tape, loss)
        analytic = tensors[which].grad

        def f(x, which=which):
            args = [Tensor(x if k == which else a) for k, a in enumerate(arrays)]
            return float(np.sum(build(*args).data * weights))

        numeric = numeric_grad(f, arrays[which], h=h)
        assert rel_err(analytic, numeric).max() <= tol, f"input {which}"


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5


def test_l2_norm_three_four_five():
    assert ad.l2_norm(Tensor([3.0, 4.0])).item() == 5.0


def test_gather_identity_rows():
    eye = np.eye(3)
    out = ad.gather_rows(Tensor(eye), [2, 0])
    assert np.array_equal(out.data, eye[[2, 0]])


def test_backward_quadratic():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_rows(ad.elementwise_mul(w, w))
    backward(tape, loss)
    assert np.allclose(w.grad, [2.0, 4.0])


def test_backward_untouched_leaf_is_zero():
    w = Tensor([1.0, 2.0], requires_grad=True)
    p = Tensor([5.0], requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_rows(ad.elementwise_mul(w, w))
    backward(tape, loss)
    assert np.array_equal(p.grad, [0.0])


def test_backward_sigmoid_at_zero():
    x = Tensor(0.0, requires_grad=True)
    with Tape() as tape:
        y = ad.sigmoid(x)
    backward(tape, y)
    assert np.allclose(x.grad, 0.25)


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = ad.scalar_mul(x, 2.0)
    with pytest.raises(NotScalar):
        backward(tape, y)


def test_fanout_accumulates():
    # loss = f(x) + g(x): grad must be grad_f + grad_g
    x = Tensor([1.5, -0.5], requires_grad=True)
    with Tape() as tape:
        f = ad.sum_rows(ad.elementwise_mul(x, x))
        g = ad.sum_rows(ad.scalar_mul(x, 3.0))
        loss = ad.sum_rows(ad.add(ad.reshape(f, (1,)), ad.reshape(g, (1,))))
    backward(tape, loss)
    assert np.allclose(x.grad, 2.0 * x.data + 3.0)


def test_matmul_grads():
    check_op(ad.matmul, [RNG.standard_normal((3, 4)), RNG.standard_normal((4, 2))])
    check_op(ad.matmul, [RNG.standard_normal((3, 4)), RNG.standard_normal(4)])
    check_op(ad.matmul, [RNG.standard_normal(5), RNG.standard_normal(5)])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_add_grads():
    check_op(ad.add, [RNG.standard_normal((3, 4)), RNG.standard_normal((3, 4))])
    check_op(ad.add, [RNG.standard_normal((3, 4)), RNG.standard_normal(4)])


def test_elementwise_mul_grads():
    check_op(ad.elementwise_mul,
             [RNG.standard_normal((3, 4)), RNG.standard_normal((3, 4))])
    check_op(ad.elementwise_mul,
             [RNG.standard_normal((3, 4)), RNG.standard_normal((3, 1))])
    check_op(ad.elementwise_mul,
             [RNG.standard_normal((3, 4)), np.asarray(RNG.standard_normal())])


def test_scalar_mul_grads():
    check_op(lambda a: ad.scalar_mul(a, -1.7), [RNG.standard_normal((2, 3))])


def test_sigmoid_grads():
    check_op(ad.sigmoid, [RNG.standard_normal((4, 3))])


def test_relu_grads_away_from_kink():
    x = RNG.standard_normal((4, 3))
    x[np.abs(x) < 1e-3] = 0.5
    check_op(ad.relu, [x])


def test_sum_rows_grads():
    check_op(ad.sum_rows, [RNG.standard_normal((5, 3))])
    check_op(ad.sum_rows, [RNG.standard_normal(6)])


def test_gather_rows_grads_with_repeats():
    idx = np.array([0, 2, 2, 1])
    check_op(lambda a: ad.gather_rows(a, idx), [RNG.standard_normal((3, 2))])


def test_scatter_add_rows_grads():
    idx = np.array([1, 0, 1, 3])
    check_op(lambda v: ad.scatter_add_rows(v, idx, 4), [RNG.standard_normal((4, 2))])


def test_l2_norm_grads():
    check_op(ad.l2_norm, [RNG.standard_normal(5) + 2.0])


def test_clamp_min_grads():
    x = RNG.standard_normal(6)
    x[np.abs(x - 0.5) < 1e-2] += 0.1
    check_op(lambda a: ad.clamp_min(a, 0.5), [x])


def test_reciprocal_grads():
    check_op(ad.reciprocal, [RNG.standard_normal(5) + 3.0])


def test_reshape_grads():
    check_op(lambda a: ad.reshape(a, (6,)), [RNG.standard_normal((2, 3))])


def test_rows_matvec_grads():
    w = RNG.standard_normal((5, 6))  # five flattened 2x3 matrices
    x = RNG.standard_normal((5, 3))
    check_op(lambda a, b: ad.rows_matvec(a, b, 2), [w, x])


def test_rows_matvec_matches_loop():
    w = RNG.standard_normal((4, 6))
    x = RNG.standard_normal((4, 3))
    out = ad.rows_matvec(Tensor(w), Tensor(x), 2).data
    for r in range(4):
        assert np.allclose(out[r], w[r].reshape(2, 3) @ x[r])


def test_bce_with_logits_grads():
    logits = RNG.standard_normal(6) * 3
    targets = (RNG.random(6) > 0.5).astype(float)
    check_op(lambda a: ad.bce_with_logits(a, targets), [logits])


def test_bce_with_logits_values():
    out = ad.bce_with_logits(Tensor([0.0, 100.0, -100.0]),
                             np.array([1.0, 1.0, 0.0])).data
    assert np.allclose(out, [np.log(2.0), 0.0, 0.0], atol=1e-12)


def test_batch_norm_train_grads():
    x = RNG.standard_normal((6, 3)) * 2 + 1
    gamma = RNG.standard_normal(3) + 1.5
    beta = RNG.standard_normal(3)

    def build(xt, gt, bt):
        state = ad.BatchNormState(3)
        return ad.batch_norm(xt, gt, bt, state, training=True)

    check_op(build, [x, gamma, beta], tol=5e-6)


def test_batch_norm_eval_uses_running_stats():
    state = ad.BatchNormState(2)
    state.running_mean = np.array([1.0, -1.0])
    state.running_var = np.array([4.0, 0.25])
    gamma = Tensor(np.ones(2))
    beta = Tensor(np.zeros(2))
    x = Tensor(np.array([[3.0, 0.0]]))
    out = ad.batch_norm(x, gamma, beta, state, training=False).data
    assert np.allclose(out, [[2.0 / np.sqrt(4 + 1e-5), 1.0 / np.sqrt(0.25 + 1e-5)]])


def test_batch_norm_train_updates_running_stats():
    state = ad.BatchNormState(1, momentum=0.1)
    x = Tensor(np.array([[1.0], [3.0]]))
    ad.batch_norm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), state, training=True)
    assert np.allclose(state.running_mean, [0.2])
    # unbiased batch var = 2.0
    assert np.allclose(state.running_var, [0.9 * 1.0 + 0.1 * 2.0])


def test_adam_zero_gradient_keeps_params():
    p = Tensor([1.0, -2.0], requires_grad=True)
    opt = Adam([p], lr=0.001)
    opt.step()
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_magnitude():
    p = Tensor([0.0], requires_grad=True)
    opt = Adam([p], lr=0.001)
    p.grad = np.array([1.0])
    opt.step()
    expected = -0.001 * 1.0 / (1.0 + 1e-8)
    assert abs(p.data[0] - expected) < 1e-12


def test_adam_constant_gradient_step_size():
    p = Tensor([0.0], requires_grad=True)
    opt = Adam([p], lr=0.001)
    prev = p.data.copy()
    for _ in range(2):
        p.grad = np.array([0.37])
        opt.step()
        delta = abs(p.data[0] - prev[0])
        assert abs(delta - 0.001) <= 0.01 * 0.001
        prev = p.data.copy()


def test_adam_zero_lr_is_identity():
    p = Tensor(RNG.standard_normal(4), requires_grad=True)
    before = p.data.copy()
    opt = Adam([p], lr=0.0)
    p.grad = RNG.standard_normal(4)
    opt.step()
    assert np.array_equal(p.data, before)


def test_grad_check_quadratic():
    w = Tensor([1.0, 2.0], requires_grad=True)

    def f(params):
        return ad.sum_rows(ad.elementwise_mul(params[0], params[0]))

    assert grad_check(f, [w]) <= 1e-8


def test_grad_check_constant():
    w = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([3.0])

    def f(params):
        return ad.sum_rows(c)

    assert grad_check(f, [w]) <= 1e-8


def test_debug_nan_raises():
    ad.set_debug_nan(True)
    try:
        with pytest.raises(NonFinite):
            ad.elementwise_mul(Tensor([np.inf]), Tensor([0.0]))  # inf * 0 -> nan
    finally:
        ad.set_debug_nan(False)


def test_checkpoint_round_trip(tmp_path):
    params = {
        "a": Tensor(RNG.standard_normal((2, 3))),
        "b": Tensor(RNG.standard_normal(4)),
    }
    path = tmp_path / "ckpt.json"
    ad.save_checkpoint(path, params, meta={"k": 1})
    loaded, meta = ad.load_checkpoint(path)
    assert meta == {"k": 1}
    for name, t in params.items():
        assert np.array_equal(loaded[name], t.data)


def test_checkpoint_magic_enforced(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"magic": "NOPE", "params": {}}', encoding="utf-8")
    with pytest.raises(CheckpointMismatch):
        ad.load_checkpoint(path)
