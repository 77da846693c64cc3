"""Minimal reverse-mode autodiff over dense float64 arrays.

Primitive operations record onto the active Tape; a reverse sweep over the
execution-ordered records accumulates exact analytic gradients into leaf
tensors. Only the primitives the pooling network needs are provided; there is
no general broadcasting, no GPU path, and no second-order support.
"""

from __future__ import annotations

import json
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointMismatch, NonFinite, NotScalar, ShapeMismatch

EPS_NORM = 1e-12

_state = threading.local()

_DEBUG_NAN = False


def set_debug_nan(enabled: bool) -> None:
    """When enabled, every primitive raises NonFinite if it produces a NaN."""
    global _DEBUG_NAN
    _DEBUG_NAN = bool(enabled)


class Tensor:
    """Dense float64 array plus an additively-accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        # leaves pre-allocate zeros, so aliased upstream views are only ever
        # stored on intermediates, whose grads are dead once their record runs
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Execution-ordered record of primitive ops for one forward pass.

    Reversing the record is a valid topological order, so the backward sweep
    visits each op exactly once and fan-out accumulates additively.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _state.tapes.pop()

    def __len__(self) -> int:
        return len(self._records)


def _active_tape() -> Tape | None:
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    if _DEBUG_NAN and data.size and np.isnan(data).any():
        raise NonFinite("primitive produced NaN")
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = None  # lazily allocated during the sweep
        tape._records.append((out, parents, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad for every requires_grad leaf on the tape."""
    if loss.data.size != 1:
        raise NotScalar(f"loss must be scalar, got shape {loss.data.shape}")
    loss.accumulate(np.ones_like(loss.data))
    for out, parents, backward_fn in reversed(tape._records):
        g = out.grad
        if g is None:
            continue
        for parent, pg in zip(parents, backward_fn(g)):
            if parent.requires_grad and pg is not None:
                parent.accumulate(pg)


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for (m,k)@(k,n), (m,k)@(k,) and (k,)@(k,) operand shapes."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeMismatch(f"matmul {ad.shape} @ {bd.shape}")

        def back(g):
            return g @ bd.T, ad.T @ g

    elif ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeMismatch(f"matmul {ad.shape} @ {bd.shape}")

        def back(g):
            return np.outer(g, bd), ad.T @ g

    elif ad.ndim == 1 and bd.ndim == 1:
        if ad.shape != bd.shape:
            raise ShapeMismatch(f"dot {ad.shape} . {bd.shape}")

        def back(g):
            return g * bd, g * ad

    else:
        raise ShapeMismatch(f"matmul unsupported ranks {ad.shape} @ {bd.shape}")
    return _make(ad @ bd, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also supports adding a length-d row vector to every row."""
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:

        def back(g):
            return g, g.copy()  # distinct buffers: both parents may accumulate

    elif ad.ndim == 2 and bd.ndim == 1 and ad.shape[1] == bd.shape[0]:

        def back(g):
            return g, g.sum(axis=0)

    else:
        raise ShapeMismatch(f"add {ad.shape} + {bd.shape}")
    return _make(ad + bd, (a, b), back)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; b may also be a per-row column (m,1) or a 0-d scalar."""
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:

        def back(g):
            return g * bd, g * ad

    elif bd.ndim == 0:

        def back(g):
            return g * bd, np.asarray((g * ad).sum())

    elif ad.ndim == 2 and bd.shape == (ad.shape[0], 1):

        def back(g):
            return g * bd, (g * ad).sum(axis=1, keepdims=True)

    else:
        raise ShapeMismatch(f"elementwise_mul {ad.shape} * {bd.shape}")
    return _make(ad * bd, (a, b), back)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    xs, os = x.ravel(), out.ravel()
    pos = xs >= 0
    os[pos] = 1.0 / (1.0 + np.exp(-xs[pos]))
    ex = np.exp(xs[~pos])
    os[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at 0 is 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sum_rows(a: Tensor) -> Tensor:
    """Sum over the leading axis: (n,d)->(d,), (n,)->scalar."""
    shape = a.data.shape
    return _make(a.data.sum(axis=0), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def _scatter_rows(idx: np.ndarray, values: np.ndarray, num_rows: int) -> np.ndarray:
    """Index-order row scatter-add via bincount (much faster than np.add.at).

    bincount accumulates in input order, so per-slot summation order follows the
    storage order of `idx`, independent of what the indices are named.
    """
    if values.ndim == 1:
        return np.bincount(idx, weights=values, minlength=num_rows)
    out = np.empty((num_rows,) + values.shape[1:], dtype=np.float64)
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(idx, weights=values[:, c], minlength=num_rows)
    return out


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)

    def back(g):
        return (_scatter_rows(idx, g, a.data.shape[0]),)

    return _make(a.data[idx], (a,), back)


def scatter_add_rows(values: Tensor, indices, num_rows: int) -> Tensor:
    """Sum value rows into a fresh (num_rows, ...) array at the given row indices."""
    idx = np.asarray(indices, dtype=np.int64)
    out = _scatter_rows(idx, values.data, num_rows)
    return _make(out, (values,), lambda g: (g[idx],))


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm of a flat vector; backward guards the zero vector at 1e-12."""
    if a.data.size < 1:
        raise ShapeMismatch("l2_norm needs at least one element")
    nrm = float(np.sqrt(np.sum(a.data * a.data)))
    denom = max(nrm, EPS_NORM)
    return _make(np.asarray(nrm), (a,), lambda g: (float(g) * a.data / denom,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    mask = a.data >= floor
    return _make(np.maximum(a.data, floor), (a,), lambda g: (g * mask,))


def reciprocal(a: Tensor) -> Tensor:
    inv = 1.0 / a.data
    return _make(inv, (a,), lambda g: (-g * inv * inv,))


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (np.asarray(g).reshape(orig),))


def rows_matvec(w: Tensor, x: Tensor, out_dim: int) -> Tensor:
    """Per-row matrix-vector product: row r of w is a flattened (out_dim, in) matrix."""
    k, flat = w.data.shape
    if k != x.data.shape[0] or flat % out_dim != 0:
        raise ShapeMismatch(f"rows_matvec {w.data.shape} x {x.data.shape} out={out_dim}")
    in_dim = flat // out_dim
    if in_dim != x.data.shape[1]:
        raise ShapeMismatch(f"rows_matvec inner dim {in_dim} != {x.data.shape[1]}")
    w3 = w.data.reshape(k, out_dim, in_dim)
    out = np.einsum("koi,ki->ko", w3, x.data)

    def back(g):
        gw = np.einsum("ko,ki->koi", g, x.data).reshape(k, flat)
        gx = np.einsum("koi,ko->ki", w3, g)
        return gw, gx

    return _make(out, (w, x), back)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-example binary cross entropy from logits, numerically stable."""
    x = logits.data
    y = np.asarray(targets, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"bce_with_logits {x.shape} vs targets {y.shape}")
    out = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    sig = _stable_sigmoid(x)
    return _make(out, (logits,), lambda g: (g * (sig - y),))


class BatchNormState:
    """Running statistics for one batch-norm site."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(dim, dtype=np.float64)
        self.running_var = np.ones(dim, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               training: bool) -> Tensor:
    """Normalize each feature column over the rows; train mode updates running stats."""
    xd = x.data
    if xd.ndim != 2:
        raise ShapeMismatch(f"batch_norm expects 2-D input, got {xd.shape}")
    n = xd.shape[0]
    if training:
        mu = xd.mean(axis=0)
        var = xd.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (xd - mu) * inv_std
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu
        unbiased = var * n / (n - 1) if n > 1 else var
        state.running_var = (1.0 - m) * state.running_var + m * unbiased

        def back(g):
            gxhat = g * gamma.data
            gvar = np.sum(gxhat * (xd - mu), axis=0) * (-0.5) * inv_std**3
            gmu = -np.sum(gxhat, axis=0) * inv_std + gvar * np.mean(-2.0 * (xd - mu), axis=0)
            gx = gxhat * inv_std + gvar * 2.0 * (xd - mu) / n + gmu / n
            return gx, np.sum(g * xhat, axis=0), np.sum(g, axis=0)

    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (xd - state.running_mean) * inv_std

        def back(g):
            return g * gamma.data * inv_std, np.sum(g * xhat, axis=0), np.sum(g, axis=0)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), back)


class BatchNorm:
    """Learnable affine batch normalization over row batches."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5, name: str = "bn"):
        self.gamma = Tensor(np.ones(dim), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(dim), requires_grad=True, name=f"{name}.beta")
        self.state = BatchNormState(dim, momentum=momentum, eps=eps)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.state, training)

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]


# ---------------------------------------------------------------------------
# optimizer / verification / checkpoints


def uniform_init(rng: np.random.Generator, shape, fan_in: int, name: str) -> Tensor:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Adam:
    """First/second-moment adaptive optimizer with bias correction."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeMismatch(f"grad shape {g.shape} != param shape {p.data.shape}")
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1**self.t)
            v_hat = self.v[i] / (1.0 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grad_check(f: Callable[[Sequence[Tensor]], Tensor], params: Sequence[Tensor],
               h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central finite differences.

    Relative error per entry is |a - n| / max(1e-8, |a| + |n|); f is re-evaluated
    without a tape for the numeric probes, so it must be side-effect tolerant.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f(params)
    backward(tape, loss)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        if not p.data.flags["C_CONTIGUOUS"]:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.ravel()
        aflat = a.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(params).data)
            flat[i] = orig - h
            fm = float(f(params).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst


CHECKPOINT_MAGIC = "EHCP1"


def save_checkpoint(path, named_params: dict[str, Tensor], meta: dict | None = None) -> None:
    """JSON checkpoint: magic string, free-form meta, name -> (shape, flat f64 values)."""
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "meta": meta or {},
        "params": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for name, t in named_params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointMismatch(
            f"bad magic {payload.get('magic')!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    params = {
        name: np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        for name, rec in payload["params"].items()
    }
    return params, payload.get("meta", {})
