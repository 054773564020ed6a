"""Reverse-mode automatic differentiation over float64 numpy arrays.

Deliberately small: only the operations the routing policy and its critic
need. There is no general broadcasting; the single exception is the row-wise
bias in `linear`. Every op validates shapes eagerly and raises `ShapeError`
naming both offenders. Wrap inference code in `no_grad()` to skip graph
recording entirely.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    pass


class MissingGradientError(RuntimeError):
    pass


_grad_enabled = [True]


@contextmanager
def no_grad():
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


def grad_enabled() -> bool:
    return _grad_enabled[-1]


class Tensor:
    """A float64 array plus an optional record of the op that produced it.

    Trainable leaves (`requires_grad=True`, no parents) accumulate into
    `.grad` across `backward` calls; interior nodes keep their gradients in a
    per-call scratch map and never touch `.grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _grad_enabled[-1] and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = parents
        out._backward = backward_fn
        return out
    return Tensor(data)


def _accum(grads: dict, t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    prev = grads.get(t)
    grads[t] = g if prev is None else prev + g


def backward(loss: Tensor) -> None:
    """Populate `.grad` of every trainable leaf reachable from `loss`.

    Repeated calls (on this or other graphs sharing the leaves) accumulate.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    # Iterative post-order DFS; graphs get deep for long decode rollouts.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(node, None)
        if g is None:
            continue
        if node._backward is not None:
            node._backward(g, grads)
        elif node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)

    def back(g, grads):
        _accum(grads, a, g)
        _accum(grads, b, g)

    return _node(a.data + b.data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)

    def back(g, grads):
        _accum(grads, a, g)
        _accum(grads, b, -g)

    return _node(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)

    def back(g, grads):
        _accum(grads, a, g * b.data)
        _accum(grads, b, g * a.data)

    return _node(a.data * b.data, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def back(g, grads):
        _accum(grads, a, g * c)

    return _node(a.data * c, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def back(g, grads):
        _accum(grads, a, g @ b.data.T)
        _accum(grads, b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w plus an optional bias broadcast over rows.

    With x holding one row per sequence position this is a shared pointwise
    (kernel-size-1) map over the sequence; with a single row it is a plain
    dense layer.
    """
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.data.shape} and {w.data.shape}")
    out = x.data @ w.data
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"linear: bias shape {b.data.shape} does not match width {w.data.shape[1]}")
        out = out + b.data

    def back(g, grads):
        _accum(grads, x, g @ w.data.T)
        _accum(grads, w, x.data.T @ g)
        if b is not None:
            _accum(grads, b, g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, back)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def back(g, grads):
        _accum(grads, a, g * (1.0 - t * t))

    return _node(t, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)

    def back(g, grads):
        _accum(grads, a, g * s * (1.0 - s))

    return _node(s, (a,), back)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def back(g, grads):
        _accum(grads, a, g * (a.data > 0))

    return _node(out, (a,), back)


def softmax(a: Tensor, axis: int) -> Tensor:
    shift = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shift)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g, grads):
        _accum(grads, a, p * (g - (g * p).sum(axis=axis, keepdims=True)))

    return _node(p, (a,), back)


def log_softmax(a: Tensor, axis: int) -> Tensor:
    shift = a.data - a.data.max(axis=axis, keepdims=True)
    ls = shift - np.log(np.exp(shift).sum(axis=axis, keepdims=True))

    def back(g, grads):
        _accum(grads, a, g - np.exp(ls) * g.sum(axis=axis, keepdims=True))

    return _node(ls, (a,), back)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ShapeError("concat: need at least one tensor")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g, grads):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(grads, p, g[tuple(idx)])

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), back)


def masked_fill(a: Tensor, mask: np.ndarray, value: float = -np.inf) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} vs data {a.data.shape}")
    out = np.where(mask, value, a.data)

    def back(g, grads):
        _accum(grads, a, np.where(mask, 0.0, g))

    return _node(out, (a,), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: need a 2-d tensor, got shape {a.data.shape}")

    def back(g, grads):
        _accum(grads, a, g.T)

    return _node(a.data.T.copy(), (a,), back)


def repeat_rows(a: Tensor, n: int) -> Tensor:
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeError(f"repeat_rows: need shape (1, d), got {a.data.shape}")

    def back(g, grads):
        _accum(grads, a, g.sum(axis=0, keepdims=True))

    return _node(np.repeat(a.data, n, axis=0), (a,), back)


def take_row(a: Tensor, i: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"take_row: need a 2-d tensor, got shape {a.data.shape}")

    def back(g, grads):
        full = np.zeros_like(a.data)
        full[i] = g[0]
        _accum(grads, a, full)

    return _node(a.data[i : i + 1].copy(), (a,), back)


def pick(a: Tensor, index: tuple) -> Tensor:
    out = np.asarray(a.data[index], dtype=np.float64)
    if out.size != 1:
        raise ShapeError(f"pick: index {index} selects shape {out.shape}, want a scalar")

    def back(g, grads):
        full = np.zeros_like(a.data)
        full[index] = g
        _accum(grads, a, full)

    return _node(out, (a,), back)


def sum_all(a: Tensor) -> Tensor:
    def back(g, grads):
        _accum(grads, a, np.full_like(a.data, float(g)))

    return _node(np.asarray(a.data.sum()), (a,), back)


def mean_all(a: Tensor) -> Tensor:
    inv = 1.0 / a.data.size

    def back(g, grads):
        _accum(grads, a, np.full_like(a.data, float(g) * inv))

    return _node(np.asarray(a.data.mean()), (a,), back)


def squared_error(a: Tensor, b: Tensor) -> Tensor:
    """Sum of elementwise squared differences, as a scalar."""
    _check_same_shape("squared_error", a, b)
    diff = a.data - b.data

    def back(g, grads):
        _accum(grads, a, 2.0 * float(g) * diff)
        _accum(grads, b, -2.0 * float(g) * diff)

    return _node(np.asarray((diff * diff).sum()), (a, b), back)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted-scaling dropout; rate 0 is the exact identity (draws nothing)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = rng.random(a.data.shape) >= rate
    factor = keep / (1.0 - rate)

    def back(g, grads):
        _accum(grads, a, g * factor)

    return _node(a.data * factor, (a,), back)


class AdamState:
    """Adam moment accumulators for a named parameter set."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; gradients are consumed and cleared."""
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradientError(f"parameter '{name}' has no gradient; run backward first")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad = None


def grad_check(build_fn, params: dict[str, Tensor], eps: float = 1e-4) -> float:
    """Max relative error between backprop and central finite differences.

    `build_fn(params)` must rebuild the scalar loss from scratch on each call
    (any internal randomness re-seeded), so parameter nudges are the only
    source of change.
    """
    for p in params.values():
        p.grad = None
    backward(build_fn(params))
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(build_fn(params).data)
            flat[i] = orig - eps
            f_minus = float(build_fn(params).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    for p in params.values():
        p.grad = None
    return worst
