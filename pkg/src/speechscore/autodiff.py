"""Dense tensors with reverse-mode automatic differentiation.

Every network layer in this package is built from the primitives below.
Values are float64 internally; the primitive set is deliberately small so
each shape rule and adjoint stays auditable.  Tensor.data is treated as
immutable after construction: updates (e.g. optimizer steps) replace the
array instead of writing into it, which keeps views created by slice /
reshape / transpose valid.

A graph and its tensors belong to one logical thread between construction
and backward(); parameter tensors may be shared read-only across threads.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operands do not conform to a primitive's shape rule."""


class GradCheckError(RuntimeError):
    """Raised when a function under grad_check produces non-finite output."""


class OpRecord:
    """One primitive application: op name, input refs and its adjoint rule.

    ``vjp(grad_out)`` returns one cotangent per input (None for inputs that
    need no gradient).  Records are created in evaluation order, so walking
    them parents-first is a topological order by construction.
    """

    __slots__ = ("op", "inputs", "vjp")

    def __init__(self, op, inputs, vjp):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "record")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.record = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Small amount of operator sugar; layers mostly call the functions below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


def _result(op, data, inputs, make_vjp):
    """Wrap a forward result, recording the op if any input needs grad."""
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad:
        out.record = OpRecord(op, inputs, make_vjp(out))
    return out


def _check_same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not conform")


# ---------------------------------------------------------------------------
# Primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _result("add", a.data + b.data, (a, b), lambda out: lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return _result("mul", a.data * b.data, (a, b),
                   lambda out: lambda g: (g * b.data, g * a.data))


def neg(a: Tensor) -> Tensor:
    return _result("neg", -a.data, (a,), lambda out: lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} do not conform")
    return _result("matmul", a.data @ b.data, (a, b),
                   lambda out: lambda g: (g @ b.data.T, a.data.T @ g))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat: needs at least one input")
    first = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(first) or s[:axis] + s[axis + 1:] != first[:axis] + first[axis + 1:]:
            raise ShapeError(f"concat: shapes {first} and {s} do not conform")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def make_vjp(out):
        def vjp(g):
            return tuple(np.split(g, offsets, axis=axis))
        return vjp

    return _result("concat", np.concatenate([t.data for t in tensors], axis=axis),
                   tensors, make_vjp)


def slice_(a: Tensor, key) -> Tensor:
    """Basic slicing; key is a slice or tuple of slices (step >= 1 allowed)."""
    if not isinstance(key, tuple):
        key = (key,)
    if len(key) > a.data.ndim or not all(isinstance(k, slice) for k in key):
        raise ShapeError(f"slice: key {key} does not conform to shape {a.data.shape}")

    def make_vjp(out):
        def vjp(g):
            full = np.zeros_like(a.data)
            full[key] = g
            return (full,)
        return vjp

    return _result("slice", a.data[key], (a,), make_vjp)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(f"reshape: shapes {a.data.shape} and {shape} do not conform")
    return _result("reshape", a.data.reshape(shape), (a,),
                   lambda out: lambda g: (g.reshape(a.data.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} do not conform to shape {a.data.shape}")
    inverse = tuple(np.argsort(axes))
    return _result("transpose", a.data.transpose(axes), (a,),
                   lambda out: lambda g: (g.transpose(inverse),))


def broadcast_add(a: Tensor, v: Tensor) -> Tensor:
    """Add vector v along the last axis of a (v broadcast across rows)."""
    if v.data.ndim != 1 or a.data.ndim < 1 or a.data.shape[-1] != v.data.shape[0]:
        raise ShapeError(f"broadcast_add: shapes {a.data.shape} and {v.data.shape} do not conform")

    def make_vjp(out):
        def vjp(g):
            return (g, g.reshape(-1, v.data.shape[0]).sum(axis=0))
        return vjp

    return _result("broadcast_add", a.data + v.data, (a, v), make_vjp)


def relu(a: Tensor) -> Tensor:
    return _result("relu", np.maximum(a.data, 0.0), (a,),
                   lambda out: lambda g: (g * (a.data > 0.0),))


def tanh(a: Tensor) -> Tensor:
    return _result("tanh", np.tanh(a.data), (a,),
                   lambda out: lambda g: (g * (1.0 - out.data * out.data),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # piecewise form avoids overflow in exp for large |x|
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _result("sigmoid", data, (a,),
                   lambda out: lambda g: (g * out.data * (1.0 - out.data),))


def exp(a: Tensor) -> Tensor:
    return _result("exp", np.exp(a.data), (a,),
                   lambda out: lambda g: (g * out.data,))


def log(a: Tensor) -> Tensor:
    return _result("log", np.log(a.data), (a,),
                   lambda out: lambda g: (g / a.data,))


def square(a: Tensor) -> Tensor:
    return _result("square", a.data * a.data, (a,),
                   lambda out: lambda g: (g * 2.0 * a.data,))


def sqrt(a: Tensor) -> Tensor:
    return _result("sqrt", np.sqrt(a.data), (a,),
                   lambda out: lambda g: (g / (2.0 * out.data),))


def softmax_lastdim(a: Tensor) -> Tensor:
    x = a.data
    if x.ndim < 1:
        raise ShapeError(f"softmax_lastdim: shape {x.shape} does not conform (needs ndim >= 1)")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def make_vjp(out):
        def vjp(g):
            dot = (g * out.data).sum(axis=-1, keepdims=True)
            return (out.data * (g - dot),)
        return vjp

    return _result("softmax_lastdim", s, (a,), make_vjp)


def sum_(a: Tensor, axis=None) -> Tensor:
    def make_vjp(out):
        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, a.data.shape),)
            return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape),)
        return vjp

    return _result("sum", np.sum(a.data, axis=axis), (a,), make_vjp)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]

    def make_vjp(out):
        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g / n, a.data.shape),)
            return (np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape),)
        return vjp

    return _result("mean", np.mean(a.data, axis=axis), (a,), make_vjp)


PRIMITIVES = {
    "add": add,
    "mul": mul,
    "matmul": matmul,
    "concat": concat,
    "slice": slice_,
    "reshape": reshape,
    "transpose": transpose,
    "broadcast_add": broadcast_add,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "softmax_lastdim": softmax_lastdim,
    "sum": sum_,
    "mean": mean,
    "square": square,
    "sqrt": sqrt,
    "neg": neg,
}


def primitive_forward(op: str, *inputs, **kwargs) -> Tensor:
    """Apply a primitive by name (dispatch table over ``PRIMITIVES``)."""
    if op not in PRIMITIVES:
        raise KeyError(f"unknown primitive: {op}")
    return PRIMITIVES[op](*inputs, **kwargs)


# ---------------------------------------------------------------------------
# Backward pass


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(t) into t.grad for every tensor reachable
    from the scalar ``output`` that has requires_grad.

    Gradients add onto existing .grad buffers; call zero_grad between
    optimizer steps.  A constant output (no grad path) is a no-op.

    The pass releases each record after applying its adjoint, so a graph
    supports one backward only.  Releasing matters: vjp closures hold the
    tensors they were built from, forming reference cycles that the cycle
    collector reclaims too slowly under training's allocation rate.
    """
    if output.data.shape != ():
        raise ShapeError(f"backward: output must be scalar, got shape {output.data.shape}")
    if not output.requires_grad:
        return

    # Iterative postorder over the records (graphs can be thousands deep).
    topo = []
    visited = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.record is not None:
            for parent in node.record.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

    if output.grad is None:
        output.grad = np.zeros_like(output.data)
    output.grad = output.grad + 1.0

    for node in reversed(topo):
        if node.record is None:
            continue
        grads = node.record.vjp(node.grad)
        for parent, g in zip(node.record.inputs, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g
        node.record = None


# ---------------------------------------------------------------------------
# Finite-difference verification


def grad_check(fn, point, eps: float = 1e-5) -> float:
    """Compare fn's reverse-mode gradient at ``point`` against central
    differences, sweeping every coordinate.

    Returns max over coordinates of |analytic - fd| / max(1, |analytic|).
    ``fn`` must map a Tensor to a scalar Tensor.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"grad_check: eps must be in (0, 1e-2], got {eps}")
    base = np.asarray(point, dtype=np.float64)

    x = Tensor(base.copy(), requires_grad=True)
    y = fn(x)
    if y.data.shape != ():
        raise ShapeError(f"grad_check: fn output must be scalar, got shape {y.data.shape}")
    if not np.isfinite(y.data):
        raise GradCheckError("grad_check: non-finite output at the base point")
    backward(y)
    analytic = x.grad if x.grad is not None else np.zeros_like(base)

    fd = np.zeros_like(base)
    flat_base = base.reshape(-1)
    for i in range(flat_base.size):
        for sign in (+1.0, -1.0):
            perturbed = flat_base.copy()
            perturbed[i] += sign * eps
            out = fn(Tensor(perturbed.reshape(base.shape)))
            if not np.isfinite(out.data):
                raise GradCheckError(f"grad_check: non-finite output at coordinate {i}")
            if sign > 0:
                hi = float(out.data)
            else:
                lo = float(out.data)
        fd.reshape(-1)[i] = (hi - lo) / (2.0 * eps)

    rel = np.abs(analytic - fd) / np.maximum(1.0, np.abs(analytic))
    return float(rel.max()) if rel.size else 0.0


def zero_grads(params) -> None:
    """Clear .grad on every tensor in a parameter mapping."""
    for t in params.values():
        t.zero_grad()
