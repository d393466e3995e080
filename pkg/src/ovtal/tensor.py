"""Dense tensors with define-by-run reverse-mode automatic differentiation.

Values and gradients are stored as float64 numpy arrays. Every primitive
checks its output for NaN/inf and records a vector-Jacobian closure on the
result, so calling ``backward()`` on a scalar loss fills ``grad`` on every
reachable tensor that has ``requires_grad`` set. Graphs are rebuilt on each
forward pass; gradients accumulate additively until ``zero_grad()``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "tensor",
    "concat",
    "maximum",
    "minimum",
]


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _vjp=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, _op)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp
        self._op = _op

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into node.grad for every tracked node."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        # iterative post-order topological sort
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        flowing = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                pg = np.asarray(pg, dtype=np.float64)
                prev = flowing.get(id(parent))
                flowing[id(parent)] = pg.copy() if prev is None else prev + pg

    # -- construction helper ---------------------------------------------

    @staticmethod
    def _from_op(data, parents, vjp, op):
        tracked = any(p.requires_grad or p._vjp is not None for p in parents)
        return Tensor(data, requires_grad=tracked, _parents=tuple(parents), _vjp=vjp if tracked else None, _op=op)

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = self.data + other.data
        a_shape, b_shape = self.data.shape, other.data.shape
        return Tensor._from_op(
            out, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
            "add")

    def __mul__(self, other):
        other = _as_tensor(other)
        out = self.data * other.data
        a, b = self, other
        return Tensor._from_op(
            out, (a, b),
            lambda g: (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)),
            "mul")

    def __sub__(self, other):
        other = _as_tensor(other)
        out = self.data - other.data
        a_shape, b_shape = self.data.shape, other.data.shape
        return Tensor._from_op(
            out, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
            "sub")

    def __truediv__(self, other):
        other = _as_tensor(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.data / other.data
        _check_finite(out, "div")
        a, b = self, other
        return Tensor._from_op(
            out, (a, b),
            lambda g: (_unbroadcast(g / b.data, a.data.shape),
                       _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
            "div")

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __radd__(self, other):
        return _as_tensor(other) + self

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __rmul__(self, other):
        return _as_tensor(other) * self

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, exponent: float):
        p = float(exponent)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.data ** p
        _check_finite(out, "pow")
        base = self.data
        return Tensor._from_op(out, (self,), lambda g: (g * p * base ** (p - 1.0),), "pow")

    # -- transcendental ----------------------------------------------------

    def log(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(self.data)
        _check_finite(out, "log")
        return Tensor._from_op(out, (self,), lambda g: (g / self.data,), "log")

    def exp(self):
        with np.errstate(over="ignore"):
            out = np.exp(self.data)
        _check_finite(out, "exp")
        return Tensor._from_op(out, (self,), lambda g: (g * out,), "exp")

    def sqrt(self):
        with np.errstate(invalid="ignore"):
            out = np.sqrt(self.data)
        _check_finite(out, "sqrt")
        return Tensor._from_op(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    # -- nonlinearities ----------------------------------------------------

    def relu(self):
        mask = self.data > 0.0
        return Tensor._from_op(np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,), "relu")

    def sigmoid(self):
        out = _sigmoid(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def logsigmoid(self):
        # log sigmoid(x) = -softplus(-x), computed without overflow
        x = self.data
        out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))
        s_neg = _sigmoid(-x)
        return Tensor._from_op(out, (self,), lambda g: (g * s_neg,), "logsigmoid")

    def softmax(self, axis: int = -1, temperature: float = 1.0):
        if temperature <= 0.0:
            raise ShapeError("softmax temperature must be > 0")
        z = self.data / temperature
        z = z - z.max(axis=axis, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=axis, keepdims=True)

        def vjp(g):
            inner = (g * out).sum(axis=axis, keepdims=True)
            return ((g - inner) * out / temperature,)

        return Tensor._from_op(out, (self,), vjp, "softmax")

    # -- linear algebra ------------------------------------------------------

    def matmul(self, other: "Tensor"):
        other = _as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(f"matmul shapes {self.data.shape} x {other.data.shape} do not conform")
        out = self.data @ other.data
        _check_finite(out, "matmul")
        a, b = self, other
        return Tensor._from_op(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")

    def __matmul__(self, other):
        return self.matmul(other)

    def affine(self, weight: "Tensor", bias: "Tensor"):
        """Matrix product plus a broadcast bias row."""
        return self.matmul(weight) + bias

    def conv1d(self, weight: "Tensor", bias: "Tensor" = None, stride: int = 1, padding: int = 0):
        """1-D convolution over axis 0. x: (S, Cin), weight: (K, Cin, Cout)."""
        if self.data.ndim != 2 or weight.data.ndim != 3:
            raise ShapeError("conv1d expects x of shape (S, Cin) and weight (K, Cin, Cout)")
        S, cin = self.data.shape
        K, cin_w, cout = weight.data.shape
        if cin != cin_w:
            raise ShapeError(f"conv1d channel mismatch: input {cin}, weight {cin_w}")
        if stride < 1 or padding < 0:
            raise ShapeError("conv1d needs stride >= 1 and padding >= 0")
        if S + 2 * padding < K:
            raise ShapeError("conv1d input shorter than kernel")
        xp = np.pad(self.data, ((padding, padding), (0, 0)))
        windows = np.lib.stride_tricks.sliding_window_view(xp, K, axis=0)  # (T, Cin, K)
        windows = windows.transpose(0, 2, 1)[::stride]  # (S_out, K, Cin)
        s_out = windows.shape[0]
        cols = windows.reshape(s_out, K * cin)
        w2 = weight.data.reshape(K * cin, cout)
        out = cols @ w2
        if bias is not None:
            out = out + bias.data
        _check_finite(out, "conv1d")
        parents = (self, weight) if bias is None else (self, weight, bias)

        def vjp(g):
            dcols = (g @ w2.T).reshape(s_out, K, cin)
            dxp = np.zeros_like(xp)
            for k in range(K):
                dxp[k:k + stride * s_out:stride] += dcols[:, k, :]
            dx = dxp[padding:padding + S] if padding else dxp
            dw = (cols.T @ g).reshape(K, cin, cout)
            if bias is None:
                return dx, dw
            return dx, dw, g.sum(axis=0)

        return Tensor._from_op(out, parents, vjp, "conv1d")

    def layer_norm(self, gain: "Tensor", bias: "Tensor", eps: float = 1e-5):
        """Normalize the last axis to zero mean / unit variance, then scale and shift."""
        x = self.data
        if gain.data.shape != (x.shape[-1],) or bias.data.shape != (x.shape[-1],):
            raise ShapeError("layer_norm gain/bias must match the last axis")
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv
        out = xhat * gain.data + bias.data
        _check_finite(out, "layer_norm")

        def vjp(g):
            dxhat = g * gain.data
            m = dxhat.mean(axis=-1, keepdims=True)
            mx = (dxhat * xhat).mean(axis=-1, keepdims=True)
            dx = (dxhat - m - xhat * mx) * inv
            axes = tuple(range(g.ndim - 1))
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return Tensor._from_op(out, (self, gain, bias), vjp, "layer_norm")

    def max_down2(self):
        """Stride-2 temporal max-downsampling along axis 0; output length ceil(S/2)."""
        x = self.data
        if x.ndim != 2:
            raise ShapeError("max_down2 expects a (S, C) tensor")
        S, C = x.shape
        s_out = (S + 1) // 2
        if S % 2:
            xp = np.concatenate([x, np.full((1, C), -np.inf)], axis=0)
        else:
            xp = x
        pairs = xp.reshape(s_out, 2, C)
        arg = pairs.argmax(axis=1)  # ties resolve to the first element
        out = np.take_along_axis(pairs, arg[:, None, :], axis=1)[:, 0, :]
        _check_finite(out, "max_down2")

        def vjp(g):
            dxp = np.zeros((s_out, 2, C))
            np.put_along_axis(dxp, arg[:, None, :], g[:, None, :], axis=1)
            dxp = dxp.reshape(2 * s_out, C)
            return (dxp[:S],)

        return Tensor._from_op(out, (self,), vjp, "max_down2")

    # -- reductions / reshaping -----------------------------------------------

    def sum(self, axis=None):
        out = self.data.sum(axis=axis)
        shape = self.data.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

        return Tensor._from_op(out, (self,), vjp, "sum")

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor._from_op(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),), "reshape")

    def index_select(self, indices):
        """Gather rows along axis 0."""
        idx = np.asarray(indices, dtype=np.intp)
        out = self.data[idx]
        shape = self.data.shape

        def vjp(g):
            dx = np.zeros(shape)
            np.add.at(dx, idx, g)
            return (dx,)

        return Tensor._from_op(out, (self,), vjp, "index_select")

    def col(self, j: int):
        """Extract column j of a 2-D tensor as a 1-D tensor."""
        if self.data.ndim != 2:
            raise ShapeError("col() expects a 2-D tensor")
        out = self.data[:, j].copy()
        shape = self.data.shape

        def vjp(g):
            dx = np.zeros(shape)
            dx[:, j] = g
            return (dx,)

        return Tensor._from_op(out, (self,), vjp, "col")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tuple(tensors), vjp, "concat")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise maximum; at ties the gradient routes to the first operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)
    return Tensor._from_op(
        out, (a, b),
        lambda g: (_unbroadcast(g * take_a, a.data.shape), _unbroadcast(g * ~take_a, b.data.shape)),
        "maximum")


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return Tensor._from_op(
        out, (a, b),
        lambda g: (_unbroadcast(g * take_a, a.data.shape), _unbroadcast(g * ~take_a, b.data.shape)),
        "minimum")
