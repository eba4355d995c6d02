"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every operation records its inputs and a gradient callback on the output
tensor, so the forward pass doubles as the tape.  ``backward`` walks the tape
in reverse topological order and accumulates gradients into every reachable
node.  Graphs are rebuilt on every forward pass (dynamic tape), which is what
an alternating two-objective training loop needs.

Conventions: images and maps are channels-first, ``(C, H, W)`` or
``(N, C, H, W)``; elementwise ops require equal shapes except that either
operand may be a scalar; no other broadcasting.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

LOG_FLOOR = 1e-12   # lower clamp for log arguments
NORM_FLOOR = 1e-12  # below this a vector norm counts as degenerate


class ShapeError(ValueError):
    """An operation received incompatible shapes; names the op and shapes."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = [tuple(int(d) for d in s) for s in shapes]
        msg = f"{op}: incompatible shapes " + " vs ".join(str(s) for s in self.shapes)
        super().__init__(msg)


class Tensor:
    """A float64 array plus its slot on the autodiff tape.

    ``parents`` are the input tensors of the op that produced this node,
    ``grad`` is filled by ``backward`` and has the same shape as ``data``.
    Leaf tensors (parameters, constants) have no parents.
    """

    def __init__(self, data, parents=(), op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.op = op
        self._push_grad = None      # closure distributing grad to parents
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # operator sugar over the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(node, g):
    if node.grad is None:
        node.grad = np.zeros_like(node.data)
    node.grad += g


def _topo_order(root):
    """Parents-before-children ordering of every node reachable from root."""
    order = []
    visited = {id(root)}
    stack = [(root, iter(root.parents))]
    while stack:
        node, parents = stack[-1]
        for parent in parents:
            if id(parent) not in visited:
                visited.add(id(parent))
                stack.append((parent, iter(parent.parents)))
                break
        else:
            order.append(node)
            stack.pop()
    return order


def backward(root: Tensor):
    """Populate ``grad`` of every node reachable from a scalar root.

    Raises if the root is not scalar-valued or if backward already ran on
    this root (the tape is consumed; rebuild the graph for another pass).
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.data.shape}")
    if root._backward_done:
        raise RuntimeError("backward: tape already consumed for this root; rebuild the graph")
    order = _topo_order(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._push_grad is not None:
            node._push_grad(node.grad)
    root._backward_done = True


def _check_elementwise(op, a, b):
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ShapeError(op, a.data.shape, b.data.shape)


def _fit(g, ref):
    """Collapse a gradient onto a scalar operand's shape; identity otherwise."""
    if g.shape == ref.shape:
        return g
    return np.sum(g).reshape(ref.shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    out = Tensor(a.data + b.data, (a, b), "add")

    def push(g):
        _accum(a, _fit(g, a.data))
        _accum(b, _fit(g, b.data))

    out._push_grad = push
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    out = Tensor(a.data - b.data, (a, b), "sub")

    def push(g):
        _accum(a, _fit(g, a.data))
        _accum(b, _fit(-g, b.data))

    out._push_grad = push
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)
    out = Tensor(a.data * b.data, (a, b), "mul")

    def push(g):
        _accum(a, _fit(g * b.data, a.data))
        _accum(b, _fit(g * a.data, b.data))

    out._push_grad = push
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError("matmul", a.data.shape, b.data.shape)
    out = Tensor(a.data @ b.data, (a, b), "matmul")

    def push(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._push_grad = push
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), (x,), "relu")

    def push(g):
        _accum(x, g * (x.data > 0.0))

    out._push_grad = push
    return out


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.where(x.data > 0.0, x.data, alpha * x.data), (x,), "leaky_relu")

    def push(g):
        _accum(x, g * np.where(x.data > 0.0, 1.0, alpha))

    out._push_grad = push
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    out = Tensor(s, (x,), "sigmoid")

    def push(g):
        _accum(x, g * s * (1.0 - s))

    out._push_grad = push
    return out


def softmax(x, axis: int) -> Tensor:
    """Numerically stable softmax over one axis; outputs sum to 1 per slice."""
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / np.sum(e, axis=axis, keepdims=True)
    out = Tensor(p, (x,), "softmax")

    def push(g):
        inner = np.sum(g * p, axis=axis, keepdims=True)
        _accum(x, p * (g - inner))

    out._push_grad = push
    return out


def log(x) -> Tensor:
    """Natural log with the argument clamped below at LOG_FLOOR.

    The clamp keeps cross-entropy finite on saturated probabilities; inside
    the clamped region the gradient is zero (the clamped value is constant).
    """
    x = as_tensor(x)
    clamped = np.maximum(x.data, LOG_FLOOR)
    out = Tensor(np.log(clamped), (x,), "log")

    def push(g):
        _accum(x, g * np.where(x.data > LOG_FLOOR, 1.0 / clamped, 0.0))

    out._push_grad = push
    return out


def sum(x) -> Tensor:  # noqa: A001 - numpy-style module namespace
    x = as_tensor(x)
    out = Tensor(np.sum(x.data), (x,), "sum")

    def push(g):
        _accum(x, np.full_like(x.data, float(g)))

    out._push_grad = push
    return out


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    out = Tensor(np.mean(x.data), (x,), "mean")

    def push(g):
        _accum(x, np.full_like(x.data, float(g) / n))

    out._push_grad = push
    return out


def upsample_nearest(x, factor: int) -> Tensor:
    """Nearest-neighbor upsampling of the last two axes by an integer factor."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeError("upsample_nearest", x.data.shape)
    f = int(factor)
    if f < 1:
        raise ValueError(f"upsample_nearest: factor must be >= 1, got {factor}")
    y = np.repeat(np.repeat(x.data, f, axis=-2), f, axis=-1)
    out = Tensor(y, (x,), "upsample_nearest")

    def push(g):
        s = x.data.shape
        blocks = g.reshape(s[:-2] + (s[-2], f, s[-1], f))
        _accum(x, blocks.sum(axis=(-3, -1)))

    out._push_grad = push
    return out


def flatten_concat(tensors) -> Tensor:
    """Flatten each input to 1-D and concatenate into one vector."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("flatten_concat: need at least one tensor")
    out = Tensor(np.concatenate([t.data.ravel() for t in ts]), tuple(ts), "flatten_concat")

    def push(g):
        offset = 0
        for t in ts:
            n = t.data.size
            _accum(t, g[offset:offset + n].reshape(t.data.shape))
            offset += n

    out._push_grad = push
    return out


def stop_gradient(x) -> Tensor:
    """Pass values through bit-identically; contribute zero gradient upstream."""
    x = as_tensor(x)
    return Tensor(x.data, (), "stop_gradient")


def cosine_similarity(a, b) -> Tensor:
    """Cosine similarity of two equal-length vectors, in [-1, 1].

    If either norm falls below NORM_FLOOR the result is 0 with its
    ``degenerate`` attribute set and a zero gradient.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ShapeError("cosine_similarity", a.data.shape, b.data.shape)
    na = np.linalg.norm(a.data)
    nb = np.linalg.norm(b.data)
    degenerate = na < NORM_FLOOR or nb < NORM_FLOOR
    if degenerate:
        value = 0.0
    else:
        value = float(np.clip(a.data @ b.data / (na * nb), -1.0, 1.0))
    out = Tensor(value, (a, b), "cosine_similarity")
    out.degenerate = degenerate

    def push(g):
        if degenerate:
            return
        gs = float(g)
        _accum(a, gs * (b.data / (na * nb) - value * a.data / (na * na)))
        _accum(b, gs * (a.data / (na * nb) - value * b.data / (nb * nb)))

    out._push_grad = push
    return out


def _conv_out_size(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, channels-first.

    ``x`` is ``(N, Cin, H, W)`` or ``(Cin, H, W)``; ``kernel`` is
    ``(Cout, Cin, kh, kw)``; optional ``bias`` is ``(Cout,)``.  Implemented as
    im2col + one matmul; the column matrix is kept for the backward pass.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    squeeze = x.data.ndim == 3
    x4 = x.data[None] if squeeze else x.data
    if x4.ndim != 4 or kernel.data.ndim != 4 or x4.shape[1] != kernel.data.shape[1]:
        raise ShapeError("conv2d", x.data.shape, kernel.data.shape)
    n, cin, h, w = x4.shape
    cout, _, kh, kw = kernel.data.shape
    s, p = int(stride), int(padding)
    hout, wout = _conv_out_size(h, kh, s, p), _conv_out_size(w, kw, s, p)
    if hout < 1 or wout < 1:
        raise ShapeError("conv2d", x.data.shape, kernel.data.shape)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (cout,):
            raise ShapeError("conv2d(bias)", bias.data.shape, (cout,))

    xp = np.pad(x4, ((0, 0), (0, 0), (p, p), (p, p))) if p else x4
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::s, ::s]                       # (N,Cin,Hout,Wout,kh,kw)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(n, hout * wout, cin * kh * kw)
    kflat = kernel.data.reshape(cout, cin * kh * kw)
    y = cols @ kflat.T                                      # (N, Hout*Wout, Cout)
    y = y.transpose(0, 2, 1).reshape(n, cout, hout, wout)
    if bias is not None:
        y = y + bias.data.reshape(1, cout, 1, 1)
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = Tensor(y[0] if squeeze else y, parents, "conv2d")

    def push(g):
        g4 = g[None] if squeeze else g
        gflat = g4.reshape(n, cout, hout * wout).transpose(0, 2, 1)  # (N,HW,Cout)
        _accum(kernel, np.tensordot(gflat, cols, axes=([0, 1], [0, 1])).reshape(kernel.data.shape))
        if bias is not None:
            _accum(bias, g4.sum(axis=(0, 2, 3)))
        gcols = (gflat @ kflat).reshape(n, hout, wout, cin, kh, kw)
        gxp = np.zeros((n, cin, h + 2 * p, w + 2 * p))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + s * hout:s, j:j + s * wout:s] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p:p + h, p:p + w] if p else gxp
        _accum(x, gx[0] if squeeze else gx)

    out._push_grad = push
    return out


def assert_finite(t: Tensor, what: str = "tensor"):
    """Raise if any entry is NaN/Inf; used by the trainer's divergence guard."""
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"{what}: non-finite values encountered")
