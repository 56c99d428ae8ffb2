"""Minimal reverse-mode autodiff engine on numpy arrays.

Supports exactly the primitives the network needs: 2D convolution,
2x2 max pooling, nearest-neighbor upsampling, elementwise math,
channel concatenation, axis reductions and a per-position softmax
cross-entropy loss. Values are float64 so finite-difference gradient
checks hold at tight tolerances.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GraphError(RuntimeError):
    """Backward was requested on a tensor outside any recorded computation."""


class Tensor:
    """Dense n-d array participating in forward compute and gradient flow.

    The computation record is the implicit DAG formed by ``_parents``
    links; ``backward`` replays it once in reverse topological order and
    accumulates adjoints additively into every ``requires_grad`` leaf.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tensor values must be finite")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        Repeated calls without ``zero_grad`` keep adding. Only valid on
        a scalar produced by recorded operations.
        """
        if not self._parents:
            raise GraphError("backward called on a tensor not produced by any recorded operation")
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar, got shape {self.data.shape}")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.accumulate_grad(g)
            if node._backward is not None:
                for parent, contrib in node._backward(g):
                    if id(parent) in grads:
                        grads[id(parent)] += contrib
                    else:
                        grads[id(parent)] = np.array(contrib, dtype=np.float64, copy=True)


def _needs_graph(*tensors):
    return any(t.requires_grad or t._parents for t in tensors)


def _result(data, parents, backward):
    if _needs_graph(*parents):
        return Tensor(data, _parents=parents, _backward=backward)
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# ---------------------------------------------------------------------------
# elementwise primitives

def add(a, b):
    _check_broadcast(a, b)

    def backward(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    _check_broadcast(a, b)

    def backward(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape))]

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    _check_broadcast(a, b)

    def backward(g):
        return [(a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape))]

    return _result(a.data * b.data, (a, b), backward)


def div(a, b):
    _check_broadcast(a, b)

    def backward(g):
        return [(a, _unbroadcast(g / b.data, a.shape)),
                (b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))]

    return _result(a.data / b.data, (a, b), backward)


def relu(x):
    mask = x.data > 0  # derivative at exactly 0 is defined as 0

    def backward(g):
        return [(x, g * mask)]

    return _result(np.maximum(x.data, 0.0), (x,), backward)


def sigmoid(x):
    out = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        return [(x, g * out * (1.0 - out))]

    return _result(out, (x,), backward)


def power(x, p):
    """Elementwise x**p for a fixed exponent p."""
    out = x.data ** p

    def backward(g):
        return [(x, g * p * x.data ** (p - 1))]

    return _result(out, (x,), backward)


def scale(x, c):
    """Multiply by a fixed scalar c."""

    def backward(g):
        return [(x, g * c)]

    return _result(x.data * c, (x,), backward)


def add_scalar(x, c):
    def backward(g):
        return [(x, g)]

    return _result(x.data + c, (x,), backward)


# ---------------------------------------------------------------------------
# structural ops

def concat(tensors, axis=1):
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                i != axis and t.shape[i] != ref[i] for i in range(len(ref))):
            raise ShapeError(f"concat along axis {axis}: shape {t.shape} incompatible with {ref}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        return list(zip(tensors, pieces))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def tensor_sum(x):
    """Sum of all elements, as a scalar tensor."""

    def backward(g):
        return [(x, np.full_like(x.data, float(g)))]

    return _result(x.data.sum(), (x,), backward)


def mean_all(x):
    n = x.data.size

    def backward(g):
        return [(x, np.full_like(x.data, float(g) / n))]

    return _result(x.data.mean(), (x,), backward)


def _reduce_extreme(x, axes, mode):
    axes = tuple(sorted(a % x.data.ndim for a in axes))
    kept = tuple(a for a in range(x.data.ndim) if a not in axes)
    perm = kept + axes
    moved = x.data.transpose(perm)
    kshape = moved.shape[:len(kept)]
    flat = moved.reshape(int(np.prod(kshape) or 1), -1)
    idx = flat.argmax(axis=1) if mode == "max" else flat.argmin(axis=1)
    vals = flat[np.arange(flat.shape[0]), idx]
    out_shape = tuple(1 if a in axes else x.data.shape[a] for a in range(x.data.ndim))

    def backward(g):
        gx_flat = np.zeros_like(flat)
        gx_flat[np.arange(flat.shape[0]), idx] = g.reshape(-1)
        gx = gx_flat.reshape(moved.shape).transpose(np.argsort(perm))
        return [(x, gx)]

    return _result(vals.reshape(out_shape), (x,), backward)


def reduce_max(x, axes):
    """Max over ``axes`` (keepdims); gradient routes to the first argmax."""
    return _reduce_extreme(x, axes, "max")


def reduce_min(x, axes):
    """Min over ``axes`` (keepdims); gradient routes to the first argmin."""
    return _reduce_extreme(x, axes, "min")


# ---------------------------------------------------------------------------
# spatial ops

def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def _im2col(x, kh, kw, sh, sw, ph, pw):
    n, c, h, w = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols, x_shape, kh, kw, sh, sw, ph, pw, ho, wo):
    n, c, h, w = x_shape
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += cols[:, :, i, j]
    return xp[:, :, ph:ph + h, pw:pw + w]


def conv2d(x, kernels, bias, stride=1, padding=0):
    """Cross-correlation with zero padding: x [N,Cin,H,W], kernels [Cout,Cin,kh,kw]."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d input must be 4-d [N,C,H,W], got {x.shape}")
    if kernels.data.ndim != 4:
        raise ShapeError(f"conv2d kernels must be 4-d [Cout,Cin,kh,kw], got {kernels.shape}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernels.shape
    if kcin != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {cin} channels, kernels expect {kcin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias must have shape ({cout},), got {bias.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} exceeds padded input {h + 2 * ph}x{w + 2 * pw}")

    cols, ho, wo = _im2col(x.data, kh, kw, sh, sw, ph, pw)
    wmat = kernels.data.reshape(cout, cin * kh * kw)
    out = np.einsum("ok,nkp->nop", wmat, cols, optimize=True)
    out += bias.data[None, :, None]
    out = out.reshape(n, cout, ho, wo)

    def backward(g):
        gmat = g.reshape(n, cout, ho * wo)
        gw = np.einsum("nop,nkp->ok", gmat, cols, optimize=True).reshape(kernels.shape)
        gb = gmat.sum(axis=(0, 2))
        gcols = np.einsum("ok,nop->nkp", wmat, gmat, optimize=True)
        gx = _col2im(gcols, x.data.shape, kh, kw, sh, sw, ph, pw, ho, wo)
        return [(x, gx), (kernels, gw), (bias, gb)]

    return _result(out, (x, kernels, bias), backward)


def maxpool2d(x):
    """2x2 max pooling; on ties the gradient goes to the first window cell in row-major order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial extents, got {h}x{w}")
    windows = (x.data.reshape(n, c, h // 2, 2, w // 2, 2)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, h // 2, w // 2, 4))
    idx = windows.argmax(axis=-1)  # argmax returns the first maximum
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = (gw.reshape(n, c, h // 2, w // 2, 2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, w))
        return [(x, gx)]

    return _result(out, (x,), backward)


def upsample2d(x):
    """Nearest-neighbor 2x upsampling; gradient of each input cell sums its 4 duplicates."""
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        gx = g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
        return [(x, gx)]

    return _result(out, (x,), backward)


# ---------------------------------------------------------------------------
# loss

def softmax_crossentropy(logits, targets):
    """Per-position softmax NLL averaged over N*H*W positions.

    ``targets`` is an integer [N,H,W] map of 0-based class indices.
    """
    if logits.data.ndim != 4:
        raise ShapeError(f"logits must be 4-d [N,C,H,W], got {logits.shape}")
    targets = np.asarray(targets)
    n, c, h, w = logits.shape
    if targets.shape != (n, h, w):
        raise ShapeError(f"targets must have shape {(n, h, w)}, got {targets.shape}")
    if targets.min() < 0 or targets.max() >= c:
        raise ValueError(f"target class out of range [0, {c - 1}]")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse  # [N,C,H,W]
    picked = np.take_along_axis(logp, targets[:, None], axis=1)[:, 0]
    count = n * h * w
    loss = -picked.sum() / count

    def backward(g):
        softmax = np.exp(logp)
        onehot = np.zeros_like(softmax)
        np.put_along_axis(onehot, targets[:, None], 1.0, axis=1)
        return [(logits, float(g) * (softmax - onehot) / count)]

    return _result(loss, (logits,), backward)
