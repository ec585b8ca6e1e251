"""Dense tensors with a taped reverse-mode gradient engine.

Values are numpy arrays (float64 by default). Every differentiable
operation that touches a grad-tracked tensor records a node holding its
parents and a vector-Jacobian closure; ``Tensor.backward()`` replays the
recorded graph in reverse topological order and accumulates gradients on
the tracked leaves. The tape lives on the result tensors themselves, so
independent forward passes never share state and are safe to run
concurrently.

Summation order is fixed (row-major numpy reductions) so results are
deterministic and directly comparable against naive-loop oracles.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Switch the dtype used for new tensors (float64 or float32)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ContractError(f"unsupported tensor dtype {dt}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """N-dimensional real array participating in the differentiation graph.

    ``requires_grad=True`` marks a leaf whose gradient is wanted;
    tensors produced by operations track gradients automatically when
    any input does.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- internal node constructor -------------------------------------

    @staticmethod
    def _from_op(data, parents, vjp):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out._parents = ()
            out._vjp = None
        return out

    # -- basic protocol --------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad})"

    # -- backward pass ----------------------------------------------------

    def backward(self) -> None:
        """Reverse sweep from this scalar; accumulates ``.grad`` on tracked leaves.

        The recorded tape is freed afterwards, one backward per forward.
        """
        if self.size != 1:
            raise ContractError(
                f"backward seed must be scalar, got shape {tuple(self.shape)}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
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

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is not None:
                parent_grads = node._vjp(g)
                for p, pg in zip(node._parents, parent_grads):
                    if pg is None or not p.requires_grad:
                        continue
                    acc = grads.get(id(p))
                    grads[id(p)] = pg if acc is None else acc + pg
                # free the tape as we go
                node._parents = ()
                node._vjp = None
            elif node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g

    # -- operator sugar -----------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes):
        return transpose(self, axes)


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return Tensor._from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return Tensor._from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return Tensor._from_op(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return Tensor._from_op(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = astensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = astensor(a)
    e = float(exponent)
    out = a.data**e
    return Tensor._from_op(out, (a,), lambda g: (g * e * a.data ** (e - 1.0),))


def exp(a) -> Tensor:
    a = astensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = astensor(a)
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = astensor(a)
    out = np.sqrt(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * 0.5 / out,))


def sin(a) -> Tensor:
    a = astensor(a)
    return Tensor._from_op(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a) -> Tensor:
    a = astensor(a)
    return Tensor._from_op(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def absolute(a) -> Tensor:
    # subgradient at 0 is taken as 0
    a = astensor(a)
    return Tensor._from_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def relu(a) -> Tensor:
    a = astensor(a)
    return Tensor._from_op(
        np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),)
    )


def sigmoid(a) -> Tensor:
    a = astensor(a)
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return Tensor._from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """log(1 + e^x), computed stably; derivative is the sigmoid."""
    a = astensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return Tensor._from_op(out, (a,), lambda g: (g * sig,))


def silu(a) -> Tensor:
    a = astensor(a)
    return mul(a, sigmoid(a))


def clamp(a, lo: float, hi: float) -> Tensor:
    a = astensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)
    return Tensor._from_op(out, (a,), lambda g: (g * inside,))


def atan2(y, x, grad_eps: float = 0.0) -> Tensor:
    """Four-quadrant arctangent in (-pi, pi].

    The gradient at the origin (and, with ``grad_eps`` > 0, on near-zero
    radii) is defined as 0: the angle is meaningless there.
    """
    y, x = astensor(y), astensor(x)
    out = np.arctan2(y.data, x.data)
    r2 = y.data * y.data + x.data * x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(r2 > grad_eps * grad_eps, 1.0 / r2, 0.0)
    inv = np.where(np.isfinite(inv), inv, 0.0)
    return Tensor._from_op(
        out,
        (y, x),
        lambda g: (g * x.data * inv, -g * y.data * inv),
    )


def hypot(x, y) -> Tensor:
    """sqrt(x^2 + y^2) with gradient 0 where the radius is exactly 0."""
    x, y = astensor(x), astensor(y)
    out = np.hypot(x.data, y.data)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(out > 0, 1.0 / out, 0.0)
    return Tensor._from_op(
        out,
        (x, y),
        lambda g: (g * x.data * inv, g * y.data * inv),
    )


# -- reductions -----------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = astensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = astensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if a.ndim else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy() / count,)

    return Tensor._from_op(np.asarray(out), (a,), vjp)


# -- shape manipulation ----------------------------------------------------


def reshape(a, *shape) -> Tensor:
    a = astensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.data.reshape(shape)
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = astensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._from_op(
        a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),)
    )


def swap_last(a) -> Tensor:
    """Transpose the trailing two axes (matrix transpose for stacks)."""
    a = astensor(a)
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def concat(tensors, axis: int) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tensors, vjp)


def index(a, key) -> Tensor:
    """Basic indexing (ints/slices); gradient scatters back into place."""
    a = astensor(a)
    out = a.data[key]
    if np.isscalar(out) or out.ndim == 0:
        out = np.asarray(out)

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return Tensor._from_op(out.copy(), (a,), vjp)


def take_tokens(a, perm) -> Tensor:
    """Per-batch gather along the token axis: out[b, t] = a[b, perm[b, t]].

    ``perm`` must be a permutation per batch row, so the backward pass is
    the inverse scatter.
    """
    a = astensor(a)
    perm = np.asarray(perm)
    if perm.shape != a.shape[:2]:
        raise DimensionError(
            f"permutation shape {perm.shape} does not match tokens {a.shape[:2]}"
        )
    rows = np.arange(a.shape[0])[:, None]
    out = a.data[rows, perm]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[rows, perm] = g
        return (ga,)

    return Tensor._from_op(out, (a,), vjp)


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs 2-d operands, got {tuple(a.shape)} and {tuple(b.shape)}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {tuple(a.shape)} vs {tuple(b.shape)}"
        )
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return Tensor._from_op(out, (a, b), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``; rows sum to one."""
    a = astensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._from_op(out, (a,), vjp)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize each token over the trailing channel axis, then affine."""
    x, gamma, beta = astensor(x), astensor(gamma), astensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"layer_norm affine shapes {tuple(gamma.shape)}/{tuple(beta.shape)} "
            f"do not match channel count {c}"
        )
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gamma), beta)


# -- convolution and sub-pixel ops ------------------------------------------


def conv2d(x, k, pad: int) -> Tensor:
    """Cross-correlation of NCHW input with OIHW kernel, zero padding.

    Odd kernels only; ``pad=(kh-1)//2`` keeps the spatial size.
    """
    x, k = astensor(x), astensor(k)
    if x.ndim != 4 or k.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-d input and kernel, got {tuple(x.shape)} and {tuple(k.shape)}"
        )
    bsz, cin, h, w = x.shape
    cout, kin, kh, kw = k.shape
    if kin != cin:
        raise DimensionError(
            f"conv2d channel mismatch: input has {cin}, kernel expects {kin}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if pad < 0:
        raise ContractError("conv2d pad must be non-negative")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    out = np.einsum("bchwuv,ocuv->bohw", win, k.data, optimize=True)

    def vjp(g):
        gk = np.einsum("bchwuv,bohw->ocuv", win, g, optimize=True)
        gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        gwin = np.lib.stride_tricks.sliding_window_view(gp, (kh, kw), axis=(2, 3))
        kflip = k.data[:, :, ::-1, ::-1]
        gxp = np.einsum("bohwuv,ocuv->bchw", gwin, kflip, optimize=True)
        gx = gxp[:, :, pad : pad + h, pad : pad + w]
        return (gx, gk)

    return Tensor._from_op(out, (x, k), vjp)


def _shuffle_fwd(d, r):
    b, crr, h, w = d.shape
    c = crr // (r * r)
    return (
        d.reshape(b, c, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, c, h * r, w * r)
    )


def _unshuffle_fwd(d, r):
    b, c, hr, wr = d.shape
    h, w = hr // r, wr // r
    return (
        d.reshape(b, c, h, r, w, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, c * r * r, h, w)
    )


def pixel_shuffle(x, r: int) -> Tensor:
    """Sub-pixel rearrangement: (B, C*r^2, H, W) -> (B, C, rH, rW)."""
    x = astensor(x)
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects 4-d input, got {tuple(x.shape)}")
    if x.shape[1] % (r * r) != 0:
        raise DimensionError(
            f"pixel_shuffle channels {x.shape[1]} not divisible by r^2={r * r}"
        )
    return Tensor._from_op(
        _shuffle_fwd(x.data, r), (x,), lambda g: (_unshuffle_fwd(g, r),)
    )


def pixel_unshuffle(x, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    x = astensor(x)
    if x.ndim != 4:
        raise DimensionError(f"pixel_unshuffle expects 4-d input, got {tuple(x.shape)}")
    if x.shape[2] % r != 0 or x.shape[3] % r != 0:
        raise DimensionError(
            f"pixel_unshuffle spatial extents {x.shape[2:]} not divisible by r={r}"
        )
    return Tensor._from_op(
        _unshuffle_fwd(x.data, r), (x,), lambda g: (_shuffle_fwd(g, r),)
    )


def separable_map(x, rows, cols) -> Tensor:
    """Apply fixed row/column weight matrices over the trailing two axes.

    Computes ``rows @ x @ cols.T`` for every leading slice; used by the
    resampling kernels. ``rows`` and ``cols`` are constants, so the only
    gradient path is through ``x``.
    """
    x = astensor(x)
    rows = np.asarray(rows, dtype=x.data.dtype)
    cols = np.asarray(cols, dtype=x.data.dtype)
    if rows.shape[1] != x.shape[-2] or cols.shape[1] != x.shape[-1]:
        raise DimensionError(
            f"separable_map weights {rows.shape}/{cols.shape} do not fit input {tuple(x.shape)}"
        )
    tmp = np.einsum("oh,...hw->...ow", rows, x.data, optimize=True)
    out = np.einsum("pw,...ow->...op", cols, tmp, optimize=True)

    def vjp(g):
        # dx[..., h, w] = sum_{o,p} rows[o, h] * cols[p, w] * g[..., o, p]
        t = np.einsum("oh,...op->...hp", rows, g, optimize=True)
        return (np.einsum("pw,...hp->...hw", cols, t, optimize=True),)

    return Tensor._from_op(out, (x,), vjp)


# -- gradient verification ---------------------------------------------------


def finite_diff_grad(f, x: Tensor, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one tensor.

    ``f`` receives a plain (non-tracked) tensor and must return a scalar
    tensor or float. O(2 * x.size) evaluations.
    """
    if h <= 0:
        raise ContractError("finite_diff_grad step h must be positive")
    base = x.data.astype(np.float64)
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bumped = base.copy()
        bumped[idx] = base[idx] + h
        fp = f(Tensor(bumped))
        bumped[idx] = base[idx] - h
        fm = f(Tensor(bumped))
        fp = fp.item() if isinstance(fp, Tensor) else float(fp)
        fm = fm.item() if isinstance(fm, Tensor) else float(fm)
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad
