"""Gated diagonal recurrence and everything wrapped around it.

The core primitive runs, per batch row and channel, the scalar
recurrence

    h[0] = 0
    h[t] = a[t] * h[t-1] + b[t] * x[t]
    y[t] = c[t] * h[t]

Nothing mixes channels or batch rows. Rather than taping 3N elementwise
nodes, the scan is one node with a hand-derived adjoint: with G the
cotangent of y and lam[t] = dL/dh[t],

    lam[t] = G[t] * c[t] + lam[t+1] * a[t+1]      (zero past the end)
    dc[t] = G[t] * h[t]
    da[t] = lam[t] * h[t-1]
    db[t] = lam[t] * x[t]
    dx[t] = lam[t] * b[t]

so backward is O(N) like forward. Causality of the bare recurrence is
structural: y[t] never reads x[s] for s > t, hence dy[t]/dx[s] is
exactly zero there. The only way later tokens influence earlier outputs
is through the fused prompt added to the output gate, which is the point
of the whole construction.

On top of the primitive: derivation of the per-step gates from a packed
projection, the semantic token ordering, and a gradient-based reach
probe used to demonstrate the causal/non-causal dichotomy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, astensor, exp, matmul, neg, softplus, take_tokens


def gated_recurrence(x, a, b, c, trace: dict | None = None) -> Tensor:
    """The raw scan: all operands (B, N, C), returns y of the same shape.

    Passing a dict as ``trace`` stores copies of the state trajectory
    ``h`` and the gated output ``y`` for inspection.
    """
    x, a, b, c = astensor(x), astensor(a), astensor(b), astensor(c)
    if x.ndim != 3:
        raise DimensionError(f"scan expects (B, N, C) operands, got {tuple(x.shape)}")
    for name, t in (("a", a), ("b", b), ("c", c)):
        if t.shape != x.shape:
            raise DimensionError(
                f"scan operand {name} has shape {tuple(t.shape)}, input is {tuple(x.shape)}"
            )
    bsz, n, ch = x.shape

    h = np.empty_like(x.data)
    prev = np.zeros((bsz, ch), dtype=x.data.dtype)
    for t in range(n):
        prev = a.data[:, t] * prev + b.data[:, t] * x.data[:, t]
        h[:, t] = prev
    y = c.data * h
    if trace is not None:
        trace["h"] = h.copy()
        trace["y"] = y.copy()

    def vjp(g):
        lam = np.zeros((bsz, ch), dtype=x.data.dtype)
        dx = np.empty_like(x.data)
        da = np.empty_like(x.data)
        db = np.empty_like(x.data)
        for t in range(n - 1, -1, -1):
            lam = g[:, t] * c.data[:, t] + lam
            h_prev = h[:, t - 1] if t > 0 else 0.0
            da[:, t] = lam * h_prev
            db[:, t] = lam * x.data[:, t]
            dx[:, t] = lam * b.data[:, t]
            lam = lam * a.data[:, t]
        dc = g * h
        return (dx, da, db, dc)

    return Tensor._from_op(y, (x, a, b, c), vjp)


# -- gate derivation ---------------------------------------------------


@dataclass
class SsmParams:
    """Per-token scan gates, each (B, N, C).

    ``a_decay`` is the discrete state multiplier; under the default zoh
    parameterization it lies in (0, 1) so the recurrence is a stable
    leaky accumulator.
    """

    delta: Tensor
    b_in: Tensor
    c_raw: Tensor
    a_decay: Tensor


def derive_ssm_params(
    x_in: Tensor,
    channels: int,
    pool_size: int,
    *,
    a_log: Tensor | None = None,
    w_delta: Tensor | None = None,
    b_delta: Tensor | None = None,
    mode: str = "zoh",
):
    """Split the packed projection into scan gates plus router logits.

    Channel layout of ``x_in`` is [delta | b_in | c_raw | router], sizes
    C, C, C, T. The timescale delta goes through a softplus so it is
    always positive. Two discretizations are supported:

    - ``zoh``: a_decay = exp(delta * A) with A = -exp(a_log) learned per
      channel, which keeps a_decay in (0, 1) for any delta > 0.
    - ``direct``: a_decay = -exp(linear(delta)), the multiplier used as
      produced. It is negative and unbounded below, so stability is the
      caller's problem; exposed as a config choice, not the default.

    Returns (SsmParams, router_logits).
    """
    x_in = astensor(x_in)
    want = 3 * channels + pool_size
    if x_in.ndim != 3 or x_in.shape[-1] != want:
        raise DimensionError(
            f"packed projection has {x_in.shape[-1] if x_in.ndim == 3 else x_in.shape} "
            f"channels, expected 3C+T = {want}"
        )
    c = channels
    delta = softplus(x_in[..., :c])
    b_in = x_in[..., c : 2 * c]
    c_raw = x_in[..., 2 * c : 3 * c]
    logits = x_in[..., 3 * c :]

    if mode == "zoh":
        if a_log is None:
            raise ContractError("zoh mode needs the per-channel a_log parameter")
        a_decay = exp(delta * neg(exp(a_log)))
    elif mode == "direct":
        if w_delta is None or b_delta is None:
            raise ContractError("direct mode needs the delta projection weights")
        a_decay = neg(exp(matmul(delta, w_delta) + b_delta))
    else:
        raise ConfigError(f"unknown discretization mode {mode!r}")
    return SsmParams(delta=delta, b_in=b_in, c_raw=c_raw, a_decay=a_decay), logits


def stable_a_log_init(target: float = 0.9) -> float:
    """a_log value giving a_decay = target at the softplus(0) timescale."""
    if not 0 < target < 1:
        raise ContractError("decay target must be in (0, 1)")
    return float(np.log(-np.log(target) / np.log(2.0)))


# -- semantic ordering --------------------------------------------------


@dataclass
class SemanticOrder:
    """A per-batch-row token permutation and its inverse."""

    perm: np.ndarray
    inv_perm: np.ndarray


def identity_order(bsz: int, n: int) -> SemanticOrder:
    perm = np.tile(np.arange(n), (bsz, 1))
    return SemanticOrder(perm=perm, inv_perm=perm.copy())


def semantic_order(route) -> SemanticOrder:
    """Sort tokens by their routed prompt index, ties kept in raster order.

    ``route`` is the one-hot (B, N, T) routing matrix; grouping tokens
    that chose the same prompt makes the scan visit semantically related
    tokens consecutively regardless of where they sit on the grid.
    """
    data = route.data if isinstance(route, Tensor) else np.asarray(route)
    if data.ndim != 3:
        raise DimensionError(f"routing matrix must be (B, N, T), got {data.shape}")
    is_binary = np.all((data == 0.0) | (data == 1.0))
    if not is_binary or not np.allclose(data.sum(axis=-1), 1.0):
        raise ContractError("semantic_order needs one-hot routing rows")
    keys = np.argmax(data, axis=-1)
    perm = np.argsort(keys, axis=-1, kind="stable")
    inv_perm = np.argsort(perm, axis=-1)
    return SemanticOrder(perm=perm, inv_perm=inv_perm)


# -- the prompt-guided scan ---------------------------------------------


def selective_scan(
    x: Tensor,
    p: SsmParams,
    p_fused: Tensor,
    order: SemanticOrder | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Run the recurrence along the semantic order with a prompted output gate.

    The output gate is c_raw + p_fused per token. All per-token operands
    are permuted into scan order internally; the result is scattered
    back so output token t corresponds to input token t. A ``trace``
    dict, when given, receives the scan-order gate ("c_s"), the state
    trajectory ("h"), the scan-order outputs ("y") and the restored
    outputs ("y_tokens").
    """
    x, p_fused = astensor(x), astensor(p_fused)
    for name, t in (
        ("delta", p.delta),
        ("b_in", p.b_in),
        ("c_raw", p.c_raw),
        ("a_decay", p.a_decay),
        ("p_fused", p_fused),
    ):
        if t.shape != x.shape:
            raise DimensionError(
                f"scan operand {name} has shape {tuple(t.shape)}, input is {tuple(x.shape)}"
            )
    c_s = p.c_raw + p_fused
    if order is None:
        y = gated_recurrence(x, p.a_decay, p.b_in, c_s, trace=trace)
        if trace is not None:
            trace["c_s"] = c_s.data.copy()
            trace["y_tokens"] = y.data.copy()
        return y
    xs = take_tokens(x, order.perm)
    As = take_tokens(p.a_decay, order.perm)
    bs = take_tokens(p.b_in, order.perm)
    cs = take_tokens(c_s, order.perm)
    y = gated_recurrence(xs, As, bs, cs, trace=trace)
    out = take_tokens(y, order.inv_perm)
    if trace is not None:
        trace["c_s"] = cs.data.copy()
        trace["y_tokens"] = out.data.copy()
    return out


# -- reach probe ----------------------------------------------------------


def causal_reach(model_fn, x0: np.ndarray, probe_index: int) -> np.ndarray:
    """Gradient magnitude of output token ``probe_index`` w.r.t. every input token.

    ``model_fn`` maps a (B, N, C) tensor to a (B, N, C) tensor; reach[s]
    is the Frobenius norm of the Jacobian block d y[0, probe] / d x[0, s],
    assembled from one backward pass per output channel. Exact zeros in
    the result are structural, not rounding.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 3:
        raise DimensionError(f"probe input must be (B, N, C), got {x0.shape}")
    n = x0.shape[1]
    if not 0 <= probe_index < n:
        raise ContractError(f"probe index {probe_index} outside 0..{n - 1}")
    first = model_fn(Tensor(x0.copy()))
    if first.ndim != 3 or first.shape[:2] != x0.shape[:2]:
        raise DimensionError(
            f"model_fn changed token layout: {tuple(first.shape)} from {x0.shape}"
        )
    acc = np.zeros(n)
    for c in range(first.shape[2]):
        x = Tensor(x0.copy(), requires_grad=True)
        y = model_fn(x)
        y[(0, probe_index, c)].backward()
        acc += (x.grad[0] ** 2).sum(axis=-1)
    return np.sqrt(acc)
