"""Prompt construction: discrete routing and spectral attention.

Two prompt streams are built per token and fused by addition. The
spatial stream picks one row of a learnable pool per token through a
hard Gumbel-Softmax router (straight-through gradients). The global
stream transforms the token grid to the frequency domain and runs
single-head scaled dot-product attention over the spectral features, so
every token sees a summary of the whole grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .fft import fft2d
from .tensor import (
    Tensor,
    astensor,
    concat,
    matmul,
    reshape,
    softmax,
    swap_last,
    transpose,
)


@dataclass
class PromptPool:
    """Learnable prompt rows plus the router's sampling state."""

    pool: Tensor
    temperature: float = 1.0
    rng_seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.pool.ndim != 2:
            raise DimensionError(f"prompt pool must be (T, C), got {tuple(self.pool.shape)}")
        if self.pool.shape[0] < 2:
            raise ContractError("prompt pool needs at least 2 rows")
        self.rng = np.random.default_rng(self.rng_seed)

    @property
    def size(self) -> int:
        return self.pool.shape[0]


@dataclass
class GlobalPromptParams:
    """Q/K/V projection weights for the spectral attention."""

    wq: Tensor
    wk: Tensor
    wv: Tensor


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Standard Gumbel(0,1) samples via inverse CDF of -log(-log U)."""
    u = rng.random(shape)
    return -np.log(-np.log(u + 1e-20) + 1e-20)


def _straight_through(soft: Tensor, hard_value: np.ndarray) -> Tensor:
    """Forward the hard value while routing gradients to the soft path."""
    return Tensor._from_op(hard_value, (soft,), lambda g: (g,))


def route_tokens(
    logits: Tensor,
    pool: PromptPool,
    train_mode: bool,
    *,
    route_mode: str = "hard",
    noise: np.ndarray | None = None,
) -> Tensor:
    """Assign each token to one prompt row.

    Training draws Gumbel noise from the pool's seeded stream, softens
    with temperature tau, then substitutes the one-hot argmax on the
    forward pass only (straight-through). Inference skips the noise and
    takes the plain argmax. ``route_mode="soft"`` skips the hard
    substitution and returns the relaxation itself; gradient checks use
    it because finite differences cannot see through the substitution.
    """
    logits = astensor(logits)
    if pool.temperature <= 0:
        raise ConfigError(f"gumbel temperature must be positive, got {pool.temperature}")
    if route_mode not in ("hard", "soft"):
        raise ConfigError(f"unknown route_mode {route_mode!r}")
    if logits.ndim != 3 or logits.shape[-1] != pool.size:
        raise DimensionError(
            f"routing logits {tuple(logits.shape)} do not match pool size {pool.size}"
        )
    if train_mode:
        if noise is None:
            noise = gumbel_noise(logits.shape, pool.rng)
        pre = (logits + Tensor(noise)) * (1.0 / pool.temperature)
    else:
        pre = logits * (1.0 / pool.temperature)
    soft = softmax(pre, axis=-1)
    if route_mode == "soft":
        return soft
    keys = np.argmax(soft.data, axis=-1)
    hard = np.zeros_like(soft.data)
    np.put_along_axis(hard, keys[..., None], 1.0, axis=-1)
    return _straight_through(soft, hard)


def gather_spatial_prompt(route: Tensor, pool: PromptPool) -> Tensor:
    """Per-token pool lookup, written as route @ pool so both get gradients."""
    route = astensor(route)
    if route.shape[-1] != pool.size:
        raise DimensionError(
            f"route width {route.shape[-1]} does not match pool size {pool.size}"
        )
    return matmul(route, pool.pool)


def global_prompt(
    x: Tensor,
    h: int,
    w: int,
    params: GlobalPromptParams,
    *,
    features: str = "reim",
) -> Tensor:
    """Whole-grid context vector per token via spectral attention.

    The token sequence is laid back on its h-by-w grid, transformed per
    channel with a 2-d FFT, and the real/imaginary planes (or the
    magnitude, under ``features="magnitude"``) become the attention
    input. Spectral coefficients grow with token count, so features are
    scaled by 1/N to keep the attention logits in a sane range at any
    grid size.
    """
    x = astensor(x)
    bsz, n, c = x.shape
    if h * w != n:
        raise DimensionError(f"token count {n} does not factor as {h}x{w}")
    if features not in ("reim", "magnitude"):
        raise ConfigError(f"unknown spectral feature mode {features!r}")

    grid = transpose(reshape(x, (bsz, h, w, c)), (0, 3, 1, 2))
    spec = fft2d(grid)

    def flat(t):
        return reshape(transpose(t, (0, 2, 3, 1)), (bsz, n, c))

    if features == "reim":
        feats = concat([flat(spec.re), flat(spec.im)], axis=-1)
    else:
        feats = flat(spec.magnitude())
    feats = feats * (1.0 / n)

    fdim = feats.shape[-1]
    for name, m in (("wq", params.wq), ("wk", params.wk), ("wv", params.wv)):
        if m.shape != (fdim, c):
            raise DimensionError(
                f"{name} has shape {tuple(m.shape)}, expected ({fdim}, {c})"
            )
    q = matmul(feats, params.wq)
    k = matmul(feats, params.wk)
    v = matmul(feats, params.wv)
    scores = matmul(q, swap_last(k)) * (1.0 / np.sqrt(c))
    attn = softmax(scores, axis=-1)
    return matmul(attn, v)


def fuse_prompts(p_spatial: Tensor, p_global: Tensor) -> Tensor:
    """Elementwise sum of the two streams.

    Any reordering for the scan happens downstream, where the fused
    prompt is permuted together with the other per-token operands.
    """
    p_spatial, p_global = astensor(p_spatial), astensor(p_global)
    if p_spatial.shape != p_global.shape:
        raise DimensionError(
            f"prompt shapes differ: {tuple(p_spatial.shape)} vs {tuple(p_global.shape)}"
        )
    return p_spatial + p_global
