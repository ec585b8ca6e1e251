"""Model assembly: token modules, residual blocks, and the SR network.

The network maps a single-channel low-resolution image in [0, 255] to
its upscaled reconstruction. A shallow 3x3 convolution lifts the image
into feature space; a stack of residual blocks refines the features,
each block chaining several prompt-guided scan modules over the token
sequence; a sub-pixel reconstruction head upscales; and a bicubic skip
of the raw input carries the base image so the deep path only has to
learn the residual. The deep path runs on intensities scaled to [0, 1]
and its output is scaled back, which keeps activations, attention
logits, and loss magnitudes in comparable ranges.

Every learnable parameter is a Tensor with requires_grad=True, created
from the config seed in a fixed order, so two builds from the same
config are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .prompts import (
    GlobalPromptParams,
    PromptPool,
    fuse_prompts,
    gather_spatial_prompt,
    global_prompt,
    route_tokens,
)
from .resize import resample
from .scan import (
    derive_ssm_params,
    selective_scan,
    semantic_order,
    stable_a_log_init,
)
from .tensor import (
    Tensor,
    astensor,
    conv2d,
    layer_norm,
    matmul,
    pixel_shuffle,
    reshape,
    silu,
    transpose,
)


@dataclass
class ModelConfig:
    """Architecture knobs. Defaults are the desk-scale preset.

    ``discretization``: "zoh" keeps the state multiplier in (0,1);
    "direct" uses the raw negative multiplier. ``router``: "split"
    takes routing logits from the packed projection's last T channels,
    "mlp" predicts them with a dedicated two-layer head. ``prompts``:
    "fused" enables the full prompt path, "off" runs the bare causal
    scan in raster order (the ablation used by the reach tests).
    """

    channels: int = 32
    blocks: int = 2
    modules_per_block: int = 2
    pool_size: int = 8
    scale: int = 2
    discretization: str = "zoh"
    router: str = "split"
    spectral_features: str = "reim"
    temperature: float = 1.0
    prompts: str = "fused"
    seed: int = 0

    def validate(self) -> None:
        if self.scale not in (2, 4):
            raise ConfigError(f"scale must be 2 or 4, got {self.scale}")
        if self.channels < 1:
            raise ConfigError("channels must be positive")
        if self.blocks < 1 or self.modules_per_block < 1:
            raise ConfigError("blocks and modules_per_block must be at least 1")
        if self.pool_size < 2:
            raise ConfigError("pool_size must be at least 2")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.discretization not in ("zoh", "direct"):
            raise ConfigError(f"unknown discretization {self.discretization!r}")
        if self.router not in ("split", "mlp"):
            raise ConfigError(f"unknown router {self.router!r}")
        if self.spectral_features not in ("reim", "magnitude"):
            raise ConfigError(f"unknown spectral features {self.spectral_features!r}")
        if self.prompts not in ("fused", "off"):
            raise ConfigError(f"unknown prompts mode {self.prompts!r}")


@dataclass
class ForwardMode:
    """train toggles router noise; route "soft" bypasses the hard
    selection and the semantic reorder so the whole forward is smooth
    (used by gradient checks)."""

    train: bool = False
    route: str = "hard"


@dataclass
class SsmModuleParams:
    w_mlp: Tensor
    b_mlp: Tensor
    w_in: Tensor
    b_in: Tensor
    a_log: Tensor
    w_delta: Tensor
    b_delta: Tensor
    w_route1: Tensor
    b_route1: Tensor
    w_route2: Tensor
    b_route2: Tensor
    pool: PromptPool
    attn: GlobalPromptParams
    ln_g: Tensor
    ln_b: Tensor
    w_out: Tensor
    b_out: Tensor


@dataclass
class BlockParams:
    modules: list[SsmModuleParams] = field(default_factory=list)


@dataclass
class ModelParams:
    shallow_k: Tensor
    shallow_b: Tensor
    blocks: list[BlockParams]
    up_k: list[Tensor]
    up_b: list[Tensor]
    final_k: Tensor
    final_b: Tensor
    gate_k: Tensor
    gate_b: Tensor


def seed_streams(seed: int) -> dict:
    """Independent child sequences for each consumer of randomness."""
    init, route, extract, data = np.random.SeedSequence(seed).spawn(4)
    return {"init": init, "route": route, "extract": extract, "data": data}


def _uniform(rng, shape, fan_in) -> Tensor:
    s = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def build_model(cfg: ModelConfig) -> ModelParams:
    """Allocate and seed every parameter. Draw order is fixed."""
    cfg.validate()
    streams = seed_streams(cfg.seed)
    rng = np.random.default_rng(streams["init"])
    route_rng = np.random.default_rng(streams["route"])
    c, t = cfg.channels, cfg.pool_size
    fdim = 2 * c if cfg.spectral_features == "reim" else c

    blocks = []
    for _ in range(cfg.blocks):
        modules = []
        for _ in range(cfg.modules_per_block):
            pool_seed = int(route_rng.integers(0, 2**32))
            modules.append(
                SsmModuleParams(
                    w_mlp=_uniform(rng, (c, c), c),
                    b_mlp=_zeros(c),
                    w_in=_uniform(rng, (c, 3 * c + t), c),
                    b_in=_zeros(3 * c + t),
                    a_log=Tensor(np.full(c, stable_a_log_init(0.9)), requires_grad=True),
                    w_delta=_uniform(rng, (c, c), c),
                    b_delta=_zeros(c),
                    w_route1=_uniform(rng, (c, c), c),
                    b_route1=_zeros(c),
                    w_route2=_uniform(rng, (c, t), c),
                    b_route2=_zeros(t),
                    pool=PromptPool(
                        pool=_uniform(rng, (t, c), c),
                        temperature=cfg.temperature,
                        rng_seed=pool_seed,
                    ),
                    attn=GlobalPromptParams(
                        wq=_uniform(rng, (fdim, c), fdim),
                        wk=_uniform(rng, (fdim, c), fdim),
                        wv=_uniform(rng, (fdim, c), fdim),
                    ),
                    ln_g=Tensor(np.ones(c), requires_grad=True),
                    ln_b=_zeros(c),
                    w_out=_uniform(rng, (c, c), c),
                    b_out=_zeros(c),
                )
            )
        blocks.append(BlockParams(modules=modules))

    stages = {2: 1, 4: 2}[cfg.scale]
    up_k = [_uniform(rng, (4 * c, c, 3, 3), c * 9) for _ in range(stages)]
    up_b = [_zeros(4 * c) for _ in range(stages)]

    return ModelParams(
        shallow_k=_uniform(rng, (c, 1, 3, 3), 9),
        shallow_b=_zeros(c),
        blocks=blocks,
        up_k=up_k,
        up_b=up_b,
        final_k=_uniform(rng, (1, c, 3, 3), c * 9),
        final_b=_zeros(1),
        gate_k=_uniform(rng, (1, 16, 1, 1), 16),
        gate_b=_zeros(1),
    )


def named_parameters(params: ModelParams) -> dict:
    """Flat name->Tensor view of every learnable parameter."""
    out = {"shallow.k": params.shallow_k, "shallow.b": params.shallow_b}
    for i, blk in enumerate(params.blocks):
        for j, m in enumerate(blk.modules):
            pre = f"block{i}.mod{j}."
            out[pre + "w_mlp"] = m.w_mlp
            out[pre + "b_mlp"] = m.b_mlp
            out[pre + "w_in"] = m.w_in
            out[pre + "b_in"] = m.b_in
            out[pre + "a_log"] = m.a_log
            out[pre + "w_delta"] = m.w_delta
            out[pre + "b_delta"] = m.b_delta
            out[pre + "w_route1"] = m.w_route1
            out[pre + "b_route1"] = m.b_route1
            out[pre + "w_route2"] = m.w_route2
            out[pre + "b_route2"] = m.b_route2
            out[pre + "pool"] = m.pool.pool
            out[pre + "wq"] = m.attn.wq
            out[pre + "wk"] = m.attn.wk
            out[pre + "wv"] = m.attn.wv
            out[pre + "ln_g"] = m.ln_g
            out[pre + "ln_b"] = m.ln_b
            out[pre + "w_out"] = m.w_out
            out[pre + "b_out"] = m.b_out
    for s, (k, b) in enumerate(zip(params.up_k, params.up_b)):
        out[f"up{s}.k"] = k
        out[f"up{s}.b"] = b
    out["final.k"] = params.final_k
    out["final.b"] = params.final_b
    out["gate.k"] = params.gate_k
    out["gate.b"] = params.gate_b
    return out


def parameter_count(params: ModelParams) -> int:
    return sum(p.size for p in named_parameters(params).values())


def _conv(x, k, b):
    pad = (k.shape[-1] - 1) // 2
    return conv2d(x, k, pad) + reshape(b, (1, -1, 1, 1))


def asf_ssm_forward(
    x: Tensor,
    mp: SsmModuleParams,
    cfg: ModelConfig,
    h: int,
    w: int,
    mode: ForwardMode | None = None,
    trace: dict | None = None,
) -> Tensor:
    """One prompt-guided scan module over a (B, N, C) token sequence.

    Pipeline: a gated projection packs per-token scan gates and routing
    logits, the router picks spatial prompts from the pool, spectral
    attention contributes the global prompt, both fuse into the output
    gate, and the recurrence runs along the semantic token order. A
    layer norm plus linear head closes the module. ``trace`` collects
    copies of the published intermediates for fixture comparison.
    """
    mode = mode or ForwardMode()
    x = astensor(x)
    if x.ndim != 3 or x.shape[2] != cfg.channels:
        raise DimensionError(
            f"module input must be (B, N, {cfg.channels}), got {tuple(x.shape)}"
        )
    if x.shape[1] != h * w:
        raise DimensionError(f"token count {x.shape[1]} does not factor as {h}x{w}")

    trunk = silu(matmul(x, mp.w_mlp) + mp.b_mlp)
    x_in = matmul(trunk, mp.w_in) + mp.b_in
    ssm, split_logits = derive_ssm_params(
        x_in,
        cfg.channels,
        cfg.pool_size,
        a_log=mp.a_log,
        w_delta=mp.w_delta,
        b_delta=mp.b_delta,
        mode=cfg.discretization,
    )

    if cfg.prompts == "off":
        p_fused = Tensor(np.zeros_like(x.data))
        order = None
        route = None
    else:
        if cfg.router == "split":
            logits = split_logits
        else:
            hidden = silu(matmul(x, mp.w_route1) + mp.b_route1)
            logits = matmul(hidden, mp.w_route2) + mp.b_route2
        route = route_tokens(logits, mp.pool, mode.train, route_mode=mode.route)
        p_spatial = gather_spatial_prompt(route, mp.pool)
        p_global = global_prompt(x, h, w, mp.attn, features=cfg.spectral_features)
        p_fused = fuse_prompts(p_spatial, p_global)
        order = semantic_order(route) if mode.route == "hard" else None
        if trace is not None:
            trace["route"] = route.data.copy()
            trace["p_spatial"] = p_spatial.data.copy()
            trace["p_global"] = p_global.data.copy()
            trace["p_fused"] = p_fused.data.copy()
            trace["perm"] = None if order is None else order.perm.copy()

    y = selective_scan(x, ssm, p_fused, order, trace=trace)
    out = matmul(layer_norm(y, mp.ln_g, mp.ln_b), mp.w_out) + mp.b_out
    if trace is not None:
        trace["x_in"] = x_in.data.copy()
        trace["out"] = out.data.copy()
    return out


def asf_ssb_forward(
    x: Tensor,
    bp: BlockParams,
    cfg: ModelConfig,
    mode: ForwardMode | None = None,
) -> Tensor:
    """Residual block over a (B, C, H, W) feature map: Y = X + F(X)."""
    x = astensor(x)
    if x.ndim != 4:
        raise DimensionError(f"block input must be (B, C, H, W), got {tuple(x.shape)}")
    bsz, c, hh, ww = x.shape
    tokens = reshape(transpose(x, (0, 2, 3, 1)), (bsz, hh * ww, c))
    for m in bp.modules:
        tokens = asf_ssm_forward(tokens, m, cfg, hh, ww, mode=mode)
    back = transpose(reshape(tokens, (bsz, hh, ww, c)), (0, 3, 1, 2))
    return x + back


def model_forward(
    lr: Tensor,
    params: ModelParams,
    cfg: ModelConfig,
    mode: ForwardMode | None = None,
) -> Tensor:
    """Full network: (B, 1, h, w) in [0, 255] -> (B, 1, s*h, s*w).

    The bicubic skip carries the input; the deep path adds a learned
    residual. With all reconstruction weights at zero the output equals
    the bicubic upsample exactly.
    """
    lr = astensor(lr)
    if lr.ndim != 4 or lr.shape[1] != 1:
        raise DimensionError(f"expected (B, 1, h, w) input, got {tuple(lr.shape)}")
    h, w = lr.shape[2], lr.shape[3]
    if h < 8 or w < 8:
        raise ContractError(f"input extents must be at least 8, got {h}x{w}")
    cfg.validate()

    x01 = lr * (1.0 / 255.0)
    s0 = _conv(x01, params.shallow_k, params.shallow_b)
    feat = s0
    for bp in params.blocks:
        feat = asf_ssb_forward(feat, bp, cfg, mode=mode)
    feat = feat + s0
    for k, b in zip(params.up_k, params.up_b):
        feat = pixel_shuffle(_conv(feat, k, b), 2)
    deep = _conv(feat, params.final_k, params.final_b)
    skip = resample(lr, h * cfg.scale, w * cfg.scale, kind="cubic", antialias=False)
    return skip + deep * 255.0


def desk_config(**overrides) -> ModelConfig:
    """The small, finite-difference-friendly default configuration."""
    return replace(ModelConfig(), **overrides)
