import numpy as np
import pytest

from promptscan.errors import ConfigError, ContractError, DimensionError
from promptscan.network import (
    ForwardMode,
    ModelConfig,
    asf_ssb_forward,
    asf_ssm_forward,
    build_model,
    desk_config,
    model_forward,
    named_parameters,
    parameter_count,
    seed_streams,
)
from promptscan.resize import resample
from promptscan.tensor import Tensor

TINY = dict(channels=4, blocks=1, modules_per_block=1, pool_size=2, scale=2)


def test_zeroed_head_reduces_model_to_bicubic_exactly():
    # output = bicubic skip + 255 * deep(x); killing the head isolates the skip
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    params.final_k.data[:] = 0.0
    params.final_b.data[:] = 0.0
    rng = np.random.default_rng(0)
    lr = rng.uniform(0, 255, (1, 1, 8, 8))
    out = model_forward(Tensor(lr), params, cfg).data
    skip = resample(lr, 16, 16, kind="cubic", antialias=False)
    np.testing.assert_array_equal(out, skip)


def test_fresh_model_deep_path_is_live():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    rng = np.random.default_rng(0)
    lr = rng.uniform(0, 255, (1, 1, 8, 8))
    out = model_forward(Tensor(lr), params, cfg).data
    skip = resample(lr, 16, 16, kind="cubic", antialias=False)
    assert np.any(out != skip)


def test_forward_shapes_scale_2_and_4():
    for scale, hw in ((2, 16), (4, 32)):
        cfg = desk_config(**{**TINY, "scale": scale})
        params = build_model(cfg)
        out = model_forward(Tensor(np.zeros((2, 1, 8, 8))), params, cfg)
        assert out.shape == (2, 1, hw, hw)


def test_build_is_seed_deterministic():
    cfg = desk_config(**TINY, seed=5)
    p1 = named_parameters(build_model(cfg))
    p2 = named_parameters(build_model(cfg))
    assert p1.keys() == p2.keys()
    for name in p1:
        np.testing.assert_array_equal(p1[name].data, p2[name].data)
    p3 = named_parameters(build_model(desk_config(**TINY, seed=6)))
    assert any(not np.array_equal(p1[n].data, p3[n].data) for n in p1)


def test_parameter_names_cover_structure():
    cfg = desk_config(channels=4, blocks=2, modules_per_block=2, pool_size=2, scale=4)
    names = set(named_parameters(build_model(cfg)))
    assert "shallow.k" in names
    assert "block0.mod0.w_mlp" in names and "block1.mod1.pool" in names
    assert "up0.k" in names and "up1.k" in names  # two stages at scale 4
    assert "final.k" in names and "gate.k" in names
    assert parameter_count(build_model(cfg)) == sum(
        p.size for p in named_parameters(build_model(cfg)).values()
    )


def test_module_with_zero_head_makes_block_an_identity():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    for mod in params.blocks[0].modules:
        mod.w_out.data[:] = 0.0
        mod.b_out.data[:] = 0.0
    x = Tensor(np.random.default_rng(1).standard_normal((1, cfg.channels, 6, 6)))
    out = asf_ssb_forward(x, params.blocks[0], cfg, ForwardMode())
    np.testing.assert_array_equal(out.data, x.data)


def test_block_residual_is_additive():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((1, cfg.channels, 6, 6)))
    out = asf_ssb_forward(x, params.blocks[0], cfg, ForwardMode())
    assert out.shape == x.shape
    assert np.any(out.data != x.data)


def test_module_rejects_bad_token_shapes():
    cfg = desk_config(**TINY)
    mp = build_model(cfg).blocks[0].modules[0]
    with pytest.raises(DimensionError):
        asf_ssm_forward(Tensor(np.zeros((1, 9, 3))), mp, cfg, 3, 3)
    with pytest.raises(DimensionError):
        asf_ssm_forward(Tensor(np.zeros((1, 8, 4))), mp, cfg, 3, 3)


def test_model_input_contracts():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    with pytest.raises(DimensionError):
        model_forward(Tensor(np.zeros((1, 3, 8, 8))), params, cfg)
    with pytest.raises(ContractError):
        model_forward(Tensor(np.zeros((1, 1, 4, 4))), params, cfg)


def test_config_validation_messages_name_fields():
    with pytest.raises(ConfigError, match="scale"):
        ModelConfig(scale=3).validate()
    with pytest.raises(ConfigError, match="pool_size"):
        ModelConfig(pool_size=1).validate()
    with pytest.raises(ConfigError, match="temperature"):
        ModelConfig(temperature=-1.0).validate()
    with pytest.raises(ConfigError, match="router"):
        ModelConfig(router="dense").validate()
    with pytest.raises(ConfigError, match="discretization"):
        ModelConfig(discretization="euler").validate()


def test_router_and_discretization_variants_run():
    for router in ("split", "mlp"):
        for disc in ("zoh", "direct"):
            cfg = desk_config(**TINY, router=router, discretization=disc)
            params = build_model(cfg)
            out = model_forward(
                Tensor(np.full((1, 1, 8, 8), 80.0)), params, cfg,
                ForwardMode(train=True),
            )
            assert np.all(np.isfinite(out.data))


def test_prompts_off_mode_runs_and_differs():
    base = desk_config(**TINY, seed=9)
    off = desk_config(**TINY, seed=9, prompts="off")
    rng = np.random.default_rng(3)
    lr = rng.uniform(0, 255, (1, 1, 8, 8))
    pa = build_model(base)
    po = build_model(off)
    for mod_a, mod_o in zip(pa.blocks[0].modules, po.blocks[0].modules):
        mod_a.w_out.data[:] = 0.1
        mod_o.w_out.data[:] = 0.1
    ya = model_forward(Tensor(lr), pa, base).data
    yo = model_forward(Tensor(lr), po, off).data
    assert not np.array_equal(ya, yo)


def test_seed_streams_are_stable_and_distinct():
    s1 = seed_streams(0)
    s2 = seed_streams(0)
    assert set(s1) == {"init", "route", "extract", "data"}
    for k in s1:
        r1 = np.random.default_rng(s1[k]).integers(0, 2**32, 4)
        r2 = np.random.default_rng(s2[k]).integers(0, 2**32, 4)
        np.testing.assert_array_equal(r1, r2)
    a = np.random.default_rng(s1["init"]).integers(0, 2**32, 4)
    b = np.random.default_rng(s1["data"]).integers(0, 2**32, 4)
    assert not np.array_equal(a, b)
