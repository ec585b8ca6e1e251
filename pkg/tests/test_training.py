import numpy as np
import pytest

from promptscan.config import RunConfig
from promptscan.errors import ContractError, DimensionError
from promptscan.network import build_model, desk_config
from promptscan.pgm import write_pgm
from promptscan.training import (
    EVAL_HEADER,
    EvalRow,
    ImagePair,
    erf_map,
    evaluate,
    format_eval_rows,
    load_dataset,
    pair_from_hr,
    sample_batch,
    train_loop,
)

TINY = dict(channels=4, blocks=1, modules_per_block=1, pool_size=2, scale=2)


def _hr(seed=0, h=48, w=48):
    return np.random.default_rng(seed).uniform(0, 255, (h, w))


def _tiny_run_config(**train_overrides):
    cfg = RunConfig()
    for k, v in TINY.items():
        setattr(cfg.model, k, v)
    cfg.train.steps = 3
    cfg.train.batch = 1
    cfg.train.patch = 16
    cfg.train.ckpt_every = 2
    for k, v in train_overrides.items():
        setattr(cfg.train, k, v)
    return cfg


def test_pair_from_hr_crops_to_scale_multiple():
    pair = pair_from_hr(_hr(h=33, w=35), scale=2, pair_id="x")
    assert pair.hr.shape == (1, 32, 34)
    assert pair.lr.shape == (1, 16, 17)


def test_pair_from_hr_rejects_tiny_images():
    with pytest.raises(ContractError, match="too small"):
        pair_from_hr(_hr(h=15, w=40), scale=2, pair_id="small")


def test_pair_from_hr_rejects_non_2d():
    with pytest.raises(DimensionError, match="2-d"):
        pair_from_hr(np.zeros((1, 32, 32)), scale=2, pair_id="x")


def test_image_pair_shape_check():
    with pytest.raises(DimensionError, match="not 2x"):
        ImagePair(lr=np.zeros((1, 8, 8)), hr=np.zeros((1, 17, 16)), scale=2, id="bad")


def test_load_dataset_sorted_and_empty(tmp_path):
    write_pgm(tmp_path / "b.pgm", _hr(1, 32, 32))
    write_pgm(tmp_path / "a.pgm", _hr(2, 32, 32))
    pairs = load_dataset(tmp_path, scale=2)
    assert [p.id for p in pairs] == ["a", "b"]

    empty = tmp_path / "none"
    empty.mkdir()
    with pytest.raises(ContractError, match="no .pgm images"):
        load_dataset(empty, scale=2)


def test_sample_batch_shapes_and_alignment():
    pairs = [pair_from_hr(_hr(0), 2, "a")]
    rng = np.random.default_rng(0)
    lr_b, hr_b = sample_batch(pairs, rng, batch=3, patch=16, scale=2)
    assert lr_b.shape == (3, 1, 8, 8)
    assert hr_b.shape == (3, 1, 16, 16)


def test_sample_batch_is_deterministic():
    pairs = [pair_from_hr(_hr(0), 2, "a"), pair_from_hr(_hr(1), 2, "b")]
    a = sample_batch(pairs, np.random.default_rng(9), 4, 16, 2)
    b = sample_batch(pairs, np.random.default_rng(9), 4, 16, 2)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_sample_batch_crops_correspond():
    # every lr crop must be the bicubic-reduced window of its hr crop's
    # position, i.e. slices of the stored planes, not recomputed ones
    pair = pair_from_hr(_hr(3), 2, "a")
    rng = np.random.default_rng(2)
    lr_b, hr_b = sample_batch([pair], rng, batch=2, patch=16, scale=2)
    for i in range(2):
        found = False
        for y in range(0, 33, 2):
            for x in range(0, 33, 2):
                if np.array_equal(pair.hr[:, y : y + 16, x : x + 16], hr_b[i]):
                    np.testing.assert_array_equal(
                        pair.lr[:, y // 2 : y // 2 + 8, x // 2 : x // 2 + 8], lr_b[i]
                    )
                    found = True
        assert found


def test_sample_batch_rejects_small_pair():
    pair = pair_from_hr(_hr(0, 16, 16), 2, "a")
    with pytest.raises(ContractError, match="smaller than patch"):
        sample_batch([pair], np.random.default_rng(0), 1, 32, 2)


def test_train_loop_writes_log_and_checkpoint(tmp_path):
    pairs = [pair_from_hr(_hr(0), 2, "a")]
    cfg = _tiny_run_config()
    res = train_loop(pairs, cfg, tmp_path / "run")
    assert res.steps_run == 3
    assert res.ckpt_path.exists()
    lines = res.log_path.read_text().splitlines()
    assert lines[0] == "step\tloss_total\tloss_phase\tloss_freq\tloss_pix"
    assert len(lines) == 4
    assert lines[1].startswith("1\t")
    # every column is a finite float in scientific notation
    for ln in lines[1:]:
        cols = ln.split("\t")
        assert len(cols) == 5
        for c in cols[1:]:
            assert np.isfinite(float(c))
            assert "e" in c


def test_train_loop_log_every_thins_rows(tmp_path):
    pairs = [pair_from_hr(_hr(0), 2, "a")]
    cfg = _tiny_run_config(steps=5, log_every=2)
    res = train_loop(pairs, cfg, tmp_path / "run")
    steps = [int(ln.split("\t")[0]) for ln in res.log_path.read_text().splitlines()[1:]]
    assert steps == [2, 4, 5]  # multiples of log_every plus the last step


def test_train_loop_replay_is_byte_identical(tmp_path):
    pairs = [pair_from_hr(_hr(0), 2, "a")]
    r1 = train_loop(pairs, _tiny_run_config(), tmp_path / "one")
    r2 = train_loop(pairs, _tiny_run_config(), tmp_path / "two")
    assert r1.log_path.read_bytes() == r2.log_path.read_bytes()
    assert r1.ckpt_path.read_bytes() == r2.ckpt_path.read_bytes()


def test_train_loop_rejects_empty_dataset(tmp_path):
    with pytest.raises(ContractError, match="empty"):
        train_loop([], _tiny_run_config(), tmp_path / "run")


def test_checkpoint_reloads_into_identical_eval(tmp_path):
    from promptscan.checkpoint import load_checkpoint

    pairs = [pair_from_hr(_hr(0), 2, "a")]
    res = train_loop(pairs, _tiny_run_config(), tmp_path / "run")
    loaded, loaded_cfg = load_checkpoint(res.ckpt_path)
    a = evaluate(pairs, res.params, res.cfg.model)
    b = evaluate(pairs, loaded, loaded_cfg)
    assert a[0].psnr_db == b[0].psnr_db
    assert a[0].ssim == b[0].ssim


def test_evaluate_appends_mean_row():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    pairs = [pair_from_hr(_hr(i), 2, f"im{i}") for i in range(2)]
    rows = evaluate(pairs, params, cfg)
    assert [r.image for r in rows] == ["im0", "im1", "mean"]
    assert rows[2].mse == pytest.approx((rows[0].mse + rows[1].mse) / 2)
    assert rows[2].ssim == pytest.approx((rows[0].ssim + rows[1].ssim) / 2)


def test_evaluate_threaded_matches_serial():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    pairs = [pair_from_hr(_hr(i), 2, f"im{i}") for i in range(3)]
    serial = evaluate(pairs, params, cfg, workers=1)
    threaded = evaluate(pairs, params, cfg, workers=3)
    for a, b in zip(serial, threaded):
        assert a == b


def test_format_eval_rows_inf_sentinel_and_columns():
    rows = [
        EvalRow("a", float("inf"), 0.0, 1.0, (1.0, 0.0, 0.0, 0.0)),
        EvalRow("b", 31.25, 48.6789129, 0.91234, (0.5, 0.25, 0.125, 0.125)),
    ]
    text = format_eval_rows(rows)
    lines = text.splitlines()
    assert lines[0] == EVAL_HEADER
    assert lines[1] == "a\tINF\t0.000000\t1.0000\t1.000000\t0.000000\t0.000000\t0.000000"
    cols = lines[2].split("\t")
    assert cols[1] == "31.2500"
    assert cols[2] == "48.678913"
    assert cols[3] == "0.9123"
    assert cols[4:] == ["0.500000", "0.250000", "0.125000", "0.125000"]


def test_erf_map_peak_is_one():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    reach = erf_map(params, cfg, _hr(0, 16, 16))
    assert reach.shape == (16, 16)
    assert reach.max() == 1.0
    assert reach.min() >= 0.0


def test_erf_map_rejects_non_2d():
    cfg = desk_config(**TINY)
    params = build_model(cfg)
    with pytest.raises(DimensionError):
        erf_map(params, cfg, np.zeros((1, 16, 16)))
