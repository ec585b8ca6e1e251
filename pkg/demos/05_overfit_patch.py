"""Train a small model until it memorizes one patch.

The fastest way to see the whole pipeline work end to end is to hand it
a single textured 32x32 patch and let it overfit at x2. A few hundred
steps on one CPU core are enough to leave the bicubic baseline far
behind. Everything is seeded, so a second run reproduces the training
log byte for byte.

    python3 demos/05_overfit_patch.py
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from promptscan.config import RunConfig
from promptscan.metrics import psnr, ssim
from promptscan.network import ForwardMode, desk_config, model_forward
from promptscan.resize import bicubic_resize
from promptscan.tensor import Tensor
from promptscan.training import pair_from_hr, train_loop

# Sinusoid mixtures make a good memorization target: plenty of
# mid-frequency content that bicubic interpolation blurs away.
xx, yy = np.mgrid[0:32, 0:32]
patch = (120 + 55 * np.sin(1.15 * xx) * np.cos(0.95 * yy)
         + 35 * np.sin(0.55 * (xx + yy))).clip(0, 255)
pair = pair_from_hr(patch, scale=2, pair_id="patch")

cfg = RunConfig()
cfg.model = desk_config(channels=8, blocks=1, modules_per_block=1,
                        pool_size=4, scale=2, seed=0)
cfg.train.steps = 150
cfg.train.batch = 1
cfg.train.patch = 32
cfg.train.lr = 2e-3
cfg.train.log_every = 25

out = Path(tempfile.mkdtemp(prefix="overfit_"))
print(f"training {cfg.train.steps} steps into {out} ...")
res = train_loop([pair], cfg, out, progress=None)

print("\ntraining log (phase / freq / pixel columns):")
sys.stdout.write((out / "train_log.tsv").read_text())

sr = model_forward(Tensor(pair.lr[None]), res.params, cfg.model,
                   ForwardMode(train=False))
sr_img = np.clip(sr.data[0, 0], 0, 255)
base_img = np.clip(bicubic_resize(pair.lr[0], 2.0), 0, 255)

print(f"\nbicubic baseline: {psnr(base_img, pair.hr[0])[0]:6.2f} dB  "
      f"ssim {ssim(base_img, pair.hr[0]):.4f}")
print(f"trained model:    {psnr(sr_img, pair.hr[0])[0]:6.2f} dB  "
      f"ssim {ssim(sr_img, pair.hr[0]):.4f}")
print(f"\ncheckpoint at {res.ckpt_path}; rerunning this script reproduces")
print("the log file exactly (same seed, same byte stream).")
