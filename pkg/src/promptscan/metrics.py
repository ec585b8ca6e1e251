"""Fidelity metrics over 8-bit-range grayscale images.

All functions take plain numpy arrays; metrics sit on the evaluation
side of the pipeline where nothing needs a gradient. PSNR of identical
images is reported as +inf and formatted with an INF sentinel upstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ContractError, DimensionError

_PEAK = 255.0


def y_channel(img: np.ndarray) -> np.ndarray:
    """Luma of an RGB (3, H, W) image via BT.601; grayscale passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 3:
        r, g, b = img[0], img[1], img[2]
        return 0.299 * r + 0.587 * g + 0.114 * b
    if img.ndim == 2 or (img.ndim == 3 and img.shape[0] == 1):
        return img[0] if img.ndim == 3 else img
    raise DimensionError(f"expected (H, W), (1, H, W) or (3, H, W), got {img.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray) -> tuple:
    """(psnr_db, mse); identical inputs give (inf, 0.0)."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf, 0.0
    return 10.0 * math.log10(_PEAK * _PEAK / err), err


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma 1.5, valid positions only."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DimensionError(f"ssim expects 2-d images, got {a.shape}")
    size = 11
    if a.shape[0] < size or a.shape[1] < size:
        raise ContractError(f"image {a.shape} smaller than the {size}x{size} window")
    win = _gaussian_window(size, 1.5)

    def filt(x):
        v = np.lib.stride_tricks.sliding_window_view(x, (size, size))
        return np.einsum("hwuv,uv->hw", v, win, optimize=True)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    c1 = (k1 * _PEAK) ** 2
    c2 = (k2 * _PEAK) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


_BIN_EDGES = (5.0, 10.0, 20.0)
BIN_LABELS = ("f0_5", "f5_10", "f10_20", "f20_inf")


@dataclass
class ErrorHistogram:
    """Absolute-error counts over [0,5), [5,10), [10,20), [20,inf).

    Counts are exact integers so the fractions sum to exactly one as
    rationals; float fractions are derived views.
    """

    counts: tuple
    total: int

    def fractions(self) -> tuple:
        return tuple(c / self.total for c in self.counts)

    def exact_fractions(self) -> tuple:
        return tuple(Fraction(c, self.total) for c in self.counts)


def error_histogram(sr: np.ndarray, hr: np.ndarray) -> ErrorHistogram:
    sr, hr = np.asarray(sr, dtype=np.float64), np.asarray(hr, dtype=np.float64)
    if sr.shape != hr.shape:
        raise DimensionError(f"shape mismatch: {sr.shape} vs {hr.shape}")
    d = np.abs(sr - hr).ravel()
    e0, e1, e2 = _BIN_EDGES
    c0 = int(np.count_nonzero(d < e0))
    c1 = int(np.count_nonzero((d >= e0) & (d < e1)))
    c2 = int(np.count_nonzero((d >= e1) & (d < e2)))
    c3 = int(np.count_nonzero(d >= e2))
    return ErrorHistogram(counts=(c0, c1, c2, c3), total=d.size)
