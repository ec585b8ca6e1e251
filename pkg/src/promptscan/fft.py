"""Fourier transforms, hand-rolled, with differentiable 2-d wrappers.

Conventions: the forward transform is unnormalized, kernel
``exp(-2*pi*i*k*n/N)``; the inverse carries the full ``1/N`` (or
``1/(H*W)`` in 2-d). Power-of-two extents go through an iterative
radix-2 Cooley-Tukey (bit reversal, then vectorized butterflies); any
other extent falls back to a direct matrix DFT, which keeps every size
exact at O(N^2) cost.

The raw functions work on complex numpy arrays and carry no gradient.
:func:`fft2d` and :func:`ifft2d` wrap them for :class:`~.tensor.Tensor`
inputs over the trailing two axes; since a linear map is its own
Jacobian, the backward passes are single transforms as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor, atan2, hypot

# -- raw complex transforms -------------------------------------------


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev = (rev << 1) | ((idx >> b) & 1)
    return rev


def _fft_radix2(a: np.ndarray) -> np.ndarray:
    """Forward DFT over the last axis; length must be a power of two."""
    n = a.shape[-1]
    out = a[..., _bit_reverse_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blk = out.reshape(a.shape[:-1] + (n // size, size))
        even = blk[..., :half].copy()
        odd = blk[..., half:] * tw
        blk[..., :half] = even + odd
        blk[..., half:] = even - odd
        size *= 2
    return out


def _dft_direct(a: np.ndarray) -> np.ndarray:
    """Direct matrix DFT over the last axis, any length."""
    n = a.shape[-1]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return a.astype(np.complex128) @ w


def fft1d(a: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT over the last axis."""
    a = np.asarray(a)
    n = a.shape[-1]
    if n == 0:
        raise DimensionError("fft1d of an empty axis")
    if n & (n - 1) == 0:
        return _fft_radix2(a)
    return _dft_direct(a)


def ifft1d(a: np.ndarray) -> np.ndarray:
    """Inverse DFT over the last axis, including the 1/N factor."""
    a = np.asarray(a)
    return np.conj(fft1d(np.conj(a))) / a.shape[-1]


def fft2d_raw(a: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT over the trailing two axes."""
    a = np.asarray(a)
    if a.ndim < 2:
        raise DimensionError(f"fft2d needs at least 2 axes, got shape {a.shape}")
    step = fft1d(a)
    step = fft1d(step.swapaxes(-1, -2)).swapaxes(-1, -2)
    return step


def ifft2d_raw(a: np.ndarray) -> np.ndarray:
    """Inverse 2-d DFT with the full 1/(H*W) normalization."""
    a = np.asarray(a)
    if a.ndim < 2:
        raise DimensionError(f"ifft2d needs at least 2 axes, got shape {a.shape}")
    hw = a.shape[-1] * a.shape[-2]
    return np.conj(fft2d_raw(np.conj(a))) / hw


# -- differentiable wrappers --------------------------------------------


@dataclass
class ComplexSpectrum:
    """Real/imaginary planes of a transform, each a tracked tensor."""

    re: Tensor
    im: Tensor

    @property
    def shape(self):
        return self.re.shape

    def magnitude(self) -> Tensor:
        """|F|, with gradient defined as 0 at exact zeros."""
        return hypot(self.re, self.im)

    def phase(self, grad_eps: float = 0.0) -> Tensor:
        """atan2(im, re); gradient masked to 0 on radii <= grad_eps."""
        return atan2(self.im, self.re, grad_eps=grad_eps)


def fft2d(x: Tensor) -> ComplexSpectrum:
    """Differentiable forward 2-d DFT of a real tensor.

    For real input the cotangents pull back through the (symmetric) DFT
    matrix: with G = Gre - i*Gim, dL/dx = Re(F(G)).
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"fft2d needs at least 2 axes, got shape {tuple(x.shape)}")
    f = fft2d_raw(x.data)

    def vjp_re(g):
        return (np.real(fft2d_raw(g)).astype(x.data.dtype),)

    def vjp_im(g):
        # d(im F)/dx pulled back: Re(F(-i*g)) = Im(F(g)) with a sign flip
        return (np.real(fft2d_raw(-1j * g)).astype(x.data.dtype),)

    re = Tensor._from_op(np.real(f).astype(x.data.dtype), (x,), vjp_re)
    im = Tensor._from_op(np.imag(f).astype(x.data.dtype), (x,), vjp_im)
    return ComplexSpectrum(re, im)


def ifft2d(spec: ComplexSpectrum) -> ComplexSpectrum:
    """Differentiable inverse 2-d DFT of a complex spectrum."""
    re, im = spec.re, spec.im
    if re.shape != im.shape:
        raise DimensionError(
            f"spectrum planes disagree: {tuple(re.shape)} vs {tuple(im.shape)}"
        )
    hw = re.shape[-1] * re.shape[-2]
    y = ifft2d_raw(re.data + 1j * im.data)

    def make_vjp(plane: str):
        def vjp(gre, gim):
            g = fft2d_raw(gre + 1j * gim) / hw
            part = np.real(g) if plane == "re" else np.imag(g)
            return part.astype(re.data.dtype)

        return vjp

    # each output plane depends on both inputs; build two nodes that
    # share the forward value and split the cotangent algebraically
    vre = make_vjp("re")
    vim = make_vjp("im")

    out_re = Tensor._from_op(
        np.real(y).astype(re.data.dtype),
        (re, im),
        lambda g: (vre(g, np.zeros_like(g)), vim(g, np.zeros_like(g))),
    )
    out_im = Tensor._from_op(
        np.imag(y).astype(re.data.dtype),
        (re, im),
        lambda g: (vre(np.zeros_like(g), g), vim(np.zeros_like(g), g)),
    )
    return ComplexSpectrum(out_re, out_im)


def power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def radial_profile(mag: np.ndarray, nbins: int = 32) -> np.ndarray:
    """Mean spectral magnitude per radial frequency band.

    Frequencies are centered first; bin edges are uniform in normalized
    radius [0, 0.5*sqrt(2)]. Empty bins report 0.
    """
    if mag.ndim != 2:
        raise DimensionError(f"radial_profile expects a 2-d magnitude, got {mag.shape}")
    if nbins < 1:
        raise ContractError("radial_profile needs at least one bin")
    h, w = mag.shape
    fy = _fftfreq(h)[:, None]
    fx = _fftfreq(w)[None, :]
    r = np.hypot(fy, fx)
    rmax = np.hypot(0.5, 0.5)
    idx = np.minimum((r / rmax * nbins).astype(int), nbins - 1)
    prof = np.zeros(nbins)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    sums = np.bincount(idx.ravel(), weights=mag.ravel(), minlength=nbins)
    nz = counts > 0
    prof[nz] = sums[nz] / counts[nz]
    return prof


def _fftfreq(n: int) -> np.ndarray:
    """Cycle-per-sample frequencies in DFT output order."""
    k = np.arange(n)
    k = np.where(k <= (n - 1) // 2, k, k - n)
    return k / n
