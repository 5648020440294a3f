"""Strided upconvolution network: size planning, layer maps and adjoints.

Latent variables of a layer are stored as one array of shape
``(channels, Mx, My)``; kernels as ``(channels, r, r)``.  Layer 1 is
index 0 in every list.  All convolutions act on the trailing two axes,
so the per-channel operations are evaluated for a whole layer at once.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import irfft2, next_fast_len, rfft2
from scipy.signal import fftconvolve

from .core import ShapeError


@dataclass(frozen=True)
class SizePlan:
    """Grid sizes for every layer of the network.

    ``latent_shapes[l]`` is the latent grid of layer ``l + 1`` and
    ``interp_shapes[l]`` the zero-interpolated grid it is expanded to
    before the valid convolution.  A layer's upconvolution output has the
    shape of the next-shallower latent (the image for layer 1).
    """

    image_shape: tuple
    kernel_size: int
    strides: tuple
    latent_shapes: tuple
    interp_shapes: tuple

    @property
    def n_layers(self):
        return len(self.strides)

    def output_shape(self, layer):
        """Upconvolution output shape of 0-based ``layer``."""
        return self.image_shape if layer == 0 else self.latent_shapes[layer - 1]

    def truncate(self, n_layers):
        return SizePlan(
            self.image_shape,
            self.kernel_size,
            self.strides[:n_layers],
            self.latent_shapes[:n_layers],
            self.interp_shapes[:n_layers],
        )


def derive_size_plan(image_shape, config):
    """Smallest latent sizes that chain exactly through every layer.

    Layer 1 uses ``M = N + r - 1``; deeper layers interpolate to
    ``M~ = M_prev + r - 1`` and use ``M = ceil(M~ / stride)``, which
    satisfies ``stride*(M - 1) + 1 <= M~ <= stride*M``.
    """
    r = int(config.kernel_size)
    strides = tuple(int(s) for s in config.strides)
    nx, ny = (int(n) for n in image_shape)
    if nx < r or ny < r:
        raise ShapeError(f"image {nx}x{ny} is smaller than the kernel size {r}")
    if strides[0] != 1:
        raise ShapeError("first-layer stride must be 1")
    latent, interp = [], []
    prev = (nx, ny)
    for l, s in enumerate(strides):
        target = (prev[0] + r - 1, prev[1] + r - 1)
        m = (math.ceil(target[0] / s), math.ceil(target[1] / s))
        if min(m) < r:
            raise ShapeError(f"layer {l + 1} latent size {m} is smaller than the kernel size {r}")
        latent.append(m)
        interp.append(target)
        prev = m
    return SizePlan((nx, ny), r, strides, tuple(latent), tuple(interp))


def _check_interp(shape, stride, target):
    for m, t in zip(shape[-2:], target):
        if not stride * (m - 1) + 1 <= t <= stride * m:
            raise ShapeError(
                f"interpolation target {tuple(target)} incompatible with latent "
                f"{tuple(shape[-2:])} at stride {stride}"
            )


def zero_interpolate(mu, stride, target):
    """Spread latent samples onto every ``stride``-th grid point (trailing pad)."""
    mu = np.asarray(mu, dtype=np.float64)
    _check_interp(mu.shape, stride, target)
    if stride == 1:
        return mu.copy()
    out = np.zeros(mu.shape[:-2] + tuple(target))
    out[..., ::stride, ::stride] = mu
    return out


def zero_interpolate_adjoint(z, stride, latent_shape):
    z = np.asarray(z, dtype=np.float64)
    _check_interp(latent_shape, stride, z.shape[-2:])
    mx, my = latent_shape[-2:]
    return z[..., ::stride, ::stride][..., :mx, :my].copy()


def valid_convolve(mu, theta):
    """``(mu * theta)[n, m] = sum_ij mu[n + r-1 - i, m + r-1 - j] theta[i, j]``.

    Output has shape ``(Mx - r + 1, My - r + 1)`` per channel.
    """
    mu = np.asarray(mu, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if mu.shape[-2] < theta.shape[-2] or mu.shape[-1] < theta.shape[-1]:
        raise ShapeError(f"grid {mu.shape[-2:]} smaller than kernel {theta.shape[-2:]}")
    return fftconvolve(mu, theta, mode="valid", axes=(-2, -1))


def strided_upconvolve(mu, theta, stride, target):
    return valid_convolve(zero_interpolate(mu, stride, target), theta)


def upconv_adjoint_latent(resid, theta, stride, latent_shape, target):
    """Adjoint of ``mu -> strided_upconvolve(mu, theta, stride, target)``."""
    resid = np.asarray(resid, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    r = theta.shape[-2:]
    expected = (target[0] - r[0] + 1, target[1] - r[1] + 1)
    if resid.shape[-2:] != expected:
        raise ShapeError(f"residual shape {resid.shape[-2:]} != upconvolution output {expected}")
    full = fftconvolve(resid, theta[..., ::-1, ::-1], mode="full", axes=(-2, -1))
    return zero_interpolate_adjoint(full, stride, latent_shape)


def upconv_adjoint_kernel(resid, mu, stride, target):
    """Adjoint of ``theta -> strided_upconvolve(mu, theta, stride, target)``.

    Returns the kernel-shaped gradient ``sum_nm resid[n, m] d(out[n, m])/d theta``.
    """
    resid = np.asarray(resid, dtype=np.float64)
    z = zero_interpolate(mu, stride, target)
    if resid.shape[-2] > z.shape[-2] or resid.shape[-1] > z.shape[-1]:
        raise ShapeError("residual larger than the interpolated latent")
    corr = fftconvolve(z, resid[..., ::-1, ::-1], mode="valid", axes=(-2, -1))
    return corr[..., ::-1, ::-1].copy()


def layer_output(mu, theta, plan, layer):
    """Upconvolve every channel of 0-based ``layer``; shape ``(N, *output)``."""
    return strided_upconvolve(mu[layer], theta[layer], plan.strides[layer], plan.interp_shapes[layer])


def synthesize(mu, theta, plan):
    """Generative image part: sum over channels of the layer-1 upconvolutions."""
    return layer_output(mu, theta, plan, 0).sum(axis=0)


def propagate_down(mu_top, theta, plan, layer):
    """Feed ``mu_top`` (latent of 0-based ``layer``) through the chain.

    Returns the full latent list ``[mu^1, ..., mu^layer]`` where each
    shallower latent is the exact upconvolution of the one above it.
    """
    stack = [None] * (layer + 1)
    stack[layer] = np.asarray(mu_top, dtype=np.float64)
    for l in range(layer, 0, -1):
        stack[l - 1] = strided_upconvolve(stack[l], theta[l], plan.strides[l], plan.interp_shapes[l])
    return stack


def sample_delta(theta, plan, layer, channel, position):
    """Image generated by a unit delta in one deep latent channel.

    `layer` is 1-based, `position` a 0-based index
    into that layer's latent grid.
    """
    depth = plan.n_layers
    if not 1 <= layer <= depth:
        raise IndexError(f"layer {layer} outside 1..{depth}")
    n_ch = theta[layer - 1].shape[0]
    if not 0 <= channel < n_ch:
        raise IndexError(f"channel {channel} outside 0..{n_ch - 1}")
    shape = plan.latent_shapes[layer - 1]
    i, j = position
    if not (0 <= i < shape[0] and 0 <= j < shape[1]):
        raise IndexError(f"position {position} outside latent grid {shape}")
    top = np.zeros((n_ch,) + tuple(shape))
    top[channel, i, j] = 1.0
    mu = propagate_down(top, theta, plan, layer - 1)
    return synthesize(mu, theta, plan)


# --- spectral evaluation -------------------------------------------------------
# Every operation of one layer (valid convolution, both adjoints) is exact
# as a circular convolution on any grid at least as large as the
# interpolated latent, so all of them share one FFT size per layer and
# spectra of fixed operands can be reused.


class SpectralLayer:
    """FFT-domain versions of one layer's upconvolution and its adjoints."""

    def __init__(self, latent_shape, interp_shape, stride, kernel_size):
        self.latent_shape = tuple(latent_shape)
        self.interp_shape = tuple(interp_shape)
        self.stride = int(stride)
        self.r = int(kernel_size)
        self.fft_shape = (
            next_fast_len(self.interp_shape[0]),
            next_fast_len(self.interp_shape[1], real=True),
        )

    def _fft(self, a):
        return rfft2(a, s=self.fft_shape)

    def _ifft(self, a):
        return irfft2(a, s=self.fft_shape)

    def kernel_spectrum(self, theta):
        return self._fft(theta)

    def latent_spectrum(self, mu):
        return self._fft(zero_interpolate(mu, self.stride, self.interp_shape))

    def residual_spectrum(self, resid):
        """Spectrum of an output-shaped array placed at offset ``r - 1``."""
        resid = np.asarray(resid, dtype=np.float64)
        tx, ty = self.interp_shape
        buf = np.zeros(resid.shape[:-2] + self.fft_shape)
        buf[..., self.r - 1 : tx, self.r - 1 : ty] = resid
        return self._fft(buf)

    def _crop_valid(self, full):
        tx, ty = self.interp_shape
        return full[..., self.r - 1 : tx, self.r - 1 : ty]

    def forward(self, z_hat, t_hat):
        return self._crop_valid(self._ifft(z_hat * t_hat))

    def forward_sum(self, z_hat, t_hat):
        """Sum over channels (axis 0) of :meth:`forward`, one inverse FFT."""
        return self._crop_valid(self._ifft(np.sum(z_hat * t_hat, axis=0)))

    def adjoint_latent(self, r_hat, t_hat):
        tx, ty = self.interp_shape
        full = self._ifft(r_hat * np.conj(t_hat))[..., :tx, :ty]
        return zero_interpolate_adjoint(full, self.stride, self.latent_shape)

    def adjoint_kernel(self, r_hat, z_hat):
        return self._ifft(r_hat * np.conj(z_hat))[..., : self.r, : self.r]


@lru_cache(maxsize=32)
def spectral_layers(plan):
    return tuple(
        SpectralLayer(plan.latent_shapes[l], plan.interp_shapes[l], plan.strides[l], plan.kernel_size)
        for l in range(plan.n_layers)
    )
