"""Proximal maps for the nonsmooth parts: data indicators, l1 and kernel set.

The prox quadratic is always the raw sum of squares,
``argmin_z f(z) + tau/2 * ||z - x||^2``, while the l1 penalty uses the
mean-normalized norm of each latent grid.
"""

import numpy as np

from .core import ShapeError
from .forward import apply_forward, block_dct, block_idct, block_replicate


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def l1_thresholds(mu, tau, s_g):
    """Per-layer thresholds ``s_G / (tau * Mx * My)``."""
    if tau <= 0:
        raise ValueError("step tau must be > 0")
    return [s_g / (tau * layer.shape[-2] * layer.shape[-1]) for layer in mu]


def prox_l1(mu, tau, s_g):
    """Prox of ``s_G * sum_{l,n} mean|mu^l_n|`` with step ``tau``."""
    return [soft_threshold(layer, t) for layer, t in zip(mu, l1_thresholds(mu, tau, s_g))]


def project_kernels(theta):
    """Euclidean projection onto the admissible kernel set.

    Layer-1 kernels are made zero-mean first; every kernel is then
    scaled back onto the unit ball when its sum of squares exceeds 1.
    Scaling keeps the mean at zero, so the composition is exact.
    """
    out = []
    for l, layer in enumerate(theta):
        k = np.array(layer, dtype=np.float64)
        if l == 0:
            k = k - k.mean(axis=(-2, -1), keepdims=True)
        norms = np.sqrt(np.sum(k * k, axis=(-2, -1), keepdims=True))
        k = np.where(norms > 1.0, k / np.maximum(norms, 1.0), k)
        out.append(k)
    return out


def kernels_feasible(theta, tol=1e-12):
    for l, layer in enumerate(theta):
        if np.any(np.sum(layer * layer, axis=(-2, -1)) > 1.0 + tol):
            return False
        if l == 0 and np.any(np.abs(layer.sum(axis=(-2, -1))) > tol):
            return False
    return True


def prox_data(u, prob):
    """Project `u` onto the hard data constraint of `prob`.

    Identity for the quadratic-fidelity variants (denoise, deconv).
    """
    u = np.asarray(u, dtype=np.float64)
    if tuple(u.shape) != tuple(prob.image_shape):
        raise ShapeError(f"image shape {u.shape} != problem image shape {prob.image_shape}")
    v = prob.variant
    if v == "inpaint":
        return np.where(prob.mask == 1, prob.y, u)
    if v == "superres":
        s = prob.factor
        return u - block_replicate(apply_forward(u, prob) - prob.y, s)
    if v == "jpeg":
        lo, hi = prob.spectrum.bounds()
        return block_idct(np.clip(block_dct(u), lo, hi))
    return u.copy()


def data_feasible(u, prob, tol=1e-9):
    """Whether `u` satisfies the indicator constraint (always true for D1 variants)."""
    v = prob.variant
    if v == "inpaint":
        return bool(np.all(np.abs(prob.mask * (u - prob.y)) <= tol))
    if v == "superres":
        return bool(np.all(np.abs(apply_forward(u, prob) - prob.y) <= tol * max(1.0, np.abs(prob.y).max())))
    if v == "jpeg":
        lo, hi = prob.spectrum.bounds()
        c = block_dct(u)
        slack = tol * max(1.0, float(np.abs(c).max()))
        return bool(np.all(c >= lo - slack) and np.all(c <= hi + slack))
    return True
