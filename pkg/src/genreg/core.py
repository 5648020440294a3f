"""Grids, normalized norms and the forward-difference gradient.

Images, latent variables and kernels are all plain 2-D float64 arrays.
Stacks of channels are 3-D arrays with the channel on axis 0; every
operation here acts on the trailing two axes so it broadcasts over them.
"""

import numpy as np


class ShapeError(ValueError):
    """Raised when array dimensions do not fit an operator."""


def as_grid(a, name="grid"):
    """Return `a` as a finite 2-D float64 array (copying if needed)."""
    g = np.asarray(a, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError(f"{name} contains non-finite samples")
    return g


def normalized_norm(g, p=2):
    """Mean-normalized p-norm ``(mean |g|^p)^(1/p)``.

    Dividing by the entry count keeps model parameters independent of
    the grid size.
    """
    g = np.asarray(g, dtype=np.float64)
    if p < 1:
        raise ValueError("p must be >= 1")
    if g.size == 0:
        return 0.0
    if p == 1:
        return float(np.mean(np.abs(g)))
    if p == 2:
        return float(np.sqrt(np.mean(g * g)))
    return float(np.mean(np.abs(g) ** p) ** (1.0 / p))


def raw_sq_norm(g):
    """Plain sum of squares, used by the algorithm's step-size checks."""
    g = np.asarray(g, dtype=np.float64)
    return float(np.vdot(g, g))


def discrete_gradient(u):
    """Forward differences with Neumann closure.

    Returns an array of shape ``(2,) + u.shape[-2:]`` (leading axes of
    `u` are kept in front): channel 0 differences along rows, channel 1
    along columns; the last row/column of the respective channel is 0.
    """
    u = np.asarray(u, dtype=np.float64)
    g = np.zeros((2,) + u.shape)
    g[0, ..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    g[1, ..., :, :-1] = u[..., :, 1:] - u[..., :, :-1]
    return g


def gradient_adjoint(f):
    """Exact adjoint of :func:`discrete_gradient` (negative divergence).

    Entries of `f` that the gradient never produces (last row of
    channel 0, last column of channel 1) are ignored.
    """
    f = np.asarray(f, dtype=np.float64)
    f1, f2 = f[0], f[1]
    g = np.zeros(f1.shape)
    g[..., :-1, :] -= f1[..., :-1, :]
    g[..., 1:, :] += f1[..., :-1, :]
    g[..., :, :-1] -= f2[..., :, :-1]
    g[..., :, 1:] += f2[..., :, :-1]
    return g
