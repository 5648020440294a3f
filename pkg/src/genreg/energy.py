"""Objective of the generative-regularization model and gradients of its smooth part.

The objective is split as ``E = H + f1(u) + f2(mu) + f3(theta)`` with

* ``H = lam*D1(Au) + s_R*TV_eps(u - v) + coupling(mu, theta)``,
* ``f1`` the data indicator (zero for quadratic-fidelity variants),
* ``f2 = s_G * sum mean|mu^l_n|`` and ``f3`` the kernel-set indicator,

where ``v`` is the synthesized generative image.  The number of layers
is taken from ``len(mu)`` so that shallower networks used during
progressive initialization share the same plan.
"""

import numpy as np

from .convnet import layer_output, spectral_layers
from .core import discrete_gradient, gradient_adjoint
from .forward import apply_adjoint, apply_forward
from .prox import data_feasible, kernels_feasible

BLOCKS = ("u", "mu", "theta")


def tv_eps(u, eps):
    """Smoothed total variation ``mean sqrt(|grad u|^2 + eps)``."""
    g = discrete_gradient(u)
    return float(np.mean(np.sqrt(g[0] ** 2 + g[1] ** 2 + eps)))


def tv_eps_grad(u, eps):
    g = discrete_gradient(u)
    mag = np.sqrt(g[0] ** 2 + g[1] ** 2 + eps)
    return gradient_adjoint(g / mag) / mag.size


def fidelity_value(u, prob, lam):
    """``lam * 1/2 * mean((Au - y)^2)`` for quadratic variants, else 0."""
    if not prob.smooth_fidelity:
        return 0.0
    r = apply_forward(u, prob) - prob.y
    return lam * 0.5 * float(np.mean(r * r))


def fidelity_grad(u, prob, lam):
    if not prob.smooth_fidelity:
        return np.zeros(prob.image_shape)
    r = apply_forward(u, prob) - prob.y
    return lam * apply_adjoint(r, prob) / r.size


def coupling_residuals(mu, theta, plan):
    """``mu^{l-1} - mu^l *_s theta^l`` for every layer ``l >= 2``."""
    return [mu[l - 1] - layer_output(mu, theta, plan, l) for l in range(1, len(mu))]


def _grid_size(a):
    return a.shape[-2] * a.shape[-1]


def coupling_value(mu, theta, plan, gamma):
    total = 0.0
    for res in coupling_residuals(mu, theta, plan):
        total += 0.5 * float(np.sum(res * res)) / _grid_size(res)
    return gamma * total


def l1_value(mu, s_g):
    return s_g * sum(float(np.sum(np.abs(layer))) / _grid_size(layer) for layer in mu)


def network_parts(mu, theta, plan, t_hat=None, z_hat=None):
    """Spectra, generative image and coupling residuals of one network state.

    ``t_hat``/``z_hat`` may carry precomputed kernel/latent spectra when
    that block is held fixed.
    """
    layers = spectral_layers(plan)
    depth = len(mu)
    if t_hat is None:
        t_hat = [layers[l].kernel_spectrum(theta[l]) for l in range(depth)]
    if z_hat is None:
        z_hat = [layers[l].latent_spectrum(mu[l]) for l in range(depth)]
    v = layers[0].forward_sum(z_hat[0], t_hat[0])
    res = [mu[l - 1] - layers[l].forward(z_hat[l], t_hat[l]) for l in range(1, depth)]
    return layers, t_hat, z_hat, v, res


def _coupling_from(res, gamma):
    return gamma * sum(0.5 * float(np.sum(r * r)) / _grid_size(r) for r in res)


def h_value(u, mu, theta, prob, config, plan, t_hat=None, z_hat=None):
    _, _, _, v, res = network_parts(mu, theta, plan, t_hat, z_hat)
    return (
        fidelity_value(u, prob, config.lam)
        + config.s_r * tv_eps(u - v, config.tv_epsilon)
        + _coupling_from(res, config.gamma)
    )


def value_and_grad(u, mu, theta, prob, config, plan, block, t_hat=None, z_hat=None):
    """``(h_value, grad_h)`` sharing one synthesis and residual pass."""
    if block not in BLOCKS:
        raise ValueError(f"block must be one of {BLOCKS}")
    layers, t_hat, z_hat, v, res = network_parts(mu, theta, plan, t_hat, z_hat)
    w = u - v
    value = (
        fidelity_value(u, prob, config.lam)
        + config.s_r * tv_eps(w, config.tv_epsilon)
        + _coupling_from(res, config.gamma)
    )
    tg = tv_eps_grad(w, config.tv_epsilon)
    if block == "u":
        return value, fidelity_grad(u, prob, config.lam) + config.s_r * tg

    # d/dv of s_R*TV(u - v) is -s_R*tg, shared by every layer-1 channel.
    top_hat = layers[0].residual_spectrum(-config.s_r * tg[None])
    scale = [config.gamma / _grid_size(r) for r in res]
    res_hat = [layers[l].residual_spectrum(res[l - 1]) for l in range(1, len(mu))]
    if block == "mu":
        g = [layers[0].adjoint_latent(top_hat, t_hat[0])]
        for l in range(1, len(mu)):
            c = scale[l - 1]
            g[l - 1] = g[l - 1] + c * res[l - 1]
            g.append(-c * layers[l].adjoint_latent(res_hat[l - 1], t_hat[l]))
        return value, g

    g = [layers[0].adjoint_kernel(top_hat, z_hat[0])]
    for l in range(1, len(mu)):
        g.append(-scale[l - 1] * layers[l].adjoint_kernel(res_hat[l - 1], z_hat[l]))
    return value, g


def grad_h(u, mu, theta, prob, config, plan, block):
    """Exact gradient of :func:`h_value` with respect to one block.

    Returns an image for ``"u"`` and a per-layer list for ``"mu"`` and
    ``"theta"``.
    """
    return value_and_grad(u, mu, theta, prob, config, plan, block)[1]


def objective_terms(u, mu, theta, prob, config, plan):
    """The four reported components; the fidelity term is ``inf`` when a
    hard data constraint is violated."""
    _, _, _, v, res = network_parts(mu, theta, plan)
    fid = fidelity_value(u, prob, config.lam)
    if not data_feasible(u, prob):
        fid = float("inf")
    return {
        "fidelity": fid,
        "tv": config.s_r * tv_eps(u - v, config.tv_epsilon),
        "l1": l1_value(mu, config.s_g),
        "coupling": _coupling_from(res, config.gamma),
    }


def objective_value(u, mu, theta, prob, config, plan):
    if not kernels_feasible(theta):
        return float("inf")
    return float(sum(objective_terms(u, mu, theta, prob, config, plan).values()))
