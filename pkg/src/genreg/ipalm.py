"""Three-block inertial PALM solver with backtracking and progressive depth.

Blocks are updated in the order u, mu, theta.  For each block the
extrapolated points ``y = x + alpha*(x - x_prev)`` and
``z = x + beta*(x - x_prev)`` are formed, the local Lipschitz estimate
is grown until the descent and gradient-Lipschitz inequalities hold
(raw sums of squares), and the prox of the block's nonsmooth term is
applied to ``y - grad_H(z) / tau``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import AlgoParams, ModelConfig
from .convnet import (
    derive_size_plan,
    propagate_down,
    spectral_layers,
    synthesize,
    upconv_adjoint_latent,
)
from .energy import (
    fidelity_grad,
    fidelity_value,
    h_value,
    network_parts,
    objective_terms,
    tv_eps,
    tv_eps_grad,
    value_and_grad,
)
from .forward import apply_adjoint, block_replicate, make_rng
from .prox import project_kernels, prox_data, prox_l1

log = logging.getLogger(__name__)

BLOCK_NAMES = ("u", "mu", "theta")


class SolverError(RuntimeError):
    """Numerical breakdown of the solver (non-finite values)."""


class BacktrackingError(SolverError):
    """No admissible Lipschitz estimate within the allowed growth steps."""


# --- block arithmetic ----------------------------------------------------------
# A block value is either an ndarray (u) or a list of per-layer arrays.


def _map2(f, a, b):
    if isinstance(a, list):
        return [f(x, y) for x, y in zip(a, b)]
    return f(a, b)


def _inner(a, b):
    if isinstance(a, list):
        return sum(float(np.vdot(x, y)) for x, y in zip(a, b))
    return float(np.vdot(a, b))


def _sq(a):
    return _inner(a, a)


def _copy(a):
    return [x.copy() for x in a] if isinstance(a, list) else a.copy()


def extrapolate(x, x_prev, weight):
    """``x + weight * (x - x_prev)``."""
    if weight == 0:
        return _copy(x)
    return _map2(lambda p, q: p + weight * (p - q), x, x_prev)


def step_size(alpha, beta, eps, lipschitz):
    """Prox step ``tau`` from inertial weights and the local Lipschitz estimate.

    ``delta = (alpha + 2 beta) / (2 (1 - eps - alpha)) * L`` and
    ``tau = ((1 + eps) delta + (1 + beta) L) / (2 - alpha)``.
    """
    if not alpha < 1 - eps:
        raise ValueError(f"alpha={alpha} must be < 1 - eps = {1 - eps}")
    delta = (alpha + 2 * beta) / (2 * (1 - eps - alpha)) * lipschitz
    return ((1 + eps) * delta + (1 + beta) * lipschitz) / (2 - alpha)


@dataclass
class BacktrackResult:
    value: object
    lipschitz: float
    h_value: float
    steps: int


def backtrack(x, h_x, grad_x, h_fn, candidate_fn, lipschitz_start, growth=2.0,
              max_steps=80, grad_gap=0.0, point_gap=0.0, slack=1e-12):
    """Grow ``L = lipschitz_start * growth**k`` until both inequalities hold.

    ``candidate_fn(L)`` returns the prox step for estimate ``L``.  The
    descent check is
    ``H(x+) <= H(x) + <x+ - x, grad_x> + L/2 ||x+ - x||^2`` and the
    Lipschitz check ``grad_gap <= L * point_gap`` where ``grad_gap`` is
    ``||grad H(z) - grad H(x)||`` and ``point_gap`` is ``||z - x||``.
    ``slack`` is a relative round-off allowance on the descent check.
    """
    L = float(lipschitz_start)
    tol = slack * max(1.0, abs(h_x))
    for k in range(max_steps + 1):
        if grad_gap <= L * point_gap or grad_gap == 0.0:
            cand = candidate_fn(L)
            d = _map2(np.subtract, cand, x)
            h_c = h_fn(cand)
            if h_c <= h_x + _inner(d, grad_x) + 0.5 * L * _sq(d) + tol:
                return BacktrackResult(cand, L, h_c, k)
        L *= growth
    raise BacktrackingError(f"no admissible Lipschitz estimate after {max_steps} growth steps (L={L:.3g})")


# --- state -------------------------------------------------------------------


@dataclass
class SolverState:
    """Iterates, previous iterates, Lipschitz estimates and the trace.

    ``trace`` rows are dicts with ``iter``, ``stage`` (network depth),
    ``objective`` and the four objective components.
    """

    u: np.ndarray
    mu: list
    theta: list
    u_prev: np.ndarray
    mu_prev: list
    theta_prev: list
    lipschitz: list
    plan: object
    iteration: int = 0
    stage: int = 1
    trace: list = field(default_factory=list)

    @property
    def depth(self):
        return len(self.mu)

    def block(self, i):
        return (self.u, self.mu, self.theta)[i]

    def prev(self, i):
        return (self.u_prev, self.mu_prev, self.theta_prev)[i]

    def set_block(self, i, value):
        name = BLOCK_NAMES[i]
        setattr(self, name + "_prev", getattr(self, name))
        setattr(self, name, value)

    def reset_momentum(self):
        self.u_prev = self.u.copy()
        self.mu_prev = _copy(self.mu)
        self.theta_prev = _copy(self.theta)

    def generative(self):
        return synthesize(self.mu, self.theta, self.plan)

    def snapshot(self):
        return {
            "u": self.u.copy(),
            "mu": _copy(self.mu),
            "theta": _copy(self.theta),
            "iteration": self.iteration,
            "stage": self.stage,
        }


def initial_image(prob, deconv_init="data"):
    """Warm start for u: data, mean-filled, replicated or dequantized."""
    v = prob.variant
    if v == "denoise":
        return prob.y.copy()
    if v == "deconv":
        return apply_adjoint(prob.y, prob) if deconv_init == "adjoint" else prob.y.copy()
    if v == "inpaint":
        known = prob.mask == 1
        fill = float(prob.y[known].mean()) if known.any() else 0.0
        return np.where(known, prob.y, fill)
    if v == "superres":
        return block_replicate(prob.y, prob.factor)
    return prob.spectrum.dequantize()


def random_kernels(rng, channels, r):
    """i.i.d. uniform entries on ``[-1/r, 1/r]``."""
    return rng.uniform(-1.0 / r, 1.0 / r, size=(channels, r, r))


def stage_schedule(n_layers, algo):
    """Iteration counts per depth; warmups come out of the total budget."""
    remaining = algo.n_iter
    counts = []
    for _ in range(n_layers - 1):
        n = min(algo.warmup, remaining)
        counts.append(n)
        remaining -= n
    counts.append(remaining)
    return counts


def _grow(state, config, rng):
    """Add one layer: random kernels, adjoint-initialized latent, reset chain."""
    plan = state.plan
    k = state.depth
    new_theta = random_kernels(rng, config.channels, config.kernel_size)
    theta = project_kernels(state.theta + [new_theta])
    top = upconv_adjoint_latent(
        state.mu[k - 1], theta[k], plan.strides[k], plan.latent_shapes[k], plan.interp_shapes[k]
    )
    state.theta = theta
    state.mu = propagate_down(top, theta, plan, k)
    state.stage = k + 1
    state.reset_momentum()


# --- main loop ---------------------------------------------------------------


class _Problem:
    """Bundles the fixed solve inputs for the per-block evaluations.

    Each ``*_block`` method returns ``(h, grad, h_and_grad, prox)`` for one
    block with the other two held at their current values; spectra of
    the fixed blocks are computed once per call.
    """

    def __init__(self, prob, config, algo, plan):
        self.prob = prob
        self.config = config
        self.algo = algo
        self.plan = plan

    def u_block(self, state):
        cfg, prob = self.config, self.prob
        _, _, _, v, res = network_parts(state.mu, state.theta, self.plan)
        coupling = cfg.gamma * sum(0.5 * float(np.sum(r * r)) / (r.shape[-2] * r.shape[-1]) for r in res)

        def h(x):
            return fidelity_value(x, prob, cfg.lam) + cfg.s_r * tv_eps(x - v, cfg.tv_epsilon) + coupling

        def grad(x):
            return fidelity_grad(x, prob, cfg.lam) + cfg.s_r * tv_eps_grad(x - v, cfg.tv_epsilon)

        return h, grad, (lambda x: (h(x), grad(x))), (lambda x, tau: prox_data(x, prob))

    def mu_block(self, state):
        cfg, prob, plan = self.config, self.prob, self.plan
        layers = spectral_layers(plan)
        t_hat = [layers[l].kernel_spectrum(t) for l, t in enumerate(state.theta)]

        def h_and_grad(x):
            return value_and_grad(state.u, x, state.theta, prob, cfg, plan, "mu", t_hat=t_hat)

        def h(x):
            return h_value(state.u, x, state.theta, prob, cfg, plan, t_hat=t_hat)

        return h, (lambda x: h_and_grad(x)[1]), h_and_grad, (lambda x, tau: prox_l1(x, tau, cfg.s_g))

    def theta_block(self, state):
        cfg, prob, plan = self.config, self.prob, self.plan
        layers = spectral_layers(plan)
        z_hat = [layers[l].latent_spectrum(m) for l, m in enumerate(state.mu)]

        def h_and_grad(x):
            return value_and_grad(state.u, state.mu, x, prob, cfg, plan, "theta", z_hat=z_hat)

        def h(x):
            return h_value(state.u, state.mu, x, prob, cfg, plan, z_hat=z_hat)

        return h, (lambda x: h_and_grad(x)[1]), h_and_grad, (lambda x, tau: project_kernels(x))


def _update_block(i, state, bundle):
    algo = bundle.algo
    alpha, beta = algo.alpha[i], algo.beta[i]
    eps = algo.alg_epsilon
    x, xp = state.block(i), state.prev(i)
    h, grad, h_and_grad, prox = (bundle.u_block, bundle.mu_block, bundle.theta_block)[i](state)

    y = extrapolate(x, xp, alpha)
    h_x, g_x = h_and_grad(x)
    moved = beta != 0 and _sq(_map2(np.subtract, x, xp)) > 0
    if moved:
        z = extrapolate(x, xp, beta)
        g_z = grad(z)
        grad_gap = np.sqrt(_sq(_map2(np.subtract, g_z, g_x)))
        point_gap = np.sqrt(_sq(_map2(np.subtract, z, x)))
    else:
        g_z, grad_gap, point_gap = g_x, 0.0, 0.0

    def candidate(L):
        tau = step_size(alpha, beta, eps, L)
        return prox(_map2(lambda a, b: a - b / tau, y, g_z), tau)

    start = max(state.lipschitz[i] / algo.shrink, 1e-12)
    res = backtrack(x, h_x, g_x, h, candidate, start, algo.growth, algo.max_backtracks,
                    grad_gap, point_gap, algo.descent_slack)
    state.lipschitz[i] = res.lipschitz
    state.set_block(i, res.value)


def ipalm_iteration(state, bundle, callback=None):
    """One sweep over the three blocks, then record the objective."""
    for i in range(3):
        _update_block(i, state, bundle)
        if callback is not None:
            callback(BLOCK_NAMES[i], state)
    state.iteration += 1
    terms = objective_terms(state.u, state.mu, state.theta, bundle.prob, bundle.config, state.plan)
    total = float(sum(terms.values()))
    if not np.isfinite(total):
        raise SolverError(f"non-finite objective at iteration {state.iteration}: {terms}")
    row = {"iter": state.iteration, "stage": state.stage, "objective": total}
    row.update(terms)
    state.trace.append(row)


def init_state(prob, config, algo, seed, init_kernels=None, deconv_init="data"):
    """Depth-1 state (or full depth when `init_kernels` is given)."""
    plan = derive_size_plan(prob.image_shape, config)
    rng = make_rng(seed)
    u = initial_image(prob, deconv_init)
    if init_kernels is not None:
        theta = project_kernels([np.array(t, dtype=np.float64) for t in init_kernels])
        if len(theta) != config.n_layers:
            raise ValueError("init_kernels must have one entry per layer")
    else:
        theta = project_kernels([random_kernels(rng, config.channels, config.kernel_size)])
    mu = [np.zeros((config.channels,) + tuple(s)) for s in plan.latent_shapes[: len(theta)]]
    state = SolverState(
        u=u, mu=mu, theta=theta, u_prev=u.copy(), mu_prev=_copy(mu), theta_prev=_copy(theta),
        lipschitz=list(algo.lipschitz_init), plan=plan, stage=len(theta),
    )
    return state, rng


def progressive_init(prob, config, algo, seed, callback=None, deconv_init="data"):
    """Run the warmup stages at depths 1..L-1 and grow to full depth.

    Returns the full-depth state; its trace holds the warmup iterations.
    """
    state, rng = init_state(prob, config, algo, seed, deconv_init=deconv_init)
    schedule = stage_schedule(config.n_layers, algo)
    for depth in range(1, config.n_layers):
        bundle = _Problem(prob, config, algo, state.plan)
        for _ in range(schedule[depth - 1]):
            ipalm_iteration(state, bundle, callback)
        _grow(state, config, rng)
        log.debug("grew network to depth %d at iteration %d", state.depth, state.iteration)
    return state


def solve(prob, config=None, algo=None, seed=0, callback=None, init_kernels=None, deconv_init="data"):
    """Minimize the full objective for `prob`.

    Parameters
    ----------
    prob : ProblemSpec
    config : ModelConfig, optional
    algo : AlgoParams, optional
    seed : int
        Seeds the random kernel initialization.
    callback : callable, optional
        ``callback(block_name, state)`` after every block update.
    init_kernels : list of arrays, optional
        Start from these kernels at full depth instead of the
        progressive initialization.

    Returns
    -------
    SolverState
    """
    config = config or ModelConfig()
    algo = algo or AlgoParams()
    if init_kernels is None:
        state = progressive_init(prob, config, algo, seed, callback, deconv_init)
        n_final = stage_schedule(config.n_layers, algo)[-1]
    else:
        state, _ = init_state(prob, config, algo, seed, init_kernels, deconv_init)
        n_final = algo.n_iter
    bundle = _Problem(prob, config, algo, state.plan)
    for m in range(n_final):
        ipalm_iteration(state, bundle, callback)
        if log.isEnabledFor(logging.DEBUG) and m % 500 == 0:
            log.debug("iter %d objective %.6g", state.iteration, state.trace[-1]["objective"])
    return state
