"""scikit-learn style front end for the solver."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import APPLICATION_DEFAULTS, VARIANTS, AlgoParams, ModelConfig
from .convnet import sample_delta
from .forward import ProblemSpec
from .ipalm import solve


class GenerativeRegularization(TransformerMixin, BaseEstimator):
    """Image restoration with a convolutional generative prior plus smoothed TV.

    ``fit`` solves the restoration problem for the given observation and
    stores the reconstruction, its generative part and the learned
    network.  ``transform`` restores further observations starting from
    the learned kernels instead of the progressive initialization.

    Parameters
    ----------
    variant : {"denoise", "inpaint", "deconv", "superres", "jpeg"}
    nu, lam : float, optional
        TV/generative balance and fidelity weight.  ``None`` picks the
        application default.
    gamma, tv_epsilon : float
        Coupling weight between layers and TV smoothing.
    n_layers, channels, kernel_size : int
    strides : tuple of int
    alg_epsilon, alpha, beta : float
        iPALM parameters; ``alpha``/``beta`` apply to every block.
    n_iter, warmup : int
        Total iterations and iterations per intermediate depth.
    lipschitz_shrink : float
        Factor by which Lipschitz estimates shrink before each backtrack.
    random_state : int
        Seed for the random kernel initialization.

    Attributes
    ----------
    reconstruction_ : ndarray
    generative_ : ndarray
        The image part synthesized by the network.
    latents_, kernels_ : list of ndarray
        Per-layer arrays of shape ``(channels, Mx, My)`` / ``(channels, r, r)``.
    trace_ : list of dict
        Objective and its components per iteration.
    """

    def __init__(self, variant="denoise", nu=None, lam=None, gamma=2000.0, tv_epsilon=0.05,
                 n_layers=3, channels=8, kernel_size=8, strides=(1, 2, 2), alg_epsilon=0.03,
                 alpha=0.7, beta=0.7, n_iter=8000, warmup=200, lipschitz_shrink=2.0,
                 random_state=0):
        self.variant = variant
        self.nu = nu
        self.lam = lam
        self.gamma = gamma
        self.tv_epsilon = tv_epsilon
        self.n_layers = n_layers
        self.channels = channels
        self.kernel_size = kernel_size
        self.strides = strides
        self.alg_epsilon = alg_epsilon
        self.alpha = alpha
        self.beta = beta
        self.n_iter = n_iter
        self.warmup = warmup
        self.lipschitz_shrink = lipschitz_shrink
        self.random_state = random_state

    def _configs(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        defaults = APPLICATION_DEFAULTS[self.variant]
        model = ModelConfig(
            n_layers=self.n_layers,
            channels=self.channels,
            kernel_size=self.kernel_size,
            strides=tuple(self.strides),
            tv_epsilon=self.tv_epsilon,
            gamma=self.gamma,
            nu=defaults["nu"] if self.nu is None else self.nu,
            lam=defaults["lam"] if self.lam is None else self.lam,
        )
        algo = AlgoParams(
            alg_epsilon=self.alg_epsilon,
            alpha=self.alpha,
            beta=self.beta,
            n_iter=self.n_iter,
            warmup=self.warmup,
            shrink=self.lipschitz_shrink,
        )
        return model, algo

    def _problem(self, X, mask=None, blur=None, factor=None):
        if isinstance(X, ProblemSpec):
            if X.variant != self.variant:
                raise ValueError(f"problem variant {X.variant!r} != estimator variant {self.variant!r}")
            return X
        if self.variant == "jpeg":
            raise TypeError("jpeg observations must be passed as a ProblemSpec")
        y = check_array(X, dtype=np.float64)
        return ProblemSpec(self.variant, y=y, mask=mask, blur=blur, factor=factor)

    def fit(self, X, y=None, mask=None, blur=None, factor=None, callback=None):
        """Solve the restoration problem for observation `X`.

        `X` is the observed image (or a :class:`ProblemSpec`); `y` is
        ignored.  `mask`, `blur` and `factor` carry the operator payload
        for inpainting, deconvolution and super-resolution.
        """
        model, algo = self._configs()
        prob = self._problem(X, mask, blur, factor)
        state = solve(prob, model, algo, seed=self.random_state, callback=callback)
        self._store(state, prob)
        return self

    def _store(self, state, prob):
        self.problem_ = prob
        self.plan_ = state.plan
        self.reconstruction_ = state.u
        self.generative_ = state.generative()
        self.latents_ = state.mu
        self.kernels_ = state.theta
        self.trace_ = state.trace
        self.n_iter_ = state.iteration
        self.lipschitz_ = list(state.lipschitz)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).reconstruction_

    def transform(self, X, mask=None, blur=None, factor=None):
        """Restore `X` starting from the fitted kernels (full depth, no warmup)."""
        check_is_fitted(self, "kernels_")
        model, algo = self._configs()
        prob = self._problem(X, mask, blur, factor)
        state = solve(prob, model, algo, seed=self.random_state, init_kernels=self.kernels_)
        return state.u

    def decompose(self):
        """``(generative part v, TV part u - v)`` of the fitted reconstruction."""
        check_is_fitted(self, "kernels_")
        return self.generative_, self.reconstruction_ - self.generative_

    def sample(self, layer=None, channel=0, position=None):
        """Image generated by a delta peak in one latent channel of the fitted network."""
        check_is_fitted(self, "kernels_")
        layer = layer or self.plan_.n_layers
        if position is None:
            position = tuple(s // 2 for s in self.plan_.latent_shapes[layer - 1])
        return sample_delta(self.kernels_, self.plan_, layer, channel, position)
