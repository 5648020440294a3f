"""Image restoration with a convolutional generative prior and smoothed TV."""

from .config import APPLICATION_DEFAULTS, VARIANTS, AlgoParams, ConfigError, ModelConfig, balance_weights
from .convnet import SizePlan, derive_size_plan, sample_delta, synthesize
from .core import ShapeError
from .energy import grad_h, objective_terms, objective_value
from .estimator import GenerativeRegularization
from .forward import ProblemSpec, QuantizedSpectrum, Recipe, apply_adjoint, apply_forward, simulate_corruption
from .imageio import ImageFormatError, load_image, save_image
from .ipalm import BacktrackingError, SolverError, solve, step_size
from .metrics import psnr, ssim
from .prox import project_kernels, prox_data, prox_l1, soft_threshold

__version__ = "0.1.0"

__all__ = [
    "APPLICATION_DEFAULTS", "VARIANTS", "AlgoParams", "ConfigError", "ModelConfig", "balance_weights",
    "SizePlan", "derive_size_plan", "sample_delta", "synthesize", "ShapeError",
    "grad_h", "objective_terms", "objective_value", "GenerativeRegularization",
    "ProblemSpec", "QuantizedSpectrum", "Recipe", "apply_adjoint", "apply_forward", "simulate_corruption",
    "ImageFormatError", "load_image", "save_image", "BacktrackingError", "SolverError", "solve",
    "step_size", "psnr", "ssim", "project_kernels", "prox_data", "prox_l1", "soft_threshold",
]
