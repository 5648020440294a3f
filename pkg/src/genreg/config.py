"""Model and algorithm parameters and their defaults."""

from dataclasses import dataclass, fields, replace

VARIANTS = ("denoise", "inpaint", "deconv", "superres", "jpeg")

# Per-application (nu, lambda) defaults. lambda is irrelevant for the
# hard-constraint variants, so 1.0 there.
APPLICATION_DEFAULTS = {
    "inpaint": {"nu": 0.975, "lam": 1.0},
    "denoise": {"nu": 0.925, "lam": 22.5},
    "deconv": {"nu": 0.925, "lam": 600.0},
    "superres": {"nu": 0.975, "lam": 1.0},
    "jpeg": {"nu": 0.875, "lam": 1.0},
}


class ConfigError(ValueError):
    """Invalid parameter value; ``key`` names the offending parameter."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def balance_weights(nu):
    """Return ``(s_R, s_G)`` for the TV/generative balance ``nu``."""
    m = min(nu, 1.0 - nu)
    return nu / m, (1.0 - nu) / m


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and regularization weights of the variational model."""

    n_layers: int = 3
    channels: int = 8
    kernel_size: int = 8
    strides: tuple = (1, 2, 2)
    tv_epsilon: float = 0.05
    gamma: float = 2000.0
    nu: float = 0.925
    lam: float = 22.5

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if self.n_layers < 1:
            raise ConfigError("layers", "must be >= 1")
        if self.channels < 1:
            raise ConfigError("channels", "must be >= 1")
        if self.kernel_size < 1:
            raise ConfigError("kernel_size", "must be >= 1")
        if len(self.strides) != self.n_layers:
            raise ConfigError("strides", f"need {self.n_layers} entries, got {len(self.strides)}")
        if self.strides[0] != 1:
            raise ConfigError("strides", "first-layer stride must be 1")
        if any(s < 1 for s in self.strides):
            raise ConfigError("strides", "must be positive")
        if not self.tv_epsilon > 0:
            raise ConfigError("tv_epsilon", "must be > 0")
        if not self.gamma > 0:
            raise ConfigError("gamma", "must be > 0")
        if not 0 < self.nu < 1:
            raise ConfigError("nu", "must lie in (0, 1)")
        if not self.lam > 0:
            raise ConfigError("lambda", "must be > 0")

    @property
    def s_r(self):
        return balance_weights(self.nu)[0]

    @property
    def s_g(self):
        return balance_weights(self.nu)[1]

    def with_depth(self, n_layers):
        return replace(self, n_layers=n_layers, strides=self.strides[:n_layers])


@dataclass(frozen=True)
class AlgoParams:
    """iPALM settings.

    ``alpha`` and ``beta`` are per-block inertial weights for (u, mu, theta).
    ``n_iter`` counts every iteration including the progressive-depth
    warmup stages.
    """

    alg_epsilon: float = 0.03
    alpha: tuple = (0.7, 0.7, 0.7)
    beta: tuple = (0.7, 0.7, 0.7)
    n_iter: int = 8000
    lipschitz_init: tuple = (1.0, 1.0, 1.0)
    growth: float = 2.0
    shrink: float = 2.0
    max_backtracks: int = 80
    warmup: int = 200
    descent_slack: float = 1e-12

    def __post_init__(self):
        for name in ("alpha", "beta", "lipschitz_init"):
            v = getattr(self, name)
            if not isinstance(v, (tuple, list)):
                v = (float(v),) * 3
            v = tuple(float(x) for x in v)
            if len(v) != 3:
                raise ConfigError(name, "need one value per block (3)")
            object.__setattr__(self, name, v)
        if not 0 < self.alg_epsilon < 1:
            raise ConfigError("alg_epsilon", "must lie in (0, 1)")
        for a, b in zip(self.alpha, self.beta):
            if not 0 <= a < 1 - self.alg_epsilon:
                raise ConfigError("alpha", f"must lie in [0, 1 - alg_epsilon), got {a}")
            if not 0 <= b < 1 - self.alg_epsilon:
                raise ConfigError("beta", f"must lie in [0, 1 - alg_epsilon), got {b}")
        if any(x <= 0 for x in self.lipschitz_init):
            raise ConfigError("lipschitz_init", "must be > 0")
        if not self.growth > 1:
            raise ConfigError("backtrack_growth", "must be > 1")
        if not self.shrink >= 1:
            raise ConfigError("lipschitz_shrink", "must be >= 1 (1 disables shrinking)")
        if self.n_iter < 0:
            raise ConfigError("iterations", "must be >= 0")
        if self.warmup < 0:
            raise ConfigError("warmup", "must be >= 0")


def config_fields(cls):
    return {f.name for f in fields(cls)}
