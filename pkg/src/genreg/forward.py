"""Forward operators, corruption simulators and the quantized-spectrum file.

The five applications share one :class:`ProblemSpec`.  ``apply_forward``
maps an image to data space and ``apply_adjoint`` back; adjoints are
taken with respect to the plain (unnormalized) inner products.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn
from scipy.signal import convolve, correlate

from .config import VARIANTS
from .core import ShapeError, as_grid

BLOCK = 8

# Standard JPEG luminance quantization table (ITU T.81, Annex K).
LUMINANCE_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class QuantizedSpectrum:
    """Stored JPEG data: integer indices per 8x8 block plus the shared table.

    ``indices`` has shape ``(Nx/8, Ny/8, 8, 8)``; ``table`` is an 8x8
    array of positive step sizes.
    """

    indices: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64).reshape(BLOCK, BLOCK)
        if not np.all(table > 0):
            raise ValueError("quantization steps must be positive")
        idx = np.asarray(self.indices)
        if idx.ndim != 4 or idx.shape[2:] != (BLOCK, BLOCK):
            raise ShapeError(f"indices must have shape (bx, by, 8, 8), got {idx.shape}")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "indices", idx.astype(np.int64))

    @property
    def image_shape(self):
        return (self.indices.shape[0] * BLOCK, self.indices.shape[1] * BLOCK)

    def bounds(self):
        """Closed coefficient intervals ``[q(k - 1/2), q(k + 1/2)]``."""
        return self.table * (self.indices - 0.5), self.table * (self.indices + 0.5)

    def dequantize(self):
        return block_idct(self.table * self.indices)


@dataclass
class ProblemSpec:
    """One restoration problem: variant, observed data and its payload.

    ``y`` is an image-shaped array for denoise/deconv/inpaint, the
    low-resolution image for superres, and unused for jpeg (the
    :class:`QuantizedSpectrum` in ``spectrum`` is the data).
    """

    variant: str
    y: np.ndarray = None
    image_shape: tuple = None
    mask: np.ndarray = None
    blur: np.ndarray = None
    factor: int = None
    spectrum: QuantizedSpectrum = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        v = self.variant
        if v == "jpeg":
            if self.spectrum is None:
                raise ValueError("jpeg problems need a QuantizedSpectrum")
            self.image_shape = self.spectrum.image_shape
            return
        self.y = as_grid(self.y, "y")
        if v == "superres":
            if self.factor is None or int(self.factor) < 1:
                raise ValueError("superres needs a positive integer factor")
            self.factor = int(self.factor)
            self.image_shape = (self.y.shape[0] * self.factor, self.y.shape[1] * self.factor)
            return
        self.image_shape = self.y.shape
        if v == "inpaint":
            if self.mask is None:
                raise ValueError("inpaint needs a mask")
            m = np.asarray(self.mask, dtype=np.float64)
            if m.shape != self.y.shape:
                raise ShapeError(f"mask shape {m.shape} != data shape {self.y.shape}")
            if not np.all((m == 0) | (m == 1)):
                raise ValueError("mask entries must be 0 or 1")
            self.mask = m
        elif v == "deconv":
            if self.blur is None:
                raise ValueError("deconv needs a blur kernel")
            k = as_grid(self.blur, "blur")
            if k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
                raise ShapeError(f"blur kernel must be (2s+1)x(2s+1), got {k.shape}")
            self.blur = k

    @property
    def smooth_fidelity(self):
        """True when the discrepancy is the quadratic (D1) rather than an indicator."""
        return self.variant in ("denoise", "deconv")

    def data_size(self):
        return int(np.prod(self.y.shape))


# --- block DCT -------------------------------------------------------------


def _blocks(u):
    nx, ny = u.shape
    if nx % BLOCK or ny % BLOCK:
        raise ShapeError(f"image dims {u.shape} must be multiples of {BLOCK}")
    return u.reshape(nx // BLOCK, BLOCK, ny // BLOCK, BLOCK).transpose(0, 2, 1, 3)


def _unblocks(c):
    bx, by = c.shape[:2]
    return c.transpose(0, 2, 1, 3).reshape(bx * BLOCK, by * BLOCK)


def block_dct(u):
    """Orthonormal 8x8 block DCT-II; returns shape ``(Nx/8, Ny/8, 8, 8)``."""
    return dctn(_blocks(np.asarray(u, dtype=np.float64)), norm="ortho", axes=(2, 3))


def block_idct(c):
    return _unblocks(idctn(np.asarray(c, dtype=np.float64), norm="ortho", axes=(2, 3)))


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(u, table):
    table = np.asarray(table, dtype=np.float64).reshape(BLOCK, BLOCK)
    idx = round_half_away(block_dct(u) / table)
    return QuantizedSpectrum(idx.astype(np.int64), table)


def quality_table(quality):
    """IJG quality scaling of the luminance table (quality in 1..100)."""
    if not 1 <= quality <= 100:
        raise ValueError("quality must lie in [1, 100]")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((LUMINANCE_TABLE * scale + 50.0) / 100.0), 1, None)


# --- block averaging ---------------------------------------------------------


def block_average(u, s):
    nx, ny = u.shape
    if nx % s or ny % s:
        raise ShapeError(f"factor {s} does not divide image dims {u.shape}")
    return u.reshape(nx // s, s, ny // s, s).mean(axis=(1, 3))


def block_replicate(d, s):
    return np.repeat(np.repeat(d, s, axis=0), s, axis=1)


# --- operators -------------------------------------------------------------


def apply_forward(u, prob):
    u = np.asarray(u, dtype=np.float64)
    if tuple(u.shape) != tuple(prob.image_shape):
        raise ShapeError(f"image shape {u.shape} != problem image shape {prob.image_shape}")
    v = prob.variant
    if v == "denoise":
        return u.copy()
    if v == "inpaint":
        return prob.mask * u
    if v == "deconv":
        return convolve(u, prob.blur, mode="same", method="direct")
    if v == "superres":
        return block_average(u, prob.factor)
    return block_dct(u)


def apply_adjoint(d, prob):
    d = np.asarray(d, dtype=np.float64)
    v = prob.variant
    if v == "denoise":
        return d.copy()
    if v == "inpaint":
        return prob.mask * d
    if v == "deconv":
        return correlate(d, prob.blur, mode="same", method="direct")
    if v == "superres":
        s = prob.factor
        return block_replicate(d, s) / (s * s)
    return block_idct(d)


def gaussian_kernel(half_width, std, relative=True):
    """Normalized (2s+1)^2 Gaussian; ``relative`` scales ``std`` by ``s``."""
    s = int(half_width)
    sigma = std * s if relative else std
    if s < 0 or sigma <= 0:
        raise ValueError("blur kernel needs half_width >= 1 and std > 0")
    x = np.arange(-s, s + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


# --- corruption --------------------------------------------------------------


@dataclass(frozen=True)
class Recipe:
    """Corruption parameters; fields unused by a variant are ignored.

    Defaults: 30% known pixels for inpainting, noise 0.1 x range for
    denoising, a 9x9 Gaussian of std 0.25 (relative to the half width)
    plus noise 0.025 x range for deconvolution, factor 4 for superres
    and a quality-10 table for jpeg.
    """

    variant: str
    keep_fraction: float = 0.3
    noise_rel: float = None
    blur_half_width: int = 4
    blur_std: float = 0.25
    blur_std_relative: bool = True
    factor: int = 4
    quality: int = 10

    def noise_level(self):
        if self.noise_rel is not None:
            return self.noise_rel
        return {"denoise": 0.1, "deconv": 0.025}.get(self.variant, 0.0)


def make_rng(seed):
    """Counter-based (Philox) generator; identical streams on every platform."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def simulate_corruption(truth, recipe, seed):
    """Build the :class:`ProblemSpec` for corrupted observations of `truth`."""
    truth = as_grid(truth, "ground truth")
    if recipe.variant not in VARIANTS:
        raise ValueError(f"unknown variant {recipe.variant!r}")
    rng = make_rng(seed)
    v = recipe.variant
    noise = recipe.noise_level()
    if noise < 0:
        raise ValueError("noise level must be >= 0")
    meta = {"seed": int(seed)}

    def noisy(clean):
        if noise == 0:
            return clean
        span = float(np.ptp(clean))
        return clean + noise * span * rng.standard_normal(clean.shape)

    if v == "denoise":
        return ProblemSpec("denoise", y=noisy(truth.copy()), meta=meta)
    if v == "inpaint":
        if not 0 < recipe.keep_fraction <= 1:
            raise ValueError("keep_fraction must lie in (0, 1]")
        mask = (rng.random(truth.shape) < recipe.keep_fraction).astype(np.float64)
        return ProblemSpec("inpaint", y=mask * truth, mask=mask, meta=meta)
    if v == "deconv":
        k = gaussian_kernel(recipe.blur_half_width, recipe.blur_std, recipe.blur_std_relative)
        clean = convolve(truth, k, mode="same", method="direct")
        return ProblemSpec("deconv", y=noisy(clean), blur=k, meta=meta)
    if v == "superres":
        return ProblemSpec("superres", y=block_average(truth, recipe.factor), factor=recipe.factor, meta=meta)
    table = quality_table(recipe.quality)
    return ProblemSpec("jpeg", spectrum=quantize(truth, table), meta=meta)


# --- sidecar file ------------------------------------------------------------

_MAGIC = "GENREG-QSPEC 1"


def save_spectrum(spec, path, binary=True):
    """Write a quantized spectrum.

    The text header holds the magic line, ``dims Nx Ny``, ``table`` with
    64 reals, and ``format binary|text``; the indices follow, block by
    block in row-major order, either as little-endian int32 or as one
    line of 64 integers per block.
    """
    nx, ny = spec.image_shape
    header = [
        _MAGIC,
        f"dims {nx} {ny}",
        "table " + " ".join(repr(float(q)) for q in spec.table.ravel()),
        "format " + ("binary" if binary else "text"),
        "end",
    ]
    flat = spec.indices.reshape(-1, BLOCK * BLOCK)
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(struct.pack("<%di" % flat.size, *flat.ravel().tolist()))
        else:
            for row in flat:
                fh.write((" ".join(str(int(k)) for k in row) + "\n").encode("ascii"))


def load_spectrum(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = []
    pos = 0
    while True:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode("ascii").strip()
        pos = end + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a quantized-spectrum file")
    fields = {ln.split(" ", 1)[0]: ln.split(" ", 1)[1] for ln in lines[1:]}
    nx, ny = (int(x) for x in fields["dims"].split())
    table = np.array([float(x) for x in fields["table"].split()])
    if table.size != BLOCK * BLOCK:
        raise ValueError(f"{path}: table needs 64 entries")
    bx, by = nx // BLOCK, ny // BLOCK
    count = bx * by * BLOCK * BLOCK
    body = raw[pos:]
    if fields["format"] == "binary":
        idx = np.frombuffer(body, dtype="<i4", count=count).astype(np.int64)
    else:
        idx = np.array(body.split(), dtype=np.int64)
        if idx.size != count:
            raise ValueError(f"{path}: expected {count} indices, found {idx.size}")
    return QuantizedSpectrum(idx.reshape(bx, by, BLOCK, BLOCK), table)
